// Command-line surface over the pipeline: data generation, skeletons,
// training, pair discrimination, challenge scoring, and embedding export.
// Exit codes: 0 success, 1 validation problem, 2 numeric failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <dialscm/autoencoder.hpp>
#include <dialscm/checkpoint.hpp>
#include <dialscm/conversation.hpp>
#include <dialscm/discrimination.hpp>
#include <dialscm/error.hpp>
#include <dialscm/evaluation.hpp>
#include <dialscm/scm.hpp>
#include <dialscm/skeleton.hpp>
#include <dialscm/synthetic.hpp>

namespace fs = std::filesystem;
using dialscm::NumericError;
using dialscm::ValidationError;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- run config

json noise_to_json(const dialscm::NoiseSpec& spec) {
    const bool gaussian = spec.family == dialscm::NoiseSpec::Family::Gaussian;
    return {{"family", gaussian ? "gaussian" : "uniform"},
            {"a", spec.param_a},
            {"b", spec.param_b}};
}

dialscm::NoiseSpec noise_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError("config: " + where + " must be an object");
    dialscm::NoiseSpec spec;
    bool family_seen = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "family") {
            const std::string name = value.get<std::string>();
            if (name == "gaussian") spec.family = dialscm::NoiseSpec::Family::Gaussian;
            else if (name == "uniform") spec.family = dialscm::NoiseSpec::Family::Uniform;
            else throw ValidationError("config: " + where + ".family must be gaussian or uniform");
            family_seen = true;
        } else if (key == "a") spec.param_a = value.get<double>();
        else if (key == "b") spec.param_b = value.get<double>();
        else throw ValidationError("config: unknown key \"" + where + "." + key + "\"");
    }
    if (!family_seen) throw ValidationError("config: " + where + " needs a family");
    return spec;
}

json default_run_config() {
    const dialscm::SyntheticConfig data;
    const dialscm::ChallengeConfig challenges;
    json j;
    j["data"] = {{"dimension", data.dimension},
                 {"emotion_noise", noise_to_json(data.emotion_noise)},
                 {"non_emotion_noise", noise_to_json(data.non_emotion_noise)},
                 {"causal_weight_lo", data.causal_weight_lo},
                 {"causal_weight_hi", data.causal_weight_hi},
                 {"non_causal_weight_lo", data.non_causal_weight_lo},
                 {"non_causal_weight_hi", data.non_causal_weight_hi},
                 {"perturbation", nullptr},
                 {"splits",
                  {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}}},
                 {"seed", data.seed},
                 {"min_length", data.min_length},
                 {"max_length", data.max_length},
                 {"emotion_rate", data.emotion_rate}};
    j["model"] = json::parse(dialscm::config_to_json(dialscm::ModelConfig{}));
    j["challenges"] = {
        {"n_samples", challenges.n_samples},
        {"weight_min", challenges.weight_min},
        {"weight_max", challenges.weight_max},
        {"noise_family",
         challenges.noise_family == dialscm::NoiseSpec::Family::Uniform ? "uniform" : "gaussian"},
        {"vector_dimension", challenges.vector_dimension}};
    return j;
}

// Overlay, depth-first; the allowlist check happens when sections are read
// back into their typed configs.
void merge_into(json& base, const json& overlay, const std::string& where) {
    if (!overlay.is_object()) {
        throw ValidationError("config: " + (where.empty() ? "document" : where) +
                              " must be a JSON object");
    }
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) {
            throw ValidationError("config: unknown key \"" + path + "\"");
        }
        if (base[key].is_object() && !base[key].empty() && value.is_object()) {
            merge_into(base[key], value, path);
        } else {
            base[key] = value;
        }
    }
}

void apply_set(json& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("--set expects path=value, got \"" + assignment + "\"");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // unquoted strings pass through
    }

    json* node = &config;
    std::istringstream parts(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(parts, key, '.')) keys.push_back(key);
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->contains(keys[i]) || !(*node)[keys[i]].is_object()) {
            throw ValidationError("--set: unknown key \"" + path + "\"");
        }
        node = &(*node)[keys[i]];
    }
    if (keys.empty() || !node->contains(keys.back())) {
        throw ValidationError("--set: unknown key \"" + path + "\"");
    }
    (*node)[keys.back()] = value;
}

json effective_config(const std::string& config_path, const std::vector<std::string>& sets) {
    json config = default_run_config();
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in.good()) throw ValidationError("cannot open config '" + config_path + "'");
        json overlay;
        try {
            overlay = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError(std::string("config: ") + e.what());
        }
        merge_into(config, overlay, "");
    }
    for (const std::string& s : sets) apply_set(config, s);
    return config;
}

dialscm::SyntheticConfig to_synthetic_config(const json& data) {
    dialscm::SyntheticConfig c;
    for (const auto& [key, value] : data.items()) {
        if (key == "dimension") c.dimension = value.get<int>();
        else if (key == "emotion_noise") c.emotion_noise = noise_from_json(value, "data.emotion_noise");
        else if (key == "non_emotion_noise")
            c.non_emotion_noise = noise_from_json(value, "data.non_emotion_noise");
        else if (key == "causal_weight_lo") c.causal_weight_lo = value.get<double>();
        else if (key == "causal_weight_hi") c.causal_weight_hi = value.get<double>();
        else if (key == "non_causal_weight_lo") c.non_causal_weight_lo = value.get<double>();
        else if (key == "non_causal_weight_hi") c.non_causal_weight_hi = value.get<double>();
        else if (key == "perturbation") {
            if (value.is_null()) c.perturbation.reset();
            else c.perturbation = noise_from_json(value, "data.perturbation");
        } else if (key == "splits") {
            for (const auto& [split, count] : value.items()) {
                if (split == "train") c.splits.train = count.get<int>();
                else if (split == "val") c.splits.val = count.get<int>();
                else if (split == "test") c.splits.test = count.get<int>();
                else throw ValidationError("config: unknown key \"data.splits." + split + "\"");
            }
        } else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "min_length") c.min_length = value.get<int>();
        else if (key == "max_length") c.max_length = value.get<int>();
        else if (key == "emotion_rate") c.emotion_rate = value.get<double>();
        else throw ValidationError("config: unknown key \"data." + key + "\"");
    }
    return c;
}

dialscm::ChallengeConfig to_challenge_config(const json& challenges) {
    dialscm::ChallengeConfig c;
    for (const auto& [key, value] : challenges.items()) {
        if (key == "n_samples") c.n_samples = value.get<int>();
        else if (key == "weight_min") c.weight_min = value.get<double>();
        else if (key == "weight_max") c.weight_max = value.get<double>();
        else if (key == "noise_family") {
            const std::string name = value.get<std::string>();
            if (name == "uniform") c.noise_family = dialscm::NoiseSpec::Family::Uniform;
            else if (name == "gaussian") c.noise_family = dialscm::NoiseSpec::Family::Gaussian;
            else throw ValidationError("config: challenges.noise_family must be uniform or gaussian");
        } else if (key == "vector_dimension") c.vector_dimension = value.get<int>();
        else throw ValidationError("config: unknown key \"challenges." + key + "\"");
    }
    return c;
}

dialscm::ModelConfig to_model_config(const json& config) {
    return dialscm::config_from_json(config.at("model").dump());
}

std::string config_hash(const json& config) {
    // FNV-1a over the canonical dump; stable across runs of the same config.
    const std::string text = config.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

// ------------------------------------------------------------------ file IO

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw ValidationError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out.good()) throw ValidationError("failed while writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw ValidationError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_split(const fs::path& path, const std::vector<dialscm::SyntheticSample>& split) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw ValidationError("cannot open '" + path.string() + "' for writing");
    for (const dialscm::SyntheticSample& s : split) out << dialscm::sample_to_json_line(s) << '\n';
    if (!out.good()) throw ValidationError("failed while writing '" + path.string() + "'");
}

std::vector<dialscm::SyntheticSample> read_split(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw ValidationError("cannot open '" + path.string() + "' for reading");
    std::vector<dialscm::SyntheticSample> split;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            split.push_back(dialscm::sample_from_json_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return split;
}

dialscm::SyntheticCorpus read_corpus_dir(const fs::path& dir) {
    dialscm::SyntheticCorpus corpus;
    corpus.train = read_split(dir / "train.jsonl");
    corpus.val = read_split(dir / "val.jsonl");
    corpus.test = read_split(dir / "test.jsonl");
    return corpus;
}

// Node draws as CSV: header names the nodes, one row per sample.
void write_samples_csv(const fs::path& path, const dialscm::SampleMatrix& data) {
    if (data.dim != 1) {
        throw ValidationError("CSV export supports scalar nodes only");
    }
    std::ostringstream out;
    for (int node = 0; node < data.n_nodes; ++node) out << (node ? "," : "") << 'u' << node + 1;
    out << '\n' << std::setprecision(17);
    for (int s = 0; s < data.n_samples; ++s) {
        for (int node = 0; node < data.n_nodes; ++node) {
            out << (node ? "," : "") << data.at(s, node);
        }
        out << '\n';
    }
    write_text(path, out.str());
}

dialscm::SampleMatrix read_samples_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw ValidationError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
    dialscm::SampleMatrix data;
    data.dim = 1;
    data.n_nodes = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    data.provenance = path.string();
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string field;
        int count = 0;
        while (std::getline(fields, field, ',')) {
            try {
                data.values.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw ValidationError(path.string() + ":" + std::to_string(line_number) +
                                      ": not a number: \"" + field + "\"");
            }
            ++count;
        }
        if (count != data.n_nodes) {
            throw ValidationError(path.string() + ":" + std::to_string(line_number) +
                                  ": expected " + std::to_string(data.n_nodes) + " fields");
        }
        ++data.n_samples;
    }
    if (data.n_samples == 0) throw ValidationError(path.string() + ": no data rows");
    return data;
}

dialscm::Conversation conversation_from_file(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    dialscm::Conversation conv;
    try {
        const json& speakers = j.at("speakers");
        const json emotions = j.value("emotions", json::array());
        for (std::size_t i = 0; i < speakers.size(); ++i) {
            dialscm::UtteranceMeta u;
            u.index = static_cast<int>(i) + 1;
            u.speaker = speakers[i].get<int>();
            if (i < emotions.size() && !emotions[i].is_null()) {
                u.emotion = emotions[i].get<std::string>();
            }
            conv.utterances.push_back(std::move(u));
        }
        for (const auto& pair : j.value("ecp", json::array())) {
            conv.ecp.push_back({pair.at(0).get<int>(), pair.at(1).get<int>(), ""});
        }
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    conv.validate();
    return conv;
}

// -------------------------------------------------------------- subcommands

struct GenDataArgs {
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    int perturb = -1; // -1 from config, 0 off, 1 on
    std::vector<std::string> sets;
};

int run_gen_data(const GenDataArgs& args) {
    json config = effective_config(args.config_path, args.sets);
    if (args.seed) config["data"]["seed"] = *args.seed;
    if (args.perturb == 1) {
        config["data"]["perturbation"] = {{"family", "uniform"}, {"a", -0.25}, {"b", 0.25}};
    } else if (args.perturb == 0) {
        config["data"]["perturbation"] = nullptr;
    }
    const dialscm::SyntheticConfig data_config = to_synthetic_config(config["data"]);
    (void)to_model_config(config); // surface typos anywhere in the document
    (void)to_challenge_config(config["challenges"]);

    const dialscm::SyntheticCorpus corpus = generate_corpus({}, data_config, data_config.seed);

    const fs::path out(args.out_dir);
    ensure_dir(out);
    write_split(out / "train.jsonl", corpus.train);
    write_split(out / "val.jsonl", corpus.val);
    write_split(out / "test.jsonl", corpus.test);
    write_text(out / "config.json", config.dump(2) + "\n");
    const json manifest = {{"config_hash", config_hash(config)},
                           {"seed", data_config.seed},
                           {"train", corpus.train.size()},
                           {"val", corpus.val.size()},
                           {"test", corpus.test.size()},
                           {"dimension", data_config.dimension}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << corpus.train.size() << "/" << corpus.val.size() << "/"
              << corpus.test.size() << " samples to " << out.string() << "\n";
    return 0;
}

struct SkeletonArgs {
    std::string variant = "VI", conversation_path, out_path;
    int k = 0;
    bool inclusive_bounds = false;
};

int run_build_skeleton(const SkeletonArgs& args) {
    const dialscm::Conversation conv = conversation_from_file(args.conversation_path);
    const dialscm::CognSkeleton skeleton = dialscm::build_skeleton(
        dialscm::variant_from_name(args.variant), conv, args.k, args.inclusive_bounds);
    write_text(args.out_path, skeleton.to_json() + "\n");
    std::cout << "variant " << args.variant << ", n " << skeleton.n << ": "
              << skeleton.edges.size() << " edges -> " << args.out_path << "\n";
    return 0;
}

struct TrainArgs {
    std::string data_dir, config_path, out_dir;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

int run_train(const TrainArgs& args) {
    json config = effective_config(args.config_path, args.sets);
    const dialscm::ModelConfig model_config = to_model_config(config);
    const dialscm::SyntheticCorpus corpus = read_corpus_dir(args.data_dir);

    const fs::path out(args.out_dir);
    ensure_dir(out);
    const dialscm::TrainResult result = dialscm::train(corpus, model_config, args.seed, out.string());
    write_text(out / "config.json", config.dump(2) + "\n");

    const dialscm::EpochMetrics& last = result.history.back();
    std::ostringstream summary;
    summary << "epochs " << result.history.size() << "\n"
            << "final loss_total " << last.loss_total << "\n"
            << "final loss_kl " << last.loss_kl << "\n"
            << "probe accuracy on E " << last.probe_acc_e << "\n"
            << "probe accuracy on decoded H " << last.probe_acc_hhat << "\n";
    write_text(out / "summary.txt", summary.str());
    std::cout << summary.str();
    return 0;
}

struct SimulateArgs {
    std::string scm_path, out_path;
    int n = 1000;
    std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& args) {
    const dialscm::LinearScm scm = dialscm::LinearScm::from_json(read_text(args.scm_path));
    const dialscm::SampleMatrix data = dialscm::simulate(scm, args.n, args.seed);
    write_samples_csv(args.out_path, data);
    std::cout << "simulated " << data.n_samples << " draws of " << data.n_nodes << " nodes -> "
              << args.out_path << "\n";
    return 0;
}

struct DiscriminateArgs {
    std::string data_path, pairs_path, out_path;
    std::uint64_t seed = 0;
};

int run_discriminate(const DiscriminateArgs& args) {
    const dialscm::SampleMatrix data = read_samples_csv(args.data_path);
    json pairs;
    try {
        pairs = json::parse(read_text(args.pairs_path));
    } catch (const json::exception& e) {
        throw ValidationError(args.pairs_path + ": " + e.what());
    }
    if (!pairs.is_array() || pairs.empty()) {
        throw ValidationError(args.pairs_path + ": expected a non-empty array of [x, y] pairs");
    }
    dialscm::DiscriminationConfig config;
    config.seed = args.seed;

    json verdicts = json::array();
    for (const auto& pair : pairs) {
        if (!pair.is_array() || pair.size() != 2) {
            throw ValidationError(args.pairs_path + ": pairs must be [x, y] index pairs");
        }
        const int x = pair[0].get<int>();
        const int y = pair[1].get<int>();
        const dialscm::CausalVerdict verdict = dialscm::discriminate_pair(data, x, y, config);
        verdicts.push_back(json::parse(dialscm::verdict_to_json(verdict)));
        std::cout << "(u" << x + 1 << ", u" << y + 1 << "): "
                  << dialscm::verdict_name(verdict.kind) << "\n";
    }
    write_text(args.out_path, verdicts.dump(2) + "\n");
    return 0;
}

struct EvalChallengesArgs {
    std::string model_type = "Reversal", predictor = "reference", config_path, out_path;
    int n = 10;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

int run_eval_challenges(const EvalChallengesArgs& args) {
    json config = effective_config(args.config_path, args.sets);
    dialscm::ChallengeConfig challenge_config = to_challenge_config(config["challenges"]);
    const dialscm::ChallengeModel model_type = dialscm::challenge_model_from_name(args.model_type);

    dialscm::PairPredictor predictor;
    if (args.predictor == "reference") {
        dialscm::DiscriminationConfig dconfig;
        dconfig.seed = args.seed;
        predictor = dialscm::reference_predictor(dconfig);
    } else if (args.predictor.rfind("learned:", 0) == 0) {
        const std::string ckpt_path = args.predictor.substr(8);
        const dialscm::Checkpoint ckpt = dialscm::load_checkpoint(ckpt_path);
        auto [model_config, state] = dialscm::state_from_checkpoint(ckpt);
        challenge_config.vector_dimension = model_config.input_size;
        predictor = dialscm::learned_predictor(model_config, std::move(state));
    } else {
        throw ValidationError("--predictor must be reference or learned:CHECKPOINT");
    }

    const dialscm::ChallengeSet set =
        dialscm::generate_challenges(model_type, args.n, challenge_config, args.seed);
    const dialscm::DiscriminabilityScore score = dialscm::score_challenges(set, predictor);
    const std::string report = dialscm::score_to_json(score, model_type);
    if (!args.out_path.empty()) write_text(args.out_path, report + "\n");
    std::cout << args.model_type << " n=" << args.n << ": pos_pct " << score.pos_pct
              << " neg_pct " << score.neg_pct << "\n";
    if (args.out_path.empty()) std::cout << report << "\n";
    return 0;
}

struct ExportArgs {
    std::string ckpt_path, data_dir, out_path, split = "test";
};

int run_export_embeddings(const ExportArgs& args) {
    const dialscm::Checkpoint ckpt = dialscm::load_checkpoint(args.ckpt_path);
    const auto [config, state] = dialscm::state_from_checkpoint(ckpt);
    const dialscm::SyntheticCorpus corpus = read_corpus_dir(args.data_dir);
    const std::vector<dialscm::SyntheticSample>* split = nullptr;
    if (args.split == "train") split = &corpus.train;
    else if (args.split == "val") split = &corpus.val;
    else if (args.split == "test") split = &corpus.test;
    else throw ValidationError("--split must be train, val, or test");

    std::ostringstream out;
    out << "id,label";
    for (int d = 0; d < config.implicit_cause_size; ++d) out << ",e" << d;
    out << '\n' << std::setprecision(17);
    int rows = 0;
    for (const dialscm::SyntheticSample& sample : *split) {
        const dialscm::ForwardOutput fwd = dialscm::forward(sample, config, state);
        const std::vector<int> labels = dialscm::emotion_labels(sample.conversation);
        for (int u = 0; u < sample.n_utterances(); ++u) {
            out << sample.id << '#' << u + 1 << ',' << labels[static_cast<std::size_t>(u)];
            for (int d = 0; d < fwd.E.cols(); ++d) out << ',' << fwd.E.value_at(u, d);
            out << '\n';
            ++rows;
        }
    }
    write_text(args.out_path, out.str());
    std::cout << "exported " << rows << " rows (" << args.split << ") -> " << args.out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dialogue SCM pipeline"};
    app.set_version_flag("--version", std::string("dialscm 0.1.0 (checkpoint format v") +
                                          std::to_string(dialscm::checkpoint_format_version()) +
                                          ")");
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen_cmd->add_option("--config", gen.config_path, "run config JSON");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    std::uint64_t gen_seed = 0;
    CLI::Option* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "generator seed");
    gen_cmd->add_flag(
        "--perturb{1},--no-perturb{0}", gen.perturb,
        "force the +-0.25 uniform perturbation on or off (default: per config)");
    gen_cmd->add_option("--set", gen.sets, "override a config path, e.g. data.dimension=8");

    SkeletonArgs skel;
    CLI::App* skel_cmd = app.add_subcommand("build-skeleton", "emit a hypothesis-space skeleton");
    skel_cmd->add_option("--variant", skel.variant, "skeleton variant I..VI")->required();
    skel_cmd->add_option("--k", skel.k, "window size, variants IV and VI");
    skel_cmd->add_option("--conversation", skel.conversation_path, "conversation JSON file")
        ->required();
    skel_cmd->add_option("--out", skel.out_path, "output JSON file")->required();
    skel_cmd->add_flag("--inclusive-bounds", skel.inclusive_bounds,
                       "include the generating loops' boundary turns");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train the causal autoencoder");
    train_cmd->add_option("--data", train_args.data_dir, "corpus directory from gen-data")
        ->required();
    train_cmd->add_option("--config", train_args.config_path, "run config JSON");
    train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
    train_cmd->add_option("--seed", train_args.seed, "training seed");
    train_cmd->add_option("--set", train_args.sets, "override a config path");

    SimulateArgs sim;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "draw samples from a structural model");
    sim_cmd->add_option("--scm", sim.scm_path, "structural model JSON file")->required();
    sim_cmd->add_option("--n", sim.n, "number of draws");
    sim_cmd->add_option("--seed", sim.seed, "noise seed");
    sim_cmd->add_option("--out", sim.out_path, "output CSV")->required();

    DiscriminateArgs disc;
    CLI::App* disc_cmd = app.add_subcommand("discriminate", "classify node pairs causally");
    disc_cmd->add_option("--data", disc.data_path, "node draws CSV (from simulate)")->required();
    disc_cmd->add_option("--pairs", disc.pairs_path, "JSON array of 0-based [x, y] pairs")
        ->required();
    disc_cmd->add_option("--out", disc.out_path, "output JSON")->required();
    disc_cmd->add_option("--seed", disc.seed, "permutation seed");

    EvalChallengesArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval-challenges", "score a predictor on challenges");
    eval_cmd->add_option("--model-type", eval.model_type, "Reversal, Chain, or CommonCause")
        ->required();
    eval_cmd->add_option("--n", eval.n, "instances to generate")->required();
    eval_cmd->add_option("--predictor", eval.predictor, "reference or learned:CHECKPOINT");
    eval_cmd->add_option("--config", eval.config_path, "run config JSON");
    eval_cmd->add_option("--seed", eval.seed, "generation and test seed");
    eval_cmd->add_option("--out", eval.out_path, "output JSON (default: stdout)");
    eval_cmd->add_option("--set", eval.sets, "override a config path");

    ExportArgs exp;
    CLI::App* exp_cmd = app.add_subcommand("export-embeddings", "dump recovered causes as CSV");
    exp_cmd->add_option("--ckpt", exp.ckpt_path, "checkpoint JSON")->required();
    exp_cmd->add_option("--data", exp.data_dir, "corpus directory")->required();
    exp_cmd->add_option("--out", exp.out_path, "output CSV")->required();
    exp_cmd->add_option("--split", exp.split, "train, val, or test (default test)");

    try {
        app.parse(argc, argv);
        if (gen_cmd->parsed()) {
            if (gen_seed_opt->count() > 0) gen.seed = gen_seed;
            return run_gen_data(gen);
        }
        if (skel_cmd->parsed()) return run_build_skeleton(skel);
        if (train_cmd->parsed()) return run_train(train_args);
        if (sim_cmd->parsed()) return run_simulate(sim);
        if (disc_cmd->parsed()) return run_discriminate(disc);
        if (eval_cmd->parsed()) return run_eval_challenges(eval);
        if (exp_cmd->parsed()) return run_export_embeddings(exp);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
