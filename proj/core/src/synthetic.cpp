#include "dialscm/synthetic.hpp"

#include "dialscm/error.hpp"
#include "dialscm/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

namespace dialscm {

namespace {

void require_range(double lo, double hi, const char* what) {
    if (!(lo <= hi)) {
        throw ValidationError(std::string(what) + " range is not well-ordered");
    }
}

std::size_t cell(int row, int col, int width) {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
}

double draw(const NoiseSpec& spec, Rng& rng) {
    if (spec.family == NoiseSpec::Family::Gaussian) {
        return rng.gaussian(spec.param_a, spec.param_b);
    }
    return rng.uniform(spec.param_a, spec.param_b);
}

std::string split_of_id(const std::string& id) {
    const std::size_t dash = id.find('-');
    if (dash == std::string::npos) {
        throw ValidationError("sample id '" + id + "' carries no split prefix");
    }
    const std::string prefix = id.substr(0, dash);
    if (prefix != "train" && prefix != "val" && prefix != "test") {
        throw ValidationError("sample id '" + id + "' has unknown split prefix");
    }
    return prefix;
}

nlohmann::json matrix_to_json(const std::vector<double>& values, int rows, int cols) {
    nlohmann::json out = nlohmann::json::array();
    for (int r = 0; r < rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < cols; ++c) row.push_back(values[cell(r, c, cols)]);
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<double> matrix_from_json(const nlohmann::json& j, int rows, int cols,
                                     const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw ValidationError(std::string(what) + " has wrong row count");
    }
    std::vector<double> values(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        const nlohmann::json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<int>(row.size()) != cols) {
            throw ValidationError(std::string(what) + " has wrong column count");
        }
        for (int c = 0; c < cols; ++c) {
            values[cell(r, c, cols)] = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return values;
}

} // namespace

void SyntheticConfig::validate() const {
    if (dimension < 1) throw ValidationError("dimension must be at least 1");
    emotion_noise.validate();
    non_emotion_noise.validate();
    require_range(causal_weight_lo, causal_weight_hi, "causal weight");
    require_range(non_causal_weight_lo, non_causal_weight_hi, "non-causal weight");
    if (perturbation) perturbation->validate();
    if (splits.train < 0 || splits.val < 0 || splits.test < 0) {
        throw ValidationError("split sizes must be non-negative");
    }
    if (min_length < 1 || max_length < min_length) {
        throw ValidationError("template length bounds must satisfy 1 <= min <= max");
    }
    if (emotion_rate < 0.0 || emotion_rate > 1.0) {
        throw ValidationError("emotion rate must lie in [0,1]");
    }
}

double SyntheticSample::vector_at(int utterance, int dim) const {
    return vectors[cell(utterance - 1, dim, dimension)];
}

double SyntheticSample::implicit_cause_at(int utterance, int dim) const {
    return implicit_causes[cell(utterance - 1, dim, dimension)];
}

double SyntheticSample::weight(int source, int target) const {
    return weights[cell(source - 1, target - 1, conversation.size())];
}

SyntheticSample generate_sample(const Conversation& tmpl, const SyntheticConfig& config,
                                std::uint64_t seed) {
    config.validate();
    tmpl.validate();
    const int n = tmpl.size();
    if (n < 1) throw ValidationError("template conversation is empty");
    const int dim = config.dimension;

    const Rng root(seed);
    Rng cause_rng = root.derive(0);
    Rng weight_rng = root.derive(1);
    Rng perturb_rng = root.derive(2);

    SyntheticSample sample;
    sample.conversation = tmpl;
    sample.dimension = dim;
    sample.perturbed = config.perturbation.has_value();
    sample.implicit_causes.resize(static_cast<std::size_t>(n) * dim);
    sample.vectors.assign(static_cast<std::size_t>(n) * dim, 0.0);
    sample.weights.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);

    for (int i = 0; i < n; ++i) {
        const NoiseSpec& spec =
            tmpl.has_emotion(i + 1) ? config.emotion_noise : config.non_emotion_noise;
        for (int d = 0; d < dim; ++d) {
            sample.implicit_causes[cell(i, d, dim)] = draw(spec, cause_rng);
        }
    }

    std::set<std::pair<int, int>> labeled; // (turn, cause), strictly earlier causes
    for (const EcpPair& p : tmpl.ecp) {
        if (p.cause < p.turn) labeled.insert({p.turn, p.cause});
    }

    // Influence weights for every ordered pair of an earlier and a later
    // turn: strong band when the pair is a labeled cause, weak band
    // otherwise. Self-influence stays zero.
    for (int target = 2; target <= n; ++target) {
        for (int source = 1; source < target; ++source) {
            const bool causal = labeled.count({target, source}) > 0;
            const double lo = causal ? config.causal_weight_lo : config.non_causal_weight_lo;
            const double hi = causal ? config.causal_weight_hi : config.non_causal_weight_hi;
            sample.weights[cell(source - 1, target - 1, n)] = weight_rng.uniform(lo, hi);
        }
    }

    // Turns are already in causal order, so one forward pass realizes
    // U_i = sum_j alpha_{j,i} U_j + E_i.
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dim; ++d) {
            double value = sample.implicit_causes[cell(i, d, dim)];
            for (int j = 0; j < i; ++j) {
                value += sample.weights[cell(j, i, n)] * sample.vectors[cell(j, d, dim)];
            }
            sample.vectors[cell(i, d, dim)] = value;
        }
    }

    if (config.perturbation) {
        // One scalar shift per utterance, applied to the realized vector
        // only; it does not propagate to later turns.
        for (int i = 0; i < n; ++i) {
            const double shift = draw(*config.perturbation, perturb_rng);
            for (int d = 0; d < dim; ++d) sample.vectors[cell(i, d, dim)] += shift;
        }
    }

    return sample;
}

Conversation synthesize_template(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int span = config.max_length - config.min_length + 1;
    const int n = config.min_length + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    const int opening_speaker = static_cast<int>(rng.below(2));

    Conversation conv;
    conv.utterances.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        UtteranceMeta u;
        u.index = i;
        u.speaker = (opening_speaker + i) % 2;
        if (rng.next_unit() < config.emotion_rate) {
            u.emotion = "emotion";
            const int cause = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
            conv.ecp.push_back({i, cause, ""});
        }
        conv.utterances.push_back(std::move(u));
    }
    return conv;
}

SyntheticCorpus generate_corpus(const std::vector<Conversation>& templates,
                                const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    const int total = config.splits.total();
    if (!templates.empty() && static_cast<int>(templates.size()) < total) {
        throw ValidationError("need " + std::to_string(total) + " templates but only " +
                              std::to_string(templates.size()) +
                              " were supplied (or none, to use the synthesizer)");
    }

    SyntheticCorpus corpus;
    corpus.train.reserve(static_cast<std::size_t>(config.splits.train));
    corpus.val.reserve(static_cast<std::size_t>(config.splits.val));
    corpus.test.reserve(static_cast<std::size_t>(config.splits.test));

    for (int index = 0; index < total; ++index) {
        const std::uint64_t sample_seed = mix_seed(seed, static_cast<std::uint64_t>(index));
        const Conversation tmpl =
            templates.empty()
                ? synthesize_template(config, mix_seed(sample_seed, 0))
                : templates[static_cast<std::size_t>(index)];
        SyntheticSample sample = generate_sample(tmpl, config, mix_seed(sample_seed, 1));

        std::string split;
        int ordinal = 0;
        if (index < config.splits.train) {
            split = "train";
            ordinal = index;
        } else if (index < config.splits.train + config.splits.val) {
            split = "val";
            ordinal = index - config.splits.train;
        } else {
            split = "test";
            ordinal = index - config.splits.train - config.splits.val;
        }
        std::ostringstream id;
        id << split << '-' << std::setw(5) << std::setfill('0') << ordinal;
        sample.id = id.str();

        if (split == "train") {
            corpus.train.push_back(std::move(sample));
        } else if (split == "val") {
            corpus.val.push_back(std::move(sample));
        } else {
            corpus.test.push_back(std::move(sample));
        }
    }
    return corpus;
}

std::string sample_to_json_line(const SyntheticSample& sample) {
    const int n = sample.conversation.size();
    nlohmann::json j;
    j["id"] = sample.id;
    nlohmann::json speakers = nlohmann::json::array();
    nlohmann::json emotions = nlohmann::json::array();
    for (const UtteranceMeta& u : sample.conversation.utterances) {
        speakers.push_back(u.speaker);
        if (u.emotion) {
            emotions.push_back(*u.emotion);
        } else {
            emotions.push_back(nullptr);
        }
    }
    j["speakers"] = std::move(speakers);
    j["emotions"] = std::move(emotions);
    nlohmann::json ecp = nlohmann::json::array();
    for (const EcpPair& p : sample.conversation.ecp) ecp.push_back({p.turn, p.cause});
    j["ecp"] = std::move(ecp);
    j["vectors"] = matrix_to_json(sample.vectors, n, sample.dimension);
    j["implicit_causes"] = matrix_to_json(sample.implicit_causes, n, sample.dimension);
    j["weights"] = matrix_to_json(sample.weights, n, n);
    j["perturbed"] = sample.perturbed;
    return j.dump();
}

SyntheticSample sample_from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed sample: ") + e.what());
    }
    try {
        SyntheticSample sample;
        sample.id = j.at("id").get<std::string>();
        const nlohmann::json& speakers = j.at("speakers");
        const nlohmann::json& emotions = j.at("emotions");
        if (!speakers.is_array() || !emotions.is_array() ||
            speakers.size() != emotions.size()) {
            throw ValidationError("speakers and emotions must be arrays of equal length");
        }
        const int n = static_cast<int>(speakers.size());
        for (int i = 0; i < n; ++i) {
            UtteranceMeta u;
            u.index = i + 1;
            u.speaker = speakers[static_cast<std::size_t>(i)].get<int>();
            const nlohmann::json& label = emotions[static_cast<std::size_t>(i)];
            if (!label.is_null()) u.emotion = label.get<std::string>();
            sample.conversation.utterances.push_back(std::move(u));
        }
        for (const auto& pair : j.at("ecp")) {
            if (!pair.is_array() || pair.size() != 2) {
                throw ValidationError("ecp entries must be [turn, cause] pairs");
            }
            sample.conversation.ecp.push_back({pair[0].get<int>(), pair[1].get<int>(), ""});
        }
        sample.conversation.validate();
        const nlohmann::json& vectors = j.at("vectors");
        if (!vectors.is_array() || static_cast<int>(vectors.size()) != n || n == 0) {
            throw ValidationError("vectors row count does not match the conversation");
        }
        sample.dimension = static_cast<int>(vectors[0].size());
        if (sample.dimension < 1) throw ValidationError("vectors must have at least one column");
        sample.vectors = matrix_from_json(vectors, n, sample.dimension, "vectors");
        sample.implicit_causes =
            matrix_from_json(j.at("implicit_causes"), n, sample.dimension, "implicit_causes");
        sample.weights = matrix_from_json(j.at("weights"), n, n, "weights");
        sample.perturbed = j.at("perturbed").get<bool>();
        split_of_id(sample.id);
        return sample;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed sample: ") + e.what());
    }
}

void save_corpus(const SyntheticCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw ValidationError("cannot open '" + path + "' for writing");
    for (const auto* split : {&corpus.train, &corpus.val, &corpus.test}) {
        for (const SyntheticSample& sample : *split) {
            out << sample_to_json_line(sample) << '\n';
        }
    }
    if (!out.good()) throw ValidationError("failed while writing '" + path + "'");
}

SyntheticCorpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw ValidationError("cannot open '" + path + "' for reading");
    SyntheticCorpus corpus;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            SyntheticSample sample = sample_from_json_line(line);
            const std::string split = split_of_id(sample.id);
            if (split == "train") {
                corpus.train.push_back(std::move(sample));
            } else if (split == "val") {
                corpus.val.push_back(std::move(sample));
            } else {
                corpus.test.push_back(std::move(sample));
            }
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
        }
    }
    return corpus;
}

} // namespace dialscm
