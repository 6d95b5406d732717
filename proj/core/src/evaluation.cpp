#include "dialscm/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "dialscm/error.hpp"
#include "dialscm/probe.hpp"
#include "dialscm/rng.hpp"
#include "dialscm/skeleton.hpp"

namespace dialscm {

namespace {

using nlohmann::json;

// Untrained emotion heads emit random confident logits and land far above
// chance cross entropy (measured 2.4+ vs ln 2 = 0.69); trained heads drop
// under 0.8 within a few epochs. Above this band the state looks untrained
// and the recovery numbers are flagged.
constexpr double kUntrainedCeBand = 1.0;

// Mean negative log-likelihood of the labels under row-wise softmax.
double mean_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t row = 0; row < labels.size(); ++row) {
        const int r = static_cast<int>(row);
        double peak = logits.value_at(r, 0);
        for (int c = 1; c < logits.cols(); ++c) peak = std::max(peak, logits.value_at(r, c));
        double sum = 0.0;
        for (int c = 0; c < logits.cols(); ++c) sum += std::exp(logits.value_at(r, c) - peak);
        total -= logits.value_at(r, labels[row]) - peak - std::log(sum);
    }
    return total / static_cast<double>(labels.size());
}

NoiseSpec unit_noise(NoiseSpec::Family family) {
    if (family == NoiseSpec::Family::Uniform) {
        const double half = std::sqrt(3.0);
        return NoiseSpec::uniform(-half, half);
    }
    return NoiseSpec::gaussian(0.0, 1.0);
}

struct Shape {
    int n_nodes = 0;
    std::vector<std::pair<int, int>> edges; // (source, target), also the positives
};

Shape shape_of(ChallengeModel model_type) {
    switch (model_type) {
    case ChallengeModel::Reversal: return {2, {{0, 1}}};
    case ChallengeModel::Chain: return {3, {{0, 1}, {1, 2}}};
    case ChallengeModel::CommonCause: return {3, {{0, 1}, {0, 2}}};
    }
    throw ValidationError("generate_challenges: unknown model type");
}

// Conversation-shaped view of the structure: utterance vectors follow the
// same weights at the requested width, with noise rows drawn around +1 for
// emotion nodes (edge targets) and -1 otherwise, matching the corpus recipe.
SyntheticSample vector_sample(const std::string& id, const LinearScm& scm,
                              const std::vector<std::pair<int, int>>& positives, int dim,
                              Rng& rng) {
    const int n = scm.n_nodes();
    SyntheticSample s;
    s.id = id;
    s.conversation = alternating_conversation(n);
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (const auto& [source, target] : positives) {
        labels[static_cast<std::size_t>(target)] = 1;
        s.conversation.utterances[static_cast<std::size_t>(target)].emotion = "emotion";
        s.conversation.ecp.push_back({target + 1, source + 1, "emotion"});
    }
    s.conversation.validate();
    s.dimension = dim;
    s.implicit_causes.resize(static_cast<std::size_t>(n) * dim);
    for (int t = 0; t < n; ++t) {
        const double mu = labels[static_cast<std::size_t>(t)] == 1 ? 1.0 : -1.0;
        for (int d = 0; d < dim; ++d) {
            s.implicit_causes[static_cast<std::size_t>(t) * dim + d] = rng.gaussian(mu, 1.0);
        }
    }
    const std::vector<double> mix = mixing_matrix(scm); // [node*n + source]
    s.vectors.assign(static_cast<std::size_t>(n) * dim, 0.0);
    for (int t = 0; t < n; ++t) {
        for (int src = 0; src < n; ++src) {
            const double m = mix[static_cast<std::size_t>(t) * n + src];
            if (m == 0.0) continue;
            for (int d = 0; d < dim; ++d) {
                s.vectors[static_cast<std::size_t>(t) * dim + d] +=
                    m * s.implicit_causes[static_cast<std::size_t>(src) * dim + d];
            }
        }
    }
    s.weights.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int src = 0; src < n; ++src) {
        for (int t = 0; t < n; ++t) {
            s.weights[static_cast<std::size_t>(src) * n + t] = scm.weight(src, t);
        }
    }
    return s;
}

std::string instance_id(ChallengeModel model_type, int index) {
    std::string name = challenge_model_name(model_type);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::ostringstream out;
    out << name << '-' << std::setw(5) << std::setfill('0') << index;
    return out.str();
}

// Utterances taking part in a cause pair whose two sides carry different
// emotion labels; 0-based, deduplicated, ascending.
std::vector<int> cross_label_utterances(const SyntheticSample& s) {
    const std::vector<int> labels = emotion_labels(s.conversation);
    std::vector<bool> keep(labels.size(), false);
    for (const EcpPair& p : s.conversation.ecp) {
        const int turn = p.turn - 1;
        const int cause = p.cause - 1;
        if (labels[static_cast<std::size_t>(turn)] == labels[static_cast<std::size_t>(cause)])
            continue;
        keep[static_cast<std::size_t>(turn)] = true;
        keep[static_cast<std::size_t>(cause)] = true;
    }
    std::vector<int> out;
    for (std::size_t u = 0; u < keep.size(); ++u)
        if (keep[u]) out.push_back(static_cast<int>(u));
    return out;
}

std::vector<double> tensor_row(const Tensor& t, int row) {
    std::vector<double> out(static_cast<std::size_t>(t.cols()));
    for (int c = 0; c < t.cols(); ++c) out[static_cast<std::size_t>(c)] = t.value_at(row, c);
    return out;
}

std::vector<double> ground_truth_row(const SyntheticSample& s, int row) {
    std::vector<double> out(static_cast<std::size_t>(s.dimension));
    for (int d = 0; d < s.dimension; ++d)
        out[static_cast<std::size_t>(d)] = s.implicit_causes[static_cast<std::size_t>(row) * s.dimension + d];
    return out;
}

} // namespace

std::string challenge_model_name(ChallengeModel m) {
    switch (m) {
    case ChallengeModel::Reversal: return "Reversal";
    case ChallengeModel::Chain: return "Chain";
    case ChallengeModel::CommonCause: return "CommonCause";
    }
    throw ValidationError("challenge_model_name: unknown model type");
}

ChallengeModel challenge_model_from_name(const std::string& name) {
    if (name == "Reversal") return ChallengeModel::Reversal;
    if (name == "Chain") return ChallengeModel::Chain;
    if (name == "CommonCause") return ChallengeModel::CommonCause;
    throw ValidationError("challenge_model_from_name: unknown model type \"" + name + "\"");
}

void ChallengeConfig::validate() const {
    if (n_samples < 2) throw ValidationError("challenge config: n_samples must be at least 2");
    if (!(weight_min > 0.0) || !(weight_max >= weight_min)) {
        throw ValidationError("challenge config: weights need 0 < weight_min <= weight_max");
    }
    if (vector_dimension < 0) {
        throw ValidationError("challenge config: vector_dimension must be non-negative");
    }
}

ChallengeSet generate_challenges(ChallengeModel model_type, int n_instances,
                                 const ChallengeConfig& config, std::uint64_t seed) {
    if (n_instances < 1) {
        throw ValidationError("generate_challenges: n_instances must be at least 1");
    }
    config.validate();
    const Shape shape = shape_of(model_type);
    const Rng root(seed);

    ChallengeSet set;
    set.model_type = model_type;
    set.instances.reserve(static_cast<std::size_t>(n_instances));
    for (int i = 0; i < n_instances; ++i) {
        Rng r = root.derive(static_cast<std::uint64_t>(i));
        std::vector<double> w(static_cast<std::size_t>(shape.n_nodes) * shape.n_nodes, 0.0);
        for (const auto& [source, target] : shape.edges) {
            w[static_cast<std::size_t>(source) * shape.n_nodes + target] =
                r.uniform(config.weight_min, config.weight_max);
        }
        LinearScm scm(shape.n_nodes, std::move(w),
                      std::vector<NoiseSpec>(static_cast<std::size_t>(shape.n_nodes),
                                             unit_noise(config.noise_family)));
        SampleMatrix samples = simulate(scm, config.n_samples, r.next_u64());

        std::vector<std::pair<int, int>> negatives;
        switch (model_type) {
        case ChallengeModel::Reversal: negatives = {{1, 0}}; break;
        case ChallengeModel::Chain: negatives = {{0, 2}}; break;
        case ChallengeModel::CommonCause:
            negatives = {r.next_unit() < 0.5 ? std::pair<int, int>{1, 2}
                                             : std::pair<int, int>{2, 1}};
            break;
        }

        const std::string id = instance_id(model_type, i);
        std::optional<SyntheticSample> sample;
        if (config.vector_dimension > 0) {
            sample = vector_sample(id, scm, shape.edges, config.vector_dimension, r);
        }
        set.instances.push_back(ChallengeInstance{id, std::move(scm), std::move(samples),
                                                  std::move(sample), shape.edges,
                                                  std::move(negatives)});
    }
    return set;
}

DiscriminabilityScore recompute_score(const std::vector<PairDecision>& decisions) {
    int pos_total = 0, pos_hit = 0, neg_total = 0, neg_hit = 0;
    for (const PairDecision& d : decisions) {
        if (d.expected_accept) {
            ++pos_total;
            pos_hit += d.accepted;
        } else {
            ++neg_total;
            neg_hit += d.accepted;
        }
    }
    DiscriminabilityScore score;
    score.pos_pct = pos_total == 0 ? 0.0 : 100.0 * pos_hit / pos_total;
    score.neg_pct = neg_total == 0 ? 0.0 : 100.0 * neg_hit / neg_total;
    score.decisions = decisions;
    return score;
}

DiscriminabilityScore score_challenges(const ChallengeSet& set,
                                       const PairPredictor& predictor) {
    if (set.instances.empty()) {
        throw ValidationError("score_challenges: empty challenge set");
    }
    if (!predictor) {
        throw ValidationError("score_challenges: predictor is empty");
    }
    std::vector<PairDecision> decisions;
    for (const ChallengeInstance& inst : set.instances) {
        auto decide = [&](std::pair<int, int> pair, bool expected) {
            bool accepted = false;
            try {
                accepted = predictor(inst, pair);
            } catch (const ValidationError& e) {
                throw ValidationError("challenge " + inst.id + ": " + e.what());
            } catch (const NumericError& e) {
                throw NumericError("challenge " + inst.id + ": " + e.what());
            } catch (const std::exception& e) {
                throw NumericError("challenge " + inst.id + ": " + e.what());
            }
            decisions.push_back(PairDecision{inst.id, pair, expected, accepted});
        };
        for (const auto& p : inst.positives) decide(p, true);
        for (const auto& p : inst.negatives) decide(p, false);
    }
    return recompute_score(decisions);
}

PairPredictor reference_predictor(const DiscriminationConfig& config) {
    return [config](const ChallengeInstance& inst, std::pair<int, int> pair) {
        const auto [source, target] = pair;
        const CausalVerdict verdict = discriminate_pair(inst.samples, source, target, config);
        if (verdict.kind != VerdictKind::XCausesY) return false;
        std::vector<int> regressors;
        for (int v = 0; v < inst.samples.n_nodes; ++v)
            if (v != target) regressors.push_back(v);
        if (regressors.size() < 2) return true; // pairwise check is already direct
        const MultivariateReport screen =
            discriminate_multivariate(inst.samples, target, regressors, config);
        for (const EdgeJudgment& edge : screen.edges)
            if (edge.regressor == source) return edge.present;
        return false;
    };
}

PairPredictor learned_predictor(const ModelConfig& config, const ModelState& state) {
    config.validate();
    return [config, state](const ChallengeInstance& inst, std::pair<int, int> pair) {
        if (!inst.sample) {
            throw ValidationError(
                "learned predictor needs instances generated with vector_dimension set");
        }
        const ForwardOutput out = forward(*inst.sample, config, state);
        const int n = out.A.rows();
        const CognSkeleton skeleton =
            build_skeleton(config.skeleton_variant, inst.sample->conversation, config.k);
        const std::vector<std::uint8_t> mask = skeleton_mask(skeleton);
        int rel = 0;
        for (int s = 0; s < n; ++s) rel += mask[static_cast<std::size_t>(s) * n + pair.second] != 0;
        if (rel == 0) return false;
        return out.A.value_at(pair.first, pair.second) > 0.5 / rel;
    };
}

std::string score_to_json(const DiscriminabilityScore& score, ChallengeModel model_type) {
    json decisions = json::array();
    for (const PairDecision& d : score.decisions) {
        decisions.push_back({{"instance", d.instance_id},
                             {"pair", {d.pair.first, d.pair.second}},
                             {"expected_accept", d.expected_accept},
                             {"accepted", d.accepted}});
    }
    const json doc = {{"model_type", challenge_model_name(model_type)},
                      {"pos_pct", score.pos_pct},
                      {"neg_pct", score.neg_pct},
                      {"decisions", decisions}};
    return doc.dump(2);
}

RecoveryReport implicit_cause_recovery(const ModelConfig& config, const ModelState& state,
                                       const SyntheticCorpus& corpus) {
    config.validate();
    if (corpus.train.empty() || corpus.test.empty()) {
        throw ValidationError("implicit_cause_recovery: corpus needs train and test splits");
    }

    std::vector<std::vector<double>> learned_train, learned_test, truth_train, truth_test;
    std::vector<int> labels_train, labels_test;
    std::vector<ProjectionPoint> projection;
    double ce_total = 0.0;
    auto collect = [&](const std::vector<SyntheticSample>& split, bool is_test) {
        for (const SyntheticSample& s : split) {
            const ForwardOutput out = forward(s, config, state);
            const std::vector<int> labels = emotion_labels(s.conversation);
            if (is_test) {
                ce_total += mean_cross_entropy(out.emotion_logits_H, labels) *
                            static_cast<double>(labels.size());
            }
            for (int u = 0; u < s.n_utterances(); ++u) {
                if (is_test) {
                    learned_test.push_back(tensor_row(out.E, u));
                    truth_test.push_back(ground_truth_row(s, u));
                    labels_test.push_back(labels[static_cast<std::size_t>(u)]);
                    projection.push_back(ProjectionPoint{
                        s.id + "#" + std::to_string(u + 1), 0.0, 0.0,
                        labels[static_cast<std::size_t>(u)]});
                } else {
                    learned_train.push_back(tensor_row(out.E, u));
                    truth_train.push_back(ground_truth_row(s, u));
                    labels_train.push_back(labels[static_cast<std::size_t>(u)]);
                }
            }
        }
    };
    collect(corpus.train, false);
    collect(corpus.test, true);

    LinearProbe learned_probe;
    learned_probe.fit(learned_train, labels_train);
    LinearProbe truth_probe;
    truth_probe.fit(truth_train, labels_train);

    RecoveryReport report;
    report.probe_acc_learned = learned_probe.accuracy(learned_test, labels_test);
    report.probe_acc_ground_truth = truth_probe.accuracy(truth_test, labels_test);
    report.mean_ce_h = ce_total / static_cast<double>(labels_test.size());
    report.flagged_untrained = report.mean_ce_h > kUntrainedCeBand;

    const std::vector<std::array<double, 2>> coords = project_2d(learned_test);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        projection[i].x = coords[i][0];
        projection[i].y = coords[i][1];
    }
    report.projection = std::move(projection);
    return report;
}

std::string recovery_to_json(const RecoveryReport& report) {
    const json doc = {{"probe_acc_learned", report.probe_acc_learned},
                      {"probe_acc_ground_truth", report.probe_acc_ground_truth},
                      {"mean_ce_h", report.mean_ce_h},
                      {"flagged_untrained", report.flagged_untrained},
                      {"n_projection_points", report.projection.size()}};
    return doc.dump(2);
}

std::string projection_to_csv(const std::vector<ProjectionPoint>& points) {
    std::ostringstream out;
    out << "id,x,y,label\n" << std::setprecision(10);
    for (const ProjectionPoint& p : points) {
        out << p.id << ',' << p.x << ',' << p.y << ',' << p.label << '\n';
    }
    return out.str();
}

ConsistencyReport emotion_consistency_eval(const ModelConfig& config, const ModelState& state,
                                           const SyntheticCorpus& corpus) {
    config.validate();
    if (!config.use_decoder) {
        throw ValidationError(
            "emotion_consistency_eval: needs a decoded representation to compare against");
    }
    if (corpus.train.empty() || corpus.test.empty()) {
        throw ValidationError("emotion_consistency_eval: corpus needs train and test splits");
    }

    std::vector<std::vector<double>> e_train, h_train, e_test, h_test;
    std::vector<int> labels_train, labels_test;
    for (const SyntheticSample& s : corpus.train) {
        const ForwardOutput out = forward(s, config, state);
        const std::vector<int> labels = emotion_labels(s.conversation);
        for (int u = 0; u < s.n_utterances(); ++u) {
            e_train.push_back(tensor_row(out.E, u));
            h_train.push_back(tensor_row(out.H_hat, u));
            labels_train.push_back(labels[static_cast<std::size_t>(u)]);
        }
    }
    for (const SyntheticSample& s : corpus.test) {
        const ForwardOutput out = forward(s, config, state);
        const std::vector<int> labels = emotion_labels(s.conversation);
        for (int u : cross_label_utterances(s)) {
            e_test.push_back(tensor_row(out.E, u));
            h_test.push_back(tensor_row(out.H_hat, u));
            labels_test.push_back(labels[static_cast<std::size_t>(u)]);
        }
    }
    if (labels_test.empty()) {
        throw ValidationError(
            "emotion_consistency_eval: no cross-label cause pairs in the test split");
    }

    LinearProbe e_probe;
    e_probe.fit(e_train, labels_train);
    LinearProbe h_probe;
    h_probe.fit(h_train, labels_train);

    ConsistencyReport report;
    report.acc_e = e_probe.accuracy(e_test, labels_test);
    report.acc_h_hat = h_probe.accuracy(h_test, labels_test);
    report.gap = report.acc_e - report.acc_h_hat;
    report.scored_utterances = static_cast<int>(labels_test.size());
    return report;
}

std::string consistency_to_json(const ConsistencyReport& report) {
    const json doc = {{"acc_e", report.acc_e},
                      {"acc_h_hat", report.acc_h_hat},
                      {"gap", report.gap},
                      {"scored_utterances", report.scored_utterances}};
    return doc.dump(2);
}

} // namespace dialscm
