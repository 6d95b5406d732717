#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dialscm/autoencoder.hpp"
#include "dialscm/discrimination.hpp"
#include "dialscm/scm.hpp"
#include "dialscm/synthetic.hpp"

namespace dialscm {

// Three structures a pair predictor must tell apart: a reversed edge, an
// indirect cause along a chain, and two effects of one driver.
enum class ChallengeModel { Reversal, Chain, CommonCause };

std::string challenge_model_name(ChallengeModel m);
ChallengeModel challenge_model_from_name(const std::string& name);

// One scored unit: the ground-truth structure, draws from it, and the
// ordered node pairs a predictor must accept (positives) or reject
// (negatives). `sample` is a conversation-shaped view of the same structure
// for predictors that run on utterance vectors; present only when the
// generating config asks for one.
struct ChallengeInstance {
    std::string id;
    LinearScm scm;
    SampleMatrix samples;
    std::optional<SyntheticSample> sample;
    std::vector<std::pair<int, int>> positives; // 0-based (source, target)
    std::vector<std::pair<int, int>> negatives;
};

struct ChallengeSet {
    ChallengeModel model_type = ChallengeModel::Reversal;
    std::vector<ChallengeInstance> instances;
};

struct ChallengeConfig {
    int n_samples = 5000;   // draws per instance
    double weight_min = 0.7; // structural edge weights, uniform in range
    double weight_max = 1.0;
    // Unit variance either way; gaussian collapses directed verdicts and is
    // offered for degradation studies only.
    NoiseSpec::Family noise_family = NoiseSpec::Family::Uniform;
    // > 0 also materializes the conversation-shaped sample at this width.
    int vector_dimension = 0;

    void validate() const;
};

// Deterministic per seed: instance i draws from an independent child stream,
// so sets of different sizes share a prefix.
ChallengeSet generate_challenges(ChallengeModel model_type, int n_instances,
                                 const ChallengeConfig& config, std::uint64_t seed);

// Accept/reject for one ordered (source, target) pair of one instance.
using PairPredictor =
    std::function<bool(const ChallengeInstance&, std::pair<int, int>)>;

struct PairDecision {
    std::string instance_id;
    std::pair<int, int> pair;
    bool expected_accept = false;
    bool accepted = false;
};

// Percentages of accepted positives and accepted negatives; a discriminating
// predictor drives the first up and the second down. Both recompute exactly
// from the stored decisions.
struct DiscriminabilityScore {
    double pos_pct = 0.0;
    double neg_pct = 0.0;
    std::vector<PairDecision> decisions;
};

DiscriminabilityScore recompute_score(const std::vector<PairDecision>& decisions);

// Runs the predictor over every listed pair of every instance. Scoring is
// pure per instance; the order of evaluation cannot change the score.
// Predictor exceptions are rethrown with the instance id prepended.
DiscriminabilityScore score_challenges(const ChallengeSet& set,
                                       const PairPredictor& predictor);

// Residual-independence predictor: accepts (i, j) when the pairwise verdict
// is "i causes j" and the multivariate screen over the remaining nodes keeps
// i as a direct edge into j. The second check is what rejects indirect
// causes along a chain.
PairPredictor reference_predictor(const DiscriminationConfig& config);

// Attention-mass predictor: accepts (i, j) when the model's final adjacency
// puts more than half the uniform share 0.5/|rel_j| on the edge. Requires
// instances generated with vector_dimension == config.input_size.
PairPredictor learned_predictor(const ModelConfig& config, const ModelState& state);

std::string score_to_json(const DiscriminabilityScore& score, ChallengeModel model_type);

// One projected row of a latent matrix, for external plotting.
struct ProjectionPoint {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    int label = 0;
};

// How well the recovered implicit causes separate emotion from non-emotion
// utterances, against the generator's ground truth as the ceiling. The probe
// trains on the train split and scores on test. A state whose emotion head
// still sits at chance loss has not been trained, so its probe number is
// flagged rather than trusted; probe accuracy itself cannot tell the two
// apart because random features retain the input's separability.
struct RecoveryReport {
    double probe_acc_learned = 0.0;
    double probe_acc_ground_truth = 0.0;
    double mean_ce_h = 0.0; // emotion-head cross entropy on test, chance = ln 2
    bool flagged_untrained = false;
    std::vector<ProjectionPoint> projection; // test-split recovered rows
};

RecoveryReport implicit_cause_recovery(const ModelConfig& config, const ModelState& state,
                                       const SyntheticCorpus& corpus);

std::string recovery_to_json(const RecoveryReport& report);
std::string projection_to_csv(const std::vector<ProjectionPoint>& points);

// Paired probe accuracies on the recovered causes E versus the decoded
// representation, scored only on utterances whose cause pair crosses the
// emotion boundary. A consistent model keeps acc_e close to acc_h_hat.
struct ConsistencyReport {
    double acc_e = 0.0;
    double acc_h_hat = 0.0;
    double gap = 0.0; // acc_e - acc_h_hat
    int scored_utterances = 0;
};

ConsistencyReport emotion_consistency_eval(const ModelConfig& config, const ModelState& state,
                                           const SyntheticCorpus& corpus);

std::string consistency_to_json(const ConsistencyReport& report);

} // namespace dialscm
