#pragma once

#include "dialscm/conversation.hpp"
#include "dialscm/scm.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dialscm {

struct SplitSizes {
    int train = 833;
    int val = 47;
    int test = 225;

    int total() const { return train + val + test; }
};

struct SyntheticConfig {
    int dimension = 50;
    NoiseSpec emotion_noise = NoiseSpec::gaussian(1.0, 1.0);
    NoiseSpec non_emotion_noise = NoiseSpec::gaussian(-1.0, 1.0);
    double causal_weight_lo = 0.7;
    double causal_weight_hi = 1.0;
    double non_causal_weight_lo = 0.0;
    double non_causal_weight_hi = 0.3;
    std::optional<NoiseSpec> perturbation; // typically uniform(-0.25, 0.25)
    SplitSizes splits;
    std::uint64_t seed = 0;

    // Template synthesizer, used when no templates are supplied.
    int min_length = 6;
    int max_length = 12;
    double emotion_rate = 0.3;

    void validate() const;
};

// One generated dialogue: the realized utterance vectors, the latent causes
// that produced them, and the influence weights that mixed them.
struct SyntheticSample {
    std::string id;
    Conversation conversation;
    int dimension = 0;
    std::vector<double> vectors;         // row-major N x dimension
    std::vector<double> implicit_causes; // row-major N x dimension
    std::vector<double> weights;         // row-major N x N, [source*N + target]
    bool perturbed = false;

    int n_utterances() const { return conversation.size(); }
    double vector_at(int utterance, int dim) const;        // 1-based utterance
    double implicit_cause_at(int utterance, int dim) const;
    double weight(int source, int target) const;           // 1-based indices
};

struct SyntheticCorpus {
    std::vector<SyntheticSample> train;
    std::vector<SyntheticSample> val;
    std::vector<SyntheticSample> test;

    int size() const {
        return static_cast<int>(train.size() + val.size() + test.size());
    }
};

// Draws latent causes per emotion label, mixes every earlier utterance into
// each later one (strong weights on labeled cause pairs, weak elsewhere),
// and optionally shifts each utterance by a scalar perturbation afterwards.
SyntheticSample generate_sample(const Conversation& tmpl, const SyntheticConfig& config,
                                std::uint64_t seed);

// Random two-speaker conversation for corpus generation: alternating turns,
// random opening speaker, emotion labels at the configured rate, one cause
// per emotion chosen uniformly among the turn and its predecessors.
Conversation synthesize_template(const SyntheticConfig& config, std::uint64_t seed);

// Fills the configured splits, one derived seed per sample. Supplied
// templates are consumed in order; an empty list switches to the
// synthesizer. Too few templates for the requested sizes is an error.
SyntheticCorpus generate_corpus(const std::vector<Conversation>& templates,
                                const SyntheticConfig& config, std::uint64_t seed);

// JSONL, one sample per line, split recorded in the id prefix.
void save_corpus(const SyntheticCorpus& corpus, const std::string& path);
SyntheticCorpus load_corpus(const std::string& path);

std::string sample_to_json_line(const SyntheticSample& sample);
SyntheticSample sample_from_json_line(const std::string& line);

} // namespace dialscm
