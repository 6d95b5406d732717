#pragma once

#include "dialscm/checkpoint.hpp"
#include "dialscm/conversation.hpp"
#include "dialscm/rng.hpp"
#include "dialscm/skeleton.hpp"
#include "dialscm/synthetic.hpp"
#include "dialscm/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dialscm {

enum class LossMode { Kl, Bce };

std::string loss_mode_name(LossMode mode);
LossMode loss_mode_from_name(const std::string& name);

struct ModelConfig {
    int n_layers = 1;
    int hidden_size = 300;
    int implicit_cause_size = 192;
    int input_size = 50; // width of the per-utterance embedding rows
    int emotion_classes = 2;
    double dropout = 0.3;
    double learning_rate = 3e-5;
    int batch_size = 32;
    int epochs = 60;
    SkeletonVariant skeleton_variant = SkeletonVariant::VI;
    int k = 2;
    bool use_gru = false;
    LossMode loss_mode = LossMode::Kl;
    bool use_decoder = true;
    double attention_epsilon = 1e-6;
    bool stop_grad_decoder_adjacency = false;
    // Identity activations and identity layer/MLP maps; the adjacency is still
    // produced by attention (or an override). Requires square dimensions.
    bool linear_mode = false;

    void validate() const;
    static ModelConfig desk_profile(); // small dims + fast optimizer settings
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text); // unknown keys rejected

struct ModelState {
    std::vector<Tensor> attn_row; // per encoder layer, d_l x 1
    std::vector<Tensor> attn_col;
    std::vector<Tensor> agg_w;    // per encoder layer, d_l x d_{l+1}
    std::vector<Tensor> dec_m;    // per decoder layer
    Tensor enc_w1, enc_b1, enc_w2, enc_b2; // encoder MLP: hidden -> implicit
    Tensor dec_w1, dec_b1, dec_w2, dec_b2; // decoder MLP: hidden -> input
    std::vector<GruParams> gru;            // per decoder layer when use_gru
    std::vector<Tensor> gru_proj;          // self-attention context -> hidden
    Tensor emo_w, emo_b; // shared emotion head over input-width rows
    Tensor aux_w, aux_b; // encoder-path emotion head used when use_decoder=false
};

ModelState init_state(const ModelConfig& config, std::uint64_t seed);

// Stable enumeration shared by the optimizer, serialization, and gradient
// checks; names align index-for-index with parameter_handles.
std::vector<Tensor*> parameter_handles(ModelState& state);
std::vector<std::string> parameter_names(const ModelConfig& config);

// Re-registers every parameter on the tape so ops record gradients.
ModelState bind_to_tape(const ModelState& state, Tape& tape);

Checkpoint state_to_checkpoint(const ModelConfig& config, const ModelState& state,
                               const std::string& extra_meta_json = "{}");
std::pair<ModelConfig, ModelState> state_from_checkpoint(const Checkpoint& checkpoint);

struct ForwardOutput {
    Tensor A;     // [source][target]; nonempty columns sum to 1, diagonal 0
    Tensor E;     // n x implicit_cause_size
    Tensor H_hat; // n x input_size (zeros when use_decoder=false)
    Tensor emotion_logits_H;
    Tensor emotion_logits_H_hat;
};

struct EncodeResult {
    Tensor A;
    Tensor E;
    Tensor H_final; // last aggregation output, before the MLP head
};

// A_{i,t} = LeakyReLU(e_{i,t}) / sum_{j in rel_t} LeakyReLU(e_{j,t}) with
// e = row_scores(i) + col_scores(t); degenerate columns are shifted first.
Tensor attention_adjacency(const Tensor& h, const std::vector<std::uint8_t>& skeleton_mask,
                           const Tensor& w_row, const Tensor& w_col, double epsilon);

EncodeResult encode(const Tensor& h0, const std::vector<std::uint8_t>& skeleton_mask,
                    const ModelConfig& config, const ModelState& state,
                    Rng* dropout_rng = nullptr, const Tensor* adjacency_override = nullptr);

Tensor decode(const Tensor& a, const Tensor& e, const std::vector<std::uint8_t>& skeleton_mask,
              const ModelConfig& config, const ModelState& state, Rng* dropout_rng = nullptr);

// dropout_rng non-null enables dropout (training); null is evaluation mode.
ForwardOutput forward(const SyntheticSample& sample, const ModelConfig& config,
                      const ModelState& state, Rng* dropout_rng = nullptr,
                      const Tensor* adjacency_override = nullptr);

// sum_t sum_e p_e(hat) * log(p_e(hat) / p_e(ref)); the reference side is a
// fixed target (no gradient).
Tensor kl_auxiliary_loss(const Tensor& logits_h_hat, const Tensor& logits_h);
Tensor bce_auxiliary_loss(const Tensor& logits_h_hat, const Tensor& logits_h);

std::vector<int> emotion_labels(const Conversation& conv); // 1 = labeled utterance

struct LossTerms {
    Tensor total; // mean emotion CE on both paths + auxiliary term / n
    Tensor aux;   // unscaled auxiliary loss (KL or BCE)
};

LossTerms total_loss(const ForwardOutput& out, const std::vector<int>& labels,
                     const ModelConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_kl = 0.0;
    double probe_acc_e = 0.0;
    double probe_acc_hhat = 0.0;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochMetrics> history;
};

std::string metrics_to_csv(const std::vector<EpochMetrics>& history);

// Deterministic given seed. out_dir, when nonempty, receives checkpoint.json
// (+ sidecar) and metrics.csv. Non-finite loss aborts with epoch/batch.
TrainResult train(const SyntheticCorpus& corpus, const ModelConfig& config, std::uint64_t seed,
                  const std::string& out_dir = "");

} // namespace dialscm
