#include "dialscm/autoencoder.hpp"

#include "dialscm/error.hpp"
#include "dialscm/probe.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dialscm {

namespace {

constexpr double kLeakySlope = 0.01;

int encoder_in_width(const ModelConfig& c, int layer) {
    return layer == 0 ? c.input_size : c.hidden_size;
}

int decoder_in_width(const ModelConfig& c, int layer) {
    return layer == 0 ? c.implicit_cause_size : c.hidden_size;
}

Tensor gaussian_tensor(std::vector<int> shape, double scale, Rng& rng) {
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    std::vector<double> v(total);
    for (double& x : v) x = scale * rng.gaussian();
    return Tensor(std::move(shape), std::move(v));
}

Tensor xavier(int rows, int cols, Rng& rng) {
    return gaussian_tensor({rows, cols}, std::sqrt(2.0 / (rows + cols)), rng);
}

Tensor mlp_head(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                const Tensor& b2, double drop, Rng* rng) {
    Tensor h = mlp_layer(x, w1, b1);
    if (rng && drop > 0.0) h = dropout(h, drop, *rng);
    return add(matmul(h, w2), b2);
}

// mask is [source][target]; the GRU state attends each row t over its
// predecessor set, so the attention mask is the transpose.
std::vector<std::uint8_t> predecessor_mask(const std::vector<std::uint8_t>& mask, int n) {
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(t) * n + j] = mask[static_cast<std::size_t>(j) * n + t];
        }
    }
    return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels, int classes) {
    const int n = static_cast<int>(labels.size());
    std::vector<double> onehot(static_cast<std::size_t>(n) * classes, 0.0);
    for (int t = 0; t < n; ++t) {
        if (labels[t] < 0 || labels[t] >= classes) {
            throw ValidationError("total_loss: label out of range");
        }
        onehot[static_cast<std::size_t>(t) * classes + labels[t]] = 1.0;
    }
    const Tensor mask({n, classes}, std::move(onehot));
    return scalar_mul(reduce_sum(mul(mask, log_softmax(logits, 1))), -1.0 / n);
}

class Adam {
public:
    Adam(double lr, std::size_t n_params) : lr_(lr), m_(n_params), v_(n_params) {}

    void step(const std::vector<Tensor*>& params,
              const std::vector<std::vector<double>>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(0.9, t_);
        const double bc2 = 1.0 - std::pow(0.999, t_);
        for (std::size_t p = 0; p < params.size(); ++p) {
            std::vector<double> values = params[p]->values();
            std::vector<double>& m = m_[p];
            std::vector<double>& v = v_[p];
            if (m.empty()) m.assign(values.size(), 0.0);
            if (v.empty()) v.assign(values.size(), 0.0);
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grads[p][i];
                m[i] = 0.9 * m[i] + 0.1 * g;
                v[i] = 0.999 * v[i] + 0.001 * g * g;
                values[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
            }
            *params[p] = Tensor(params[p]->shape(), std::move(values));
        }
    }

private:
    double lr_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace

std::string loss_mode_name(LossMode mode) { return mode == LossMode::Kl ? "kl" : "bce"; }

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "kl") return LossMode::Kl;
    if (name == "bce") return LossMode::Bce;
    throw ValidationError("unknown loss mode: " + name);
}

void ModelConfig::validate() const {
    if (n_layers < 1) throw ValidationError("config: n_layers must be >= 1");
    if (hidden_size < 1) throw ValidationError("config: hidden_size must be >= 1");
    if (implicit_cause_size < 1) throw ValidationError("config: implicit_cause_size must be >= 1");
    if (input_size < 1) throw ValidationError("config: input_size must be >= 1");
    if (emotion_classes < 2) throw ValidationError("config: emotion_classes must be >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("config: dropout must be in [0,1)");
    if (!(learning_rate > 0.0)) throw ValidationError("config: learning_rate must be positive");
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
    if (skeleton_variant == SkeletonVariant::I) {
        throw ValidationError("config: skeleton variant I has no incoming-edge structure to learn");
    }
    if ((skeleton_variant == SkeletonVariant::IV || skeleton_variant == SkeletonVariant::VI) &&
        k < 1) {
        throw ValidationError("config: window size k must be >= 1 for variants IV and VI");
    }
    if (!(attention_epsilon > 0.0)) {
        throw ValidationError("config: attention_epsilon must be positive");
    }
    if (linear_mode &&
        (hidden_size != input_size || implicit_cause_size != input_size)) {
        throw ValidationError("config: linear_mode requires input, hidden, and implicit sizes to match");
    }
}

ModelConfig ModelConfig::desk_profile() {
    ModelConfig c;
    c.hidden_size = 32;
    c.implicit_cause_size = 16;
    c.input_size = 8;
    c.epochs = 10;
    c.batch_size = 8;
    c.learning_rate = 1e-2;
    return c;
}

std::string config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["n_layers"] = c.n_layers;
    j["hidden_size"] = c.hidden_size;
    j["implicit_cause_size"] = c.implicit_cause_size;
    j["input_size"] = c.input_size;
    j["emotion_classes"] = c.emotion_classes;
    j["dropout"] = c.dropout;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["skeleton_variant"] = variant_name(c.skeleton_variant);
    j["k"] = c.k;
    j["use_gru"] = c.use_gru;
    j["loss_mode"] = loss_mode_name(c.loss_mode);
    j["use_decoder"] = c.use_decoder;
    j["attention_epsilon"] = c.attention_epsilon;
    j["stop_grad_decoder_adjacency"] = c.stop_grad_decoder_adjacency;
    j["linear_mode"] = c.linear_mode;
    return j.dump(2);
}

ModelConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "n_layers") c.n_layers = value.get<int>();
            else if (key == "hidden_size") c.hidden_size = value.get<int>();
            else if (key == "implicit_cause_size") c.implicit_cause_size = value.get<int>();
            else if (key == "input_size") c.input_size = value.get<int>();
            else if (key == "emotion_classes") c.emotion_classes = value.get<int>();
            else if (key == "dropout") c.dropout = value.get<double>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "epochs") c.epochs = value.get<int>();
            else if (key == "skeleton_variant") c.skeleton_variant = variant_from_name(value.get<std::string>());
            else if (key == "k") c.k = value.get<int>();
            else if (key == "use_gru") c.use_gru = value.get<bool>();
            else if (key == "loss_mode") c.loss_mode = loss_mode_from_name(value.get<std::string>());
            else if (key == "use_decoder") c.use_decoder = value.get<bool>();
            else if (key == "attention_epsilon") c.attention_epsilon = value.get<double>();
            else if (key == "stop_grad_decoder_adjacency") c.stop_grad_decoder_adjacency = value.get<bool>();
            else if (key == "linear_mode") c.linear_mode = value.get<bool>();
            else throw ValidationError("config: unknown key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

ModelState init_state(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelState s;
    for (int l = 0; l < config.n_layers; ++l) {
        const int d_in = encoder_in_width(config, l);
        s.attn_row.push_back(gaussian_tensor({d_in, 1}, 1.0 / std::sqrt(d_in), rng));
        s.attn_col.push_back(gaussian_tensor({d_in, 1}, 1.0 / std::sqrt(d_in), rng));
        s.agg_w.push_back(xavier(d_in, config.hidden_size, rng));
    }
    s.enc_w1 = xavier(config.hidden_size, config.hidden_size, rng);
    s.enc_b1 = Tensor::zeros({config.hidden_size});
    s.enc_w2 = xavier(config.hidden_size, config.implicit_cause_size, rng);
    s.enc_b2 = Tensor::zeros({config.implicit_cause_size});
    for (int l = 0; l < config.n_layers; ++l) {
        s.dec_m.push_back(xavier(decoder_in_width(config, l), config.hidden_size, rng));
    }
    s.dec_w1 = xavier(config.hidden_size, config.hidden_size, rng);
    s.dec_b1 = Tensor::zeros({config.hidden_size});
    s.dec_w2 = xavier(config.hidden_size, config.input_size, rng);
    s.dec_b2 = Tensor::zeros({config.input_size});
    if (config.use_gru) {
        const int h = config.hidden_size;
        for (int l = 0; l < config.n_layers; ++l) {
            GruParams g;
            g.update_w = xavier(h, h, rng);
            g.update_u = xavier(h, h, rng);
            g.update_b = Tensor::zeros({h});
            g.reset_w = xavier(h, h, rng);
            g.reset_u = xavier(h, h, rng);
            g.reset_b = Tensor::zeros({h});
            g.cand_w = xavier(h, h, rng);
            g.cand_u = xavier(h, h, rng);
            g.cand_b = Tensor::zeros({h});
            s.gru.push_back(std::move(g));
            s.gru_proj.push_back(xavier(decoder_in_width(config, l), h, rng));
        }
    }
    s.emo_w = xavier(config.input_size, config.emotion_classes, rng);
    s.emo_b = Tensor::zeros({config.emotion_classes});
    s.aux_w = xavier(config.implicit_cause_size, config.emotion_classes, rng);
    s.aux_b = Tensor::zeros({config.emotion_classes});
    return s;
}

std::vector<Tensor*> parameter_handles(ModelState& s) {
    std::vector<Tensor*> out;
    for (Tensor& t : s.attn_row) out.push_back(&t);
    for (Tensor& t : s.attn_col) out.push_back(&t);
    for (Tensor& t : s.agg_w) out.push_back(&t);
    out.push_back(&s.enc_w1);
    out.push_back(&s.enc_b1);
    out.push_back(&s.enc_w2);
    out.push_back(&s.enc_b2);
    for (Tensor& t : s.dec_m) out.push_back(&t);
    out.push_back(&s.dec_w1);
    out.push_back(&s.dec_b1);
    out.push_back(&s.dec_w2);
    out.push_back(&s.dec_b2);
    for (GruParams& g : s.gru) {
        out.push_back(&g.update_w);
        out.push_back(&g.update_u);
        out.push_back(&g.update_b);
        out.push_back(&g.reset_w);
        out.push_back(&g.reset_u);
        out.push_back(&g.reset_b);
        out.push_back(&g.cand_w);
        out.push_back(&g.cand_u);
        out.push_back(&g.cand_b);
    }
    for (Tensor& t : s.gru_proj) out.push_back(&t);
    out.push_back(&s.emo_w);
    out.push_back(&s.emo_b);
    out.push_back(&s.aux_w);
    out.push_back(&s.aux_b);
    return out;
}

std::vector<std::string> parameter_names(const ModelConfig& config) {
    std::vector<std::string> out;
    auto layer_names = [&](const std::string& base) {
        for (int l = 0; l < config.n_layers; ++l) out.push_back(base + "." + std::to_string(l));
    };
    layer_names("attn_row");
    layer_names("attn_col");
    layer_names("agg_w");
    out.insert(out.end(), {"enc_mlp.w1", "enc_mlp.b1", "enc_mlp.w2", "enc_mlp.b2"});
    layer_names("dec_m");
    out.insert(out.end(), {"dec_mlp.w1", "dec_mlp.b1", "dec_mlp.w2", "dec_mlp.b2"});
    if (config.use_gru) {
        for (int l = 0; l < config.n_layers; ++l) {
            const std::string base = "gru." + std::to_string(l) + ".";
            for (const char* f : {"update_w", "update_u", "update_b", "reset_w", "reset_u",
                                  "reset_b", "cand_w", "cand_u", "cand_b"}) {
                out.push_back(base + f);
            }
        }
        layer_names("gru_proj");
    }
    out.insert(out.end(), {"emotion_head.w", "emotion_head.b", "aux_head.w", "aux_head.b"});
    return out;
}

ModelState bind_to_tape(const ModelState& state, Tape& tape) {
    ModelState bound = state;
    for (Tensor* t : parameter_handles(bound)) *t = tape.variable(*t);
    return bound;
}

Checkpoint state_to_checkpoint(const ModelConfig& config, const ModelState& state,
                               const std::string& extra_meta_json) {
    ModelState copy = state;
    const std::vector<Tensor*> handles = parameter_handles(copy);
    const std::vector<std::string> names = parameter_names(config);
    if (handles.size() != names.size()) {
        throw ValidationError("checkpoint: state does not match config layout");
    }
    Checkpoint ck;
    for (std::size_t i = 0; i < handles.size(); ++i) {
        ck.tensors.push_back({names[i], handles[i]->shape(), handles[i]->values()});
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(extra_meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint meta: ") + e.what());
    }
    meta["config"] = nlohmann::json::parse(config_to_json(config));
    ck.meta_json = meta.dump();
    return ck;
}

std::pair<ModelConfig, ModelState> state_from_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint meta: ") + e.what());
    }
    if (!meta.contains("config")) throw ValidationError("checkpoint meta lacks a config entry");
    const ModelConfig config = config_from_json(meta["config"].dump());
    ModelState state = init_state(config, 0);
    const std::vector<Tensor*> handles = parameter_handles(state);
    const std::vector<std::string> names = parameter_names(config);
    if (ck.tensors.size() != names.size()) {
        throw ValidationError("checkpoint: tensor count does not match config layout");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        const NamedTensor* found = nullptr;
        for (const NamedTensor& t : ck.tensors) {
            if (t.name == names[i]) {
                found = &t;
                break;
            }
        }
        if (!found) throw ValidationError("checkpoint: missing tensor " + names[i]);
        if (found->shape != handles[i]->shape()) {
            throw ValidationError("checkpoint: shape mismatch for " + names[i]);
        }
        *handles[i] = Tensor(found->shape, found->values);
    }
    return {config, std::move(state)};
}

Tensor attention_adjacency(const Tensor& h, const std::vector<std::uint8_t>& mask,
                           const Tensor& w_row, const Tensor& w_col, double epsilon) {
    const Tensor scores = outer_sum(matmul(h, w_row), matmul(h, w_col));
    return masked_leaky_normalize(scores, mask, epsilon, kLeakySlope);
}

EncodeResult encode(const Tensor& h0, const std::vector<std::uint8_t>& mask,
                    const ModelConfig& config, const ModelState& state, Rng* dropout_rng,
                    const Tensor* adjacency_override) {
    if (h0.rank() != 2 || h0.cols() != config.input_size) {
        throw ValidationError("encode: input width does not match config");
    }
    const int n = h0.rows();
    if (mask.size() != static_cast<std::size_t>(n) * n) {
        throw ValidationError("encode: mask size does not match input");
    }
    Tensor h = h0;
    Tensor a;
    for (int l = 0; l < config.n_layers; ++l) {
        if (adjacency_override) {
            a = *adjacency_override;
            if (a.rank() != 2 || a.rows() != n || a.cols() != n) {
                throw ValidationError("encode: adjacency override must be n x n");
            }
        } else {
            a = attention_adjacency(h, mask, state.attn_row[l], state.attn_col[l],
                                    config.attention_epsilon);
        }
        const Tensor mixing = sub(Tensor::identity(n), transpose(a));
        if (config.linear_mode) {
            h = matmul(mixing, h);
        } else {
            h = elu(matmul(mixing, matmul(h, state.agg_w[l])));
            if (dropout_rng && config.dropout > 0.0) h = dropout(h, config.dropout, *dropout_rng);
        }
    }
    Tensor e = config.linear_mode
                   ? h
                   : mlp_head(h, state.enc_w1, state.enc_b1, state.enc_w2, state.enc_b2,
                              config.dropout, dropout_rng);
    return {a, std::move(e), std::move(h)};
}

Tensor decode(const Tensor& a, const Tensor& e, const std::vector<std::uint8_t>& mask,
              const ModelConfig& config, const ModelState& state, Rng* dropout_rng) {
    if (a.rank() != 2 || a.rows() != a.cols()) throw ValidationError("decode: adjacency must be square");
    const int n = a.rows();
    if (e.rows() != n) throw ValidationError("decode: adjacency/latent row mismatch");
    const Tensor a_used = config.stop_grad_decoder_adjacency ? detach(a) : a;
    const Tensor mix_inverse = inverse(sub(Tensor::identity(n), transpose(a_used)));
    Tensor ehat = e;
    for (int l = 0; l < config.n_layers; ++l) {
        if (config.linear_mode) {
            ehat = matmul(mix_inverse, ehat);
            continue;
        }
        Tensor g = elu(matmul(mix_inverse, matmul(ehat, state.dec_m[l])));
        if (dropout_rng && config.dropout > 0.0) g = dropout(g, config.dropout, *dropout_rng);
        if (config.use_gru) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(ehat.cols()));
            const Tensor scores = scalar_mul(matmul(ehat, transpose(ehat)), scale);
            const Tensor attn = masked_softmax(scores, predecessor_mask(mask, n));
            const Tensor p = matmul(matmul(attn, ehat), state.gru_proj[l]);
            ehat = gru_cell(g, p, state.gru[l]);
        } else {
            ehat = g;
        }
    }
    if (config.linear_mode) return ehat;
    return mlp_head(ehat, state.dec_w1, state.dec_b1, state.dec_w2, state.dec_b2, config.dropout,
                    dropout_rng);
}

std::vector<int> emotion_labels(const Conversation& conv) {
    std::vector<int> out;
    const int n = static_cast<int>(conv.size());
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) out.push_back(conv.has_emotion(i) ? 1 : 0);
    return out;
}

ForwardOutput forward(const SyntheticSample& sample, const ModelConfig& config,
                      const ModelState& state, Rng* dropout_rng,
                      const Tensor* adjacency_override) {
    if (sample.dimension != config.input_size) {
        throw ValidationError("forward: sample dimension does not match config input_size");
    }
    const int n = static_cast<int>(sample.n_utterances());
    const CognSkeleton skeleton =
        build_skeleton(config.skeleton_variant, sample.conversation, config.k);
    const std::vector<std::uint8_t> mask = skeleton_mask(skeleton);
    const Tensor h0({n, config.input_size}, sample.vectors);

    const EncodeResult enc = encode(h0, mask, config, state, dropout_rng, adjacency_override);
    ForwardOutput out;
    out.A = enc.A;
    out.E = enc.E;
    out.emotion_logits_H = add(matmul(h0, state.emo_w), state.emo_b);
    if (config.use_decoder) {
        try {
            out.H_hat = decode(enc.A, enc.E, mask, config, state, dropout_rng);
        } catch (const NumericError& e) {
            throw NumericError("sample " + sample.id + ": " + e.what());
        }
        out.emotion_logits_H_hat = add(matmul(out.H_hat, state.emo_w), state.emo_b);
    } else {
        out.H_hat = Tensor::zeros({n, config.input_size});
        out.emotion_logits_H_hat = add(matmul(enc.E, state.aux_w), state.aux_b);
    }
    return out;
}

Tensor kl_auxiliary_loss(const Tensor& logits_h_hat, const Tensor& logits_h) {
    if (logits_h_hat.shape() != logits_h.shape()) {
        throw ValidationError("kl_auxiliary_loss: logit shape mismatch");
    }
    const Tensor log_p_hat = log_softmax(logits_h_hat, 1);
    const Tensor log_p_ref = log_softmax(detach(logits_h), 1);
    const Tensor p_hat = softmax(logits_h_hat, 1);
    return reduce_sum(mul(p_hat, sub(log_p_hat, log_p_ref)));
}

Tensor bce_auxiliary_loss(const Tensor& logits_h_hat, const Tensor& logits_h) {
    if (logits_h_hat.shape() != logits_h.shape()) {
        throw ValidationError("bce_auxiliary_loss: logit shape mismatch");
    }
    const Tensor p_ref = softmax(detach(logits_h), 1);
    const Tensor p_hat = softmax(logits_h_hat, 1);
    const Tensor ones = Tensor::ones(p_hat.shape());
    const Tensor on = mul(p_ref, log_op(p_hat));
    const Tensor off = mul(sub(ones, p_ref), log_op(sub(ones, p_hat)));
    return scalar_mul(reduce_sum(add(on, off)), -1.0);
}

LossTerms total_loss(const ForwardOutput& out, const std::vector<int>& labels,
                     const ModelConfig& config) {
    const int n = static_cast<int>(labels.size());
    if (out.emotion_logits_H.rows() != n) throw ValidationError("total_loss: label count mismatch");
    const Tensor ce_h = cross_entropy_mean(out.emotion_logits_H, labels, config.emotion_classes);
    const Tensor ce_hat =
        cross_entropy_mean(out.emotion_logits_H_hat, labels, config.emotion_classes);
    const Tensor aux = config.loss_mode == LossMode::Kl
                           ? kl_auxiliary_loss(out.emotion_logits_H_hat, out.emotion_logits_H)
                           : bce_auxiliary_loss(out.emotion_logits_H_hat, out.emotion_logits_H);
    LossTerms terms;
    terms.aux = aux;
    terms.total = add(add(ce_h, ce_hat), scalar_mul(aux, 1.0 / n));
    return terms;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& history) {
    std::ostringstream out;
    out << "epoch,loss_total,loss_kl,probe_acc_E,probe_acc_Hhat\n";
    out << std::setprecision(10);
    for (const EpochMetrics& m : history) {
        out << m.epoch << ',' << m.loss_total << ',' << m.loss_kl << ',' << m.probe_acc_e << ','
            << m.probe_acc_hhat << '\n';
    }
    return out.str();
}

namespace {

struct ProbeAccuracies {
    double on_e = 0.0;
    double on_h_hat = 0.0;
};

ProbeAccuracies probe_metrics(const std::vector<SyntheticSample>& samples,
                              const ModelConfig& config, const ModelState& state) {
    std::vector<std::vector<double>> rows_e, rows_hhat;
    std::vector<int> labels;
    for (const SyntheticSample& sample : samples) {
        const ForwardOutput out = forward(sample, config, state);
        const std::vector<int> y = emotion_labels(sample.conversation);
        const int n = static_cast<int>(y.size());
        for (int t = 0; t < n; ++t) {
            const auto* e = &out.E.values()[static_cast<std::size_t>(t) * out.E.cols()];
            rows_e.emplace_back(e, e + out.E.cols());
            const auto* h = &out.H_hat.values()[static_cast<std::size_t>(t) * out.H_hat.cols()];
            rows_hhat.emplace_back(h, h + out.H_hat.cols());
            labels.push_back(y[t]);
        }
    }
    ProbeAccuracies acc;
    LinearProbe probe_e;
    probe_e.fit(rows_e, labels, 200);
    acc.on_e = probe_e.accuracy(rows_e, labels);
    if (config.use_decoder) {
        LinearProbe probe_h;
        probe_h.fit(rows_hhat, labels, 200);
        acc.on_h_hat = probe_h.accuracy(rows_hhat, labels);
    }
    return acc;
}

} // namespace

TrainResult train(const SyntheticCorpus& corpus, const ModelConfig& config, std::uint64_t seed,
                  const std::string& out_dir) {
    config.validate();
    if (corpus.train.empty()) throw ValidationError("train: empty training split");
    for (const SyntheticSample& s : corpus.train) {
        if (s.dimension != config.input_size) {
            throw ValidationError("train: sample " + s.id + " dimension does not match config");
        }
    }

    ModelState state = init_state(config, mix_seed(seed, 0));
    Rng shuffle_rng(mix_seed(seed, 1));
    Rng dropout_rng(mix_seed(seed, 2));
    const std::size_t n_params = parameter_handles(state).size();
    Adam optimizer(config.learning_rate, n_params);

    const int n_train = static_cast<int>(corpus.train.size());
    std::vector<EpochMetrics> history;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const std::vector<int> order = shuffle_rng.permutation(n_train);
        double loss_sum = 0.0;
        double aux_sum = 0.0;
        int samples_seen = 0;
        int batch_index = 0;
        for (int start = 0; start < n_train; start += config.batch_size, ++batch_index) {
            const int stop = std::min(n_train, start + config.batch_size);
            Tape tape;
            ModelState bound = bind_to_tape(state, tape);
            Tensor batch_loss;
            for (int i = start; i < stop; ++i) {
                const SyntheticSample& sample = corpus.train[static_cast<std::size_t>(order[i])];
                const ForwardOutput out = forward(sample, config, bound, &dropout_rng);
                const std::vector<int> labels = emotion_labels(sample.conversation);
                const LossTerms terms = total_loss(out, labels, config);
                aux_sum += terms.aux.scalar_value() / static_cast<double>(labels.size());
                batch_loss = (i == start) ? terms.total : add(batch_loss, terms.total);
            }
            batch_loss = scalar_mul(batch_loss, 1.0 / (stop - start));
            const double loss_value = batch_loss.scalar_value();
            if (!std::isfinite(loss_value)) {
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
            loss_sum += loss_value * (stop - start);
            samples_seen += stop - start;

            tape.backward(batch_loss);
            const std::vector<Tensor*> bound_handles = parameter_handles(bound);
            std::vector<std::vector<double>> grads;
            grads.reserve(bound_handles.size());
            for (Tensor* t : bound_handles) grads.push_back(tape.grad(*t));
            std::vector<Tensor*> master = parameter_handles(state);
            optimizer.step(master, grads);
        }

        const ProbeAccuracies acc = probe_metrics(corpus.train, config, state);
        EpochMetrics m;
        m.epoch = epoch;
        m.loss_total = loss_sum / samples_seen;
        m.loss_kl = aux_sum / samples_seen;
        m.probe_acc_e = acc.on_e;
        m.probe_acc_hhat = acc.on_h_hat;
        history.push_back(m);
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string meta =
            "{\"epochs_completed\": " + std::to_string(config.epochs) + "}";
        save_checkpoint((std::filesystem::path(out_dir) / "checkpoint.json").string(),
                        state_to_checkpoint(config, state, meta));
        std::ofstream csv(std::filesystem::path(out_dir) / "metrics.csv");
        if (!csv) throw ValidationError("train: cannot write metrics.csv in " + out_dir);
        csv << metrics_to_csv(history);
    }
    return {std::move(state), std::move(history)};
}

} // namespace dialscm
