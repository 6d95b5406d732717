#pragma once

#include "dialscm/rng.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace dialscm {

class Tape;
class Tensor;

namespace detail {
Tensor make_tensor(std::vector<int> shape, std::shared_ptr<std::vector<double>> values,
                   Tape* tape, int node);
} // namespace detail

// Dense row-major float64 tensor. Values are immutable after construction;
// ops return new tensors. A tensor either floats free (constant) or is
// attached to the tape that recorded the op producing it.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(const std::vector<int>& shape);
    static Tensor ones(const std::vector<int>& shape);
    static Tensor identity(int n);
    static Tensor scalar(double value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int rows() const;
    int cols() const; // 1 for rank-1 tensors
    std::size_t size() const { return values_ ? values_->size() : 0; }

    const std::vector<double>& values() const { return *values_; }
    double value_at(int row, int col) const;
    double scalar_value() const;

    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

private:
    friend Tensor detail::make_tensor(std::vector<int>, std::shared_ptr<std::vector<double>>,
                                      Tape*, int);
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> values_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Records one forward pass for reverse-mode differentiation. Creation order
// is topological, so the backward sweep visits each node exactly once in
// reverse. Single-threaded during construction; one backward() per tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int node)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf tensor whose gradient can be queried after backward().
    Tensor variable(std::vector<int> shape, std::vector<double> values);
    Tensor variable(const Tensor& constant);

    void backward(const Tensor& loss); // loss must be a scalar on this tape

    // Gradient of the loss w.r.t. a tensor on this tape; zeros if the
    // tensor did not influence the loss.
    std::vector<double> grad(const Tensor& t) const;

    int n_nodes() const { return static_cast<int>(nodes_.size()); }

    // Internal op plumbing (public so ops outside the class can record).
    int record(std::vector<int> inputs, std::size_t out_size, BackwardFn backward);
    std::vector<double>& grad_buffer(int node, std::size_t size);
    const std::vector<double>* grad_if_any(int node) const;

private:
    struct Node {
        std::vector<int> inputs;
        std::size_t out_size = 0;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool ran_backward_ = false;
};

// Core ops. Shape mismatches throw ValidationError; singular inverses throw
// NumericError. All are differentiable where mathematically sensible.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b); // equal shapes, or b a row vector
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise
Tensor scalar_mul(const Tensor& a, double s);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);     // axis 0: columns, 1: rows
Tensor log_softmax(const Tensor& a, int axis); // log-sum-exp stabilized
Tensor log_op(const Tensor& a, double floor = 1e-12); // ln(max(a, floor))
Tensor inverse(const Tensor& a);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, int start, int end);
Tensor reduce_sum(const Tensor& a); // scalar
Tensor detach(const Tensor& a);     // constant copy, cuts gradient flow
Tensor dropout(const Tensor& a, double rate, Rng& rng); // inverted scaling

// e[i][j] = r[i] + c[j] for column vectors r (n) and c (m).
Tensor outer_sum(const Tensor& r, const Tensor& c);

// Attention normalization over an n x n score matrix: per column t, apply
// LeakyReLU to the scores at mask[source][target]=1, then divide by their
// sum. A column whose activated sum falls below epsilon is first shifted by
// (|column minimum| + epsilon) so the denominator is safely positive; the
// unshifted path is the plain ratio. Unmasked entries are exactly zero.
Tensor masked_leaky_normalize(const Tensor& scores, const std::vector<std::uint8_t>& mask,
                              double epsilon, double slope);

// Row-wise softmax restricted to mask[row][col]=1; fully masked rows are
// all-zero.
Tensor masked_softmax(const Tensor& scores, const std::vector<std::uint8_t>& mask);

// One hidden-layer-free affine + ELU block: elu(x W + b).
Tensor mlp_layer(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct GruParams {
    Tensor update_w, update_u, update_b;
    Tensor reset_w, reset_u, reset_b;
    Tensor cand_w, cand_u, cand_b;
};

// Standard gated recurrent cell over row-batched inputs.
Tensor gru_cell(const Tensor& input, const Tensor& state, const GruParams& params);

} // namespace dialscm
