#include "dialscm/tensor.hpp"

#include "dialscm/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace dialscm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t total = 1;
    for (int d : shape) {
        if (d < 0) throw ValidationError("negative tensor dimension");
        total *= static_cast<std::size_t>(d);
    }
    return total;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ValidationError(std::string(op) + ": shape mismatch");
    }
}

void require_matrix(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw ValidationError(std::string(op) + ": rank-2 tensor required");
}

Tape* join_tape(const Tensor& a, const Tensor& b) {
    if (a.on_tape() && b.on_tape() && a.tape() != b.tape()) {
        throw ValidationError("tensors belong to different tapes");
    }
    return a.on_tape() ? a.tape() : b.tape();
}

// Adds src into the node's gradient buffer; no-op for constants (node < 0).
void accumulate(Tape& tape, int node, std::size_t size, const std::vector<double>& src) {
    if (node < 0) return;
    std::vector<double>& dst = tape.grad_buffer(node, size);
    for (std::size_t i = 0; i < size; ++i) dst[i] += src[i];
}

Tensor finish(std::vector<int> shape, std::vector<double> values, Tape* tape,
              std::vector<int> inputs, Tape::BackwardFn backward) {
    auto storage = std::make_shared<std::vector<double>>(std::move(values));
    int node = -1;
    if (tape) {
        node = tape->record(std::move(inputs), storage->size(), std::move(backward));
    }
    return detail::make_tensor(std::move(shape), std::move(storage), tape, node);
}

// Elementwise op whose derivative depends only on the input value.
template <typename F, typename DF>
Tensor pointwise(const Tensor& a, F f, DF df) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a.values()[i]);
    const int a_node = a.node();
    auto a_values = std::make_shared<std::vector<double>>(a.values());
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, a_values, df](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> gi(a_values->size());
                      for (std::size_t i = 0; i < gi.size(); ++i) {
                          gi[i] = (*g)[i] * df((*a_values)[i]);
                      }
                      accumulate(tape, a_node, gi.size(), gi);
                  });
}

double stable_sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

namespace detail {
Tensor make_tensor(std::vector<int> shape, std::shared_ptr<std::vector<double>> values,
                   Tape* tape, int node) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    t.tape_ = tape;
    t.node_ = node;
    return t;
}
} // namespace detail

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) {
    if (shape_size(shape) != values.size()) {
        throw ValidationError("tensor values length does not match shape");
    }
    shape_ = std::move(shape);
    values_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
    return Tensor(shape, std::vector<double>(shape_size(shape), 0.0));
}

Tensor Tensor::ones(const std::vector<int>& shape) {
    return Tensor(shape, std::vector<double>(shape_size(shape), 1.0));
}

Tensor Tensor::identity(int n) {
    std::vector<double> v(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    return Tensor({n, n}, std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

int Tensor::rows() const {
    if (shape_.empty()) throw ValidationError("rows() on empty tensor");
    return shape_[0];
}

int Tensor::cols() const {
    if (shape_.empty()) throw ValidationError("cols() on empty tensor");
    return rank() >= 2 ? shape_[1] : 1;
}

double Tensor::value_at(int row, int col) const {
    return (*values_)[static_cast<std::size_t>(row) * cols() + static_cast<std::size_t>(col)];
}

double Tensor::scalar_value() const {
    if (size() != 1) throw ValidationError("scalar_value() on non-scalar tensor");
    return (*values_)[0];
}

Tensor Tape::variable(std::vector<int> shape, std::vector<double> values) {
    if (shape_size(shape) != values.size()) {
        throw ValidationError("variable values length does not match shape");
    }
    auto storage = std::make_shared<std::vector<double>>(std::move(values));
    const int node = record({}, storage->size(), nullptr);
    return detail::make_tensor(std::move(shape), std::move(storage), this, node);
}

Tensor Tape::variable(const Tensor& constant) {
    return variable(constant.shape(), constant.values());
}

int Tape::record(std::vector<int> inputs, std::size_t out_size, BackwardFn backward) {
    if (ran_backward_) {
        throw ValidationError("tape already ran backward; build a fresh tape");
    }
    Node node;
    node.inputs = std::move(inputs);
    node.out_size = out_size;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node, std::size_t size) {
    std::vector<double>& buf = grads_[static_cast<std::size_t>(node)];
    if (buf.empty()) buf.assign(size, 0.0);
    return buf;
}

const std::vector<double>* Tape::grad_if_any(int node) const {
    const std::vector<double>& buf = grads_[static_cast<std::size_t>(node)];
    return buf.empty() ? nullptr : &buf;
}

void Tape::backward(const Tensor& loss) {
    if (ran_backward_) throw ValidationError("tape already ran backward");
    if (loss.tape() != this || loss.node() < 0) {
        throw ValidationError("loss tensor is not on this tape");
    }
    if (loss.size() != 1) throw ValidationError("backward requires a scalar loss");
    ran_backward_ = true;
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(loss.node())] = {1.0};
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.backward) continue;
        if (grads_[static_cast<std::size_t>(id)].empty()) continue;
        node.backward(*this, id);
    }
}

std::vector<double> Tape::grad(const Tensor& t) const {
    if (!ran_backward_) throw ValidationError("grad() before backward()");
    if (t.tape() != this || t.node() < 0) {
        throw ValidationError("tensor is not on this tape");
    }
    const std::vector<double>& buf = grads_[static_cast<std::size_t>(t.node())];
    if (buf.empty()) return std::vector<double>(t.size(), 0.0);
    return buf;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimensions differ");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    ConstMatMap ma(a.values().data(), m, k);
    ConstMatMap mb(b.values().data(), k, n);
    MatMap(out.data(), m, n) = ma * mb;

    const int a_node = a.node(), b_node = b.node();
    auto av = std::make_shared<std::vector<double>>(a.values());
    auto bv = std::make_shared<std::vector<double>>(b.values());
    return finish({m, n}, std::move(out), join_tape(a, b), {a_node, b_node},
                  [a_node, b_node, av, bv, m, k, n](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      ConstMatMap mg(g->data(), m, n);
                      ConstMatMap ma(av->data(), m, k);
                      ConstMatMap mb(bv->data(), k, n);
                      if (a_node >= 0) {
                          std::vector<double> ga(static_cast<std::size_t>(m) * k);
                          MatMap(ga.data(), m, k) = mg * mb.transpose();
                          accumulate(tape, a_node, ga.size(), ga);
                      }
                      if (b_node >= 0) {
                          std::vector<double> gb(static_cast<std::size_t>(k) * n);
                          MatMap(gb.data(), k, n) = ma.transpose() * mg;
                          accumulate(tape, b_node, gb.size(), gb);
                      }
                  });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const int m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    ConstMatMap ma(a.values().data(), m, n);
    MatMap(out.data(), n, m) = ma.transpose();
    const int a_node = a.node();
    return finish({n, m}, std::move(out), a.tape(), {a_node},
                  [a_node, m, n](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(g->size());
                      ConstMatMap mg(g->data(), n, m);
                      MatMap(ga.data(), m, n) = mg.transpose();
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = a.shape() != b.shape();
    if (broadcast) {
        const bool row_vector = (b.rank() == 1 && b.rows() == a.cols()) ||
                                (b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols());
        if (a.rank() != 2 || !row_vector) {
            throw ValidationError("add: shapes must match or b must be a row vector");
        }
    }
    const int rows = broadcast ? a.rows() : static_cast<int>(1);
    std::vector<double> out(a.size());
    if (broadcast) {
        const int n = a.cols();
        for (int i = 0; i < a.rows(); ++i) {
            for (int j = 0; j < n; ++j) {
                out[static_cast<std::size_t>(i) * n + j] =
                    a.values()[static_cast<std::size_t>(i) * n + j] + b.values()[static_cast<std::size_t>(j)];
            }
        }
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    }
    const int a_node = a.node(), b_node = b.node();
    const std::size_t b_size = b.size();
    const int cols = a.cols();
    return finish(a.shape(), std::move(out), join_tape(a, b), {a_node, b_node},
                  [a_node, b_node, broadcast, rows, cols, b_size](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      accumulate(tape, a_node, g->size(), *g);
                      if (b_node < 0) return;
                      if (!broadcast) {
                          accumulate(tape, b_node, g->size(), *g);
                          return;
                      }
                      std::vector<double> gb(b_size, 0.0);
                      for (int i = 0; i < rows; ++i) {
                          for (int j = 0; j < cols; ++j) {
                              gb[static_cast<std::size_t>(j)] +=
                                  (*g)[static_cast<std::size_t>(i) * cols + j];
                          }
                      }
                      accumulate(tape, b_node, gb.size(), gb);
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    const int a_node = a.node(), b_node = b.node();
    return finish(a.shape(), std::move(out), join_tape(a, b), {a_node, b_node},
                  [a_node, b_node](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      accumulate(tape, a_node, g->size(), *g);
                      if (b_node >= 0) {
                          std::vector<double> gb(g->size());
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = -(*g)[i];
                          accumulate(tape, b_node, gb.size(), gb);
                      }
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    const int a_node = a.node(), b_node = b.node();
    auto av = std::make_shared<std::vector<double>>(a.values());
    auto bv = std::make_shared<std::vector<double>>(b.values());
    return finish(a.shape(), std::move(out), join_tape(a, b), {a_node, b_node},
                  [a_node, b_node, av, bv](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> gx(g->size());
                      if (a_node >= 0) {
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = (*g)[i] * (*bv)[i];
                          accumulate(tape, a_node, gx.size(), gx);
                      }
                      if (b_node >= 0) {
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = (*g)[i] * (*av)[i];
                          accumulate(tape, b_node, gx.size(), gx);
                      }
                  });
}

Tensor scalar_mul(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * s;
    const int a_node = a.node();
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, s](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(g->size());
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = (*g)[i] * s;
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return pointwise(
        a, [slope](double x) { return x > 0 ? x : slope * x; },
        [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
    return pointwise(
        a, [alpha](double x) { return x > 0 ? x : alpha * (std::exp(x) - 1.0); },
        [alpha](double x) { return x > 0 ? 1.0 : alpha * std::exp(x); });
}

Tensor sigmoid(const Tensor& a) {
    return pointwise(
        a, [](double x) { return stable_sigmoid(x); },
        [](double x) {
            const double y = stable_sigmoid(x);
            return y * (1.0 - y);
        });
}

Tensor tanh_op(const Tensor& a) {
    return pointwise(
        a, [](double x) { return std::tanh(x); },
        [](double x) {
            const double y = std::tanh(x);
            return 1.0 - y * y;
        });
}

Tensor log_op(const Tensor& a, double floor) {
    if (floor <= 0.0) throw ValidationError("log_op: floor must be positive");
    return pointwise(
        a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x) { return x > floor ? 1.0 / x : 0.0; });
}

namespace {

// Shared row/column iteration for the two softmax variants. axis 1 treats
// each row as a distribution, axis 0 each column.
struct AxisView {
    int outer, inner, outer_stride, inner_stride;
};

AxisView axis_view(const Tensor& a, int axis, const char* op) {
    require_matrix(a, op);
    if (axis != 0 && axis != 1) throw ValidationError(std::string(op) + ": axis must be 0 or 1");
    if (axis == 1) return {a.rows(), a.cols(), a.cols(), 1};
    return {a.cols(), a.rows(), 1, a.cols()};
}

} // namespace

Tensor softmax(const Tensor& a, int axis) {
    const AxisView v = axis_view(a, axis, "softmax");
    std::vector<double> out(a.size());
    for (int o = 0; o < v.outer; ++o) {
        const std::size_t base = static_cast<std::size_t>(o) * v.outer_stride;
        double mx = -1e300;
        for (int i = 0; i < v.inner; ++i) {
            mx = std::max(mx, a.values()[base + static_cast<std::size_t>(i) * v.inner_stride]);
        }
        double denom = 0.0;
        for (int i = 0; i < v.inner; ++i) {
            const std::size_t at = base + static_cast<std::size_t>(i) * v.inner_stride;
            out[at] = std::exp(a.values()[at] - mx);
            denom += out[at];
        }
        for (int i = 0; i < v.inner; ++i) {
            out[base + static_cast<std::size_t>(i) * v.inner_stride] /= denom;
        }
    }
    const int a_node = a.node();
    auto pv = std::make_shared<std::vector<double>>(out);
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, pv, v](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(pv->size());
                      for (int o = 0; o < v.outer; ++o) {
                          const std::size_t base = static_cast<std::size_t>(o) * v.outer_stride;
                          double dot = 0.0;
                          for (int i = 0; i < v.inner; ++i) {
                              const std::size_t at =
                                  base + static_cast<std::size_t>(i) * v.inner_stride;
                              dot += (*g)[at] * (*pv)[at];
                          }
                          for (int i = 0; i < v.inner; ++i) {
                              const std::size_t at =
                                  base + static_cast<std::size_t>(i) * v.inner_stride;
                              ga[at] = (*pv)[at] * ((*g)[at] - dot);
                          }
                      }
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor log_softmax(const Tensor& a, int axis) {
    const AxisView v = axis_view(a, axis, "log_softmax");
    std::vector<double> out(a.size());
    for (int o = 0; o < v.outer; ++o) {
        const std::size_t base = static_cast<std::size_t>(o) * v.outer_stride;
        double mx = -1e300;
        for (int i = 0; i < v.inner; ++i) {
            mx = std::max(mx, a.values()[base + static_cast<std::size_t>(i) * v.inner_stride]);
        }
        double denom = 0.0;
        for (int i = 0; i < v.inner; ++i) {
            denom += std::exp(a.values()[base + static_cast<std::size_t>(i) * v.inner_stride] - mx);
        }
        const double lse = mx + std::log(denom);
        for (int i = 0; i < v.inner; ++i) {
            const std::size_t at = base + static_cast<std::size_t>(i) * v.inner_stride;
            out[at] = a.values()[at] - lse;
        }
    }
    const int a_node = a.node();
    auto lv = std::make_shared<std::vector<double>>(out);
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, lv, v](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(lv->size());
                      for (int o = 0; o < v.outer; ++o) {
                          const std::size_t base = static_cast<std::size_t>(o) * v.outer_stride;
                          double gsum = 0.0;
                          for (int i = 0; i < v.inner; ++i) {
                              gsum += (*g)[base + static_cast<std::size_t>(i) * v.inner_stride];
                          }
                          for (int i = 0; i < v.inner; ++i) {
                              const std::size_t at =
                                  base + static_cast<std::size_t>(i) * v.inner_stride;
                              ga[at] = (*g)[at] - std::exp((*lv)[at]) * gsum;
                          }
                      }
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor inverse(const Tensor& a) {
    require_matrix(a, "inverse");
    if (a.rows() != a.cols()) throw ValidationError("inverse: square matrix required");
    const int n = a.rows();
    ConstMatMap ma(a.values().data(), n, n);
    Eigen::FullPivLU<RowMat> lu(ma);
    if (!lu.isInvertible()) {
        throw NumericError("inverse: singular matrix");
    }
    // Condition estimate from the pivoted factor; beyond this, the 1e-8
    // accuracy contract is unattainable in float64.
    const auto diag = lu.matrixLU().diagonal().cwiseAbs();
    if (diag.minCoeff() <= 0.0 || diag.maxCoeff() / diag.minCoeff() > 1e12) {
        throw NumericError("inverse: matrix is numerically singular");
    }
    std::vector<double> out(a.size());
    MatMap(out.data(), n, n) = lu.inverse();
    const int a_node = a.node();
    auto inv = std::make_shared<std::vector<double>>(out);
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, inv, n](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      ConstMatMap mi(inv->data(), n, n);
                      ConstMatMap mg(g->data(), n, n);
                      std::vector<double> ga(inv->size());
                      // d(M^{-1}) = -M^{-1} dM M^{-1}  =>  grad_M = -M^{-T} g M^{-T}
                      MatMap(ga.data(), n, n) = -(mi.transpose() * mg * mi.transpose());
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    require_matrix(a, "concat");
    require_matrix(b, "concat");
    if (axis != 0 && axis != 1) throw ValidationError("concat: axis must be 0 or 1");
    if (axis == 0 && a.cols() != b.cols()) throw ValidationError("concat: column counts differ");
    if (axis == 1 && a.rows() != b.rows()) throw ValidationError("concat: row counts differ");
    const int rows = axis == 0 ? a.rows() + b.rows() : a.rows();
    const int cols = axis == 1 ? a.cols() + b.cols() : a.cols();
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            double v;
            if (axis == 0) {
                v = i < a.rows() ? a.value_at(i, j) : b.value_at(i - a.rows(), j);
            } else {
                v = j < a.cols() ? a.value_at(i, j) : b.value_at(i, j - a.cols());
            }
            out[static_cast<std::size_t>(i) * cols + j] = v;
        }
    }
    const int a_node = a.node(), b_node = b.node();
    const int ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    return finish({rows, cols}, std::move(out), join_tape(a, b), {a_node, b_node},
                  [a_node, b_node, axis, ar, ac, br, bc, rows, cols](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      (void)rows;
                      std::vector<double> ga(static_cast<std::size_t>(ar) * ac);
                      std::vector<double> gb(static_cast<std::size_t>(br) * bc);
                      for (int i = 0; i < ar; ++i) {
                          for (int j = 0; j < ac; ++j) {
                              ga[static_cast<std::size_t>(i) * ac + j] =
                                  (*g)[static_cast<std::size_t>(i) * cols + j];
                          }
                      }
                      for (int i = 0; i < br; ++i) {
                          for (int j = 0; j < bc; ++j) {
                              const int gi = axis == 0 ? ar + i : i;
                              const int gj = axis == 1 ? ac + j : j;
                              gb[static_cast<std::size_t>(i) * bc + j] =
                                  (*g)[static_cast<std::size_t>(gi) * cols + gj];
                          }
                      }
                      accumulate(tape, a_node, ga.size(), ga);
                      accumulate(tape, b_node, gb.size(), gb);
                  });
}

Tensor slice(const Tensor& a, int axis, int start, int end) {
    require_matrix(a, "slice");
    if (axis != 0 && axis != 1) throw ValidationError("slice: axis must be 0 or 1");
    const int limit = axis == 0 ? a.rows() : a.cols();
    if (start < 0 || end > limit || start >= end) {
        throw ValidationError("slice: bounds out of range");
    }
    const int rows = axis == 0 ? end - start : a.rows();
    const int cols = axis == 1 ? end - start : a.cols();
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const int si = axis == 0 ? start + i : i;
            const int sj = axis == 1 ? start + j : j;
            out[static_cast<std::size_t>(i) * cols + j] = a.value_at(si, sj);
        }
    }
    const int a_node = a.node();
    const int ar = a.rows(), ac = a.cols();
    return finish({rows, cols}, std::move(out), a.tape(), {a_node},
                  [a_node, axis, start, ar, ac, rows, cols](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(static_cast<std::size_t>(ar) * ac, 0.0);
                      for (int i = 0; i < rows; ++i) {
                          for (int j = 0; j < cols; ++j) {
                              const int si = axis == 0 ? start + i : i;
                              const int sj = axis == 1 ? start + j : j;
                              ga[static_cast<std::size_t>(si) * ac + sj] =
                                  (*g)[static_cast<std::size_t>(i) * cols + j];
                          }
                      }
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor reduce_sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    const int a_node = a.node();
    const std::size_t a_size = a.size();
    return finish({1}, {total}, a.tape(), {a_node},
                  [a_node, a_size](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      accumulate(tape, a_node, a_size, std::vector<double>(a_size, (*g)[0]));
                  });
}

Tensor detach(const Tensor& a) { return Tensor(a.shape(), a.values()); }

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must lie in [0,1)");
    auto mask = std::make_shared<std::vector<double>>(a.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < a.size(); ++i) {
        (*mask)[i] = rng.next_unit() >= rate ? keep_scale : 0.0;
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * (*mask)[i];
    const int a_node = a.node();
    return finish(a.shape(), std::move(out), a.tape(), {a_node},
                  [a_node, mask](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(g->size());
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = (*g)[i] * (*mask)[i];
                      accumulate(tape, a_node, ga.size(), ga);
                  });
}

Tensor outer_sum(const Tensor& r, const Tensor& c) {
    const bool r_ok = r.rank() == 1 || (r.rank() == 2 && r.cols() == 1);
    const bool c_ok = c.rank() == 1 || (c.rank() == 2 && c.cols() == 1);
    if (!r_ok || !c_ok) throw ValidationError("outer_sum: column vectors required");
    const int n = r.rows(), m = c.rows();
    std::vector<double> out(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            out[static_cast<std::size_t>(i) * m + j] = r.values()[static_cast<std::size_t>(i)] +
                                                       c.values()[static_cast<std::size_t>(j)];
        }
    }
    const int r_node = r.node(), c_node = c.node();
    return finish({n, m}, std::move(out), join_tape(r, c), {r_node, c_node},
                  [r_node, c_node, n, m](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      if (r_node >= 0) {
                          std::vector<double> gr(static_cast<std::size_t>(n), 0.0);
                          for (int i = 0; i < n; ++i) {
                              for (int j = 0; j < m; ++j) {
                                  gr[static_cast<std::size_t>(i)] +=
                                      (*g)[static_cast<std::size_t>(i) * m + j];
                              }
                          }
                          accumulate(tape, r_node, gr.size(), gr);
                      }
                      if (c_node >= 0) {
                          std::vector<double> gc(static_cast<std::size_t>(m), 0.0);
                          for (int i = 0; i < n; ++i) {
                              for (int j = 0; j < m; ++j) {
                                  gc[static_cast<std::size_t>(j)] +=
                                      (*g)[static_cast<std::size_t>(i) * m + j];
                              }
                          }
                          accumulate(tape, c_node, gc.size(), gc);
                      }
                  });
}

Tensor masked_leaky_normalize(const Tensor& scores, const std::vector<std::uint8_t>& mask,
                              double epsilon, double slope) {
    require_matrix(scores, "masked_leaky_normalize");
    if (scores.rows() != scores.cols()) {
        throw ValidationError("masked_leaky_normalize: square score matrix required");
    }
    const int n = scores.rows();
    if (mask.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
        throw ValidationError("masked_leaky_normalize: mask size mismatch");
    }
    if (epsilon <= 0.0) throw ValidationError("masked_leaky_normalize: epsilon must be positive");

    struct ColumnPlan {
        bool shifted = false;
        int argmin = -1;
        double min_sign = 1.0;
        double denom = 0.0;
    };
    auto plans = std::make_shared<std::vector<ColumnPlan>>(static_cast<std::size_t>(n));
    auto activated = std::make_shared<std::vector<double>>(scores.size(), 0.0);
    std::vector<double> out(scores.size(), 0.0);

    for (int t = 0; t < n; ++t) {
        double sum = 0.0, mn = 0.0;
        int argmin = -1;
        for (int i = 0; i < n; ++i) {
            if (!mask[static_cast<std::size_t>(i) * n + t]) continue;
            const double x = scores.value_at(i, t);
            const double s = x > 0 ? x : slope * x;
            (*activated)[static_cast<std::size_t>(i) * n + t] = s;
            sum += s;
            if (argmin < 0 || s < mn) {
                mn = s;
                argmin = i;
            }
        }
        if (argmin < 0) continue; // empty column stays zero
        ColumnPlan& plan = (*plans)[static_cast<std::size_t>(t)];
        double shift = 0.0;
        if (sum < epsilon) {
            plan.shifted = true;
            plan.argmin = argmin;
            plan.min_sign = mn < 0 ? -1.0 : 1.0;
            shift = std::fabs(mn) + epsilon;
        }
        double denom = 0.0;
        for (int i = 0; i < n; ++i) {
            if (mask[static_cast<std::size_t>(i) * n + t]) {
                denom += (*activated)[static_cast<std::size_t>(i) * n + t] + shift;
            }
        }
        plan.denom = denom;
        for (int i = 0; i < n; ++i) {
            if (mask[static_cast<std::size_t>(i) * n + t]) {
                out[static_cast<std::size_t>(i) * n + t] =
                    ((*activated)[static_cast<std::size_t>(i) * n + t] + shift) / denom;
            }
        }
    }

    const int s_node = scores.node();
    auto ov = std::make_shared<std::vector<double>>(out);
    auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
    auto sv = std::make_shared<std::vector<double>>(scores.values());
    return finish(
        scores.shape(), std::move(out), scores.tape(), {s_node},
        [s_node, ov, mask_copy, sv, plans, n, slope](Tape& tape, int self) {
            const std::vector<double>* g = tape.grad_if_any(self);
            if (!g) return;
            std::vector<double> ge(sv->size(), 0.0);
            for (int t = 0; t < n; ++t) {
                const ColumnPlan& plan = (*plans)[static_cast<std::size_t>(t)];
                if (plan.denom == 0.0) continue;
                double dot = 0.0;
                for (int i = 0; i < n; ++i) {
                    const std::size_t at = static_cast<std::size_t>(i) * n + t;
                    if ((*mask_copy)[at]) dot += (*g)[at] * (*ov)[at];
                }
                // grad w.r.t. the (possibly shifted) column entries
                double gt_sum = 0.0;
                for (int i = 0; i < n; ++i) {
                    const std::size_t at = static_cast<std::size_t>(i) * n + t;
                    if (!(*mask_copy)[at]) continue;
                    const double gt = ((*g)[at] - dot) / plan.denom;
                    gt_sum += gt;
                    ge[at] += gt;
                }
                if (plan.shifted) {
                    // The shift tracks the column minimum, so its gradient
                    // routes through the argmin entry with the sign of |min|.
                    const std::size_t at = static_cast<std::size_t>(plan.argmin) * n + t;
                    ge[at] += plan.min_sign * gt_sum;
                }
            }
            // LeakyReLU chain rule back to the raw scores.
            for (int t = 0; t < n; ++t) {
                for (int i = 0; i < n; ++i) {
                    const std::size_t at = static_cast<std::size_t>(i) * n + t;
                    if (!(*mask_copy)[at]) continue;
                    ge[at] *= (*sv)[at] > 0 ? 1.0 : slope;
                }
            }
            accumulate(tape, s_node, ge.size(), ge);
        });
}

Tensor masked_softmax(const Tensor& scores, const std::vector<std::uint8_t>& mask) {
    require_matrix(scores, "masked_softmax");
    const int rows = scores.rows(), cols = scores.cols();
    if (mask.size() != scores.size()) {
        throw ValidationError("masked_softmax: mask size mismatch");
    }
    std::vector<double> out(scores.size(), 0.0);
    for (int i = 0; i < rows; ++i) {
        double mx = -1e300;
        bool any = false;
        for (int j = 0; j < cols; ++j) {
            if (mask[static_cast<std::size_t>(i) * cols + j]) {
                mx = std::max(mx, scores.value_at(i, j));
                any = true;
            }
        }
        if (!any) continue;
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            const std::size_t at = static_cast<std::size_t>(i) * cols + j;
            if (mask[at]) {
                out[at] = std::exp(scores.value_at(i, j) - mx);
                denom += out[at];
            }
        }
        for (int j = 0; j < cols; ++j) {
            const std::size_t at = static_cast<std::size_t>(i) * cols + j;
            if (mask[at]) out[at] /= denom;
        }
    }
    const int s_node = scores.node();
    auto pv = std::make_shared<std::vector<double>>(out);
    auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
    return finish(scores.shape(), std::move(out), scores.tape(), {s_node},
                  [s_node, pv, mask_copy, rows, cols](Tape& tape, int self) {
                      const std::vector<double>* g = tape.grad_if_any(self);
                      if (!g) return;
                      std::vector<double> ga(pv->size(), 0.0);
                      for (int i = 0; i < rows; ++i) {
                          double dot = 0.0;
                          for (int j = 0; j < cols; ++j) {
                              const std::size_t at = static_cast<std::size_t>(i) * cols + j;
                              if ((*mask_copy)[at]) dot += (*g)[at] * (*pv)[at];
                          }
                          for (int j = 0; j < cols; ++j) {
                              const std::size_t at = static_cast<std::size_t>(i) * cols + j;
                              if ((*mask_copy)[at]) ga[at] = (*pv)[at] * ((*g)[at] - dot);
                          }
                      }
                      accumulate(tape, s_node, ga.size(), ga);
                  });
}

Tensor mlp_layer(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return elu(add(matmul(x, weight), bias), 1.0);
}

Tensor gru_cell(const Tensor& input, const Tensor& state, const GruParams& p) {
    require_matrix(input, "gru_cell");
    require_matrix(state, "gru_cell");
    if (input.rows() != state.rows()) throw ValidationError("gru_cell: batch sizes differ");
    const Tensor z =
        sigmoid(add(add(matmul(input, p.update_w), matmul(state, p.update_u)), p.update_b));
    const Tensor r =
        sigmoid(add(add(matmul(input, p.reset_w), matmul(state, p.reset_u)), p.reset_b));
    const Tensor cand =
        tanh_op(add(add(matmul(input, p.cand_w), matmul(mul(r, state), p.cand_u)), p.cand_b));
    const Tensor keep = sub(Tensor::ones(z.shape()), z);
    return add(mul(z, state), mul(keep, cand));
}

} // namespace dialscm
