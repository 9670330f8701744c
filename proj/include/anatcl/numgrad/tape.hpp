#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "anatcl/error.hpp"
#include "anatcl/numgrad/tensor.hpp"

namespace anatcl::numgrad {

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scalar_mul,
  relu,
  exp,
  log,
  sum,
  mean,
  l2_normalize_rows,
  concat_rows,
  transpose,
};

enum class SumAxis { all, rows };

/// Added to row norms before dividing so an all-zero row maps to zero.
inline constexpr double kNormalizeEps = 1e-12;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
  friend bool operator==(Var, Var) = default;
};

class Tape;

/// Adjoints produced by Tape::backward, indexed by Var.
class Gradients {
 public:
  const Tensor& operator[](Var v) const { return grads_.at(v.id); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  std::vector<Tensor> grads_;
};

/// Records primitive operations eagerly and replays them in reverse for
/// vector-Jacobian products. Single use: backward() consumes the tape.
class Tape {
 public:
  Var parameter(Tensor value) { return push_leaf(std::move(value), true); }
  Var constant(Tensor value) { return push_leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return values_.at(v.id); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k) {
      throw Error(ErrorKind::shape_mismatch, "matmul " + shape_string(A.shape()) + " x " +
                                                 shape_string(B.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    gemm(A.data().data(), B.data().data(), out.data().data(), m, k, n);
    return push(OpKind::matmul, {a.id, b.id}, std::move(out),
                [m, k, n](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                          const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad& needs) {
                  const double* gp = g.data().data();
                  if (needs(in[0])) {
                    // dA = G B^T
                    const double* bp = vals[in[1]].data().data();
                    double* da = grads[in[0]].data().data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gij = gp[i * n + j];
                        if (gij == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gij * bp[p * n + j];
                      }
                  }
                  if (needs(in[1])) {
                    // dB = A^T G
                    const double* ap = vals[in[0]].data().data();
                    double* db = grads[in[1]].data().data();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        const double aip = ap[i * k + p];
                        if (aip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * gp[i * n + j];
                      }
                  }
                });
  }

  /// Elementwise a + b. b may also be a single row broadcast over the rows of a.
  Var add(Var a, Var b) { return add_sub(a, b, 1.0, OpKind::add); }
  Var sub(Var a, Var b) { return add_sub(a, b, -1.0, OpKind::sub); }

  Var mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape() != B.shape()) {
      throw Error(ErrorKind::shape_mismatch, "mul " + shape_string(A.shape()) + " vs " +
                                                 shape_string(B.shape()));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return push(OpKind::mul, {a.id, b.id}, std::move(out),
                [](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                   const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad& needs) {
                  for (int side = 0; side < 2; ++side) {
                    if (!needs(in[side])) continue;
                    const Tensor& other = vals[in[1 - side]];
                    Tensor& dst = grads[in[side]];
                    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
                  }
                });
  }

  Var scale(Var a, double c) {
    Tensor out = value(a);
    for (auto& v : out.data()) v *= c;
    return push(OpKind::scalar_mul, {a.id}, std::move(out),
                [c](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                    const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
                });
  }

  /// max(x, 0); the derivative at exactly 0 is taken as 0.
  Var relu(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(OpKind::relu, {a.id}, std::move(out),
                [](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                   const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  const Tensor& x = vals[in[0]];
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0.0) dst[i] += g[i];
                });
  }

  Var exp(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data()) v = std::exp(v);
    const std::size_t out_id = values_.size();
    return push(OpKind::exp, {a.id}, std::move(out),
                [out_id](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                         const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  const Tensor& y = vals[out_id];
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i];
                });
  }

  Var log(Var a) {
    const Tensor& x = value(a);
    for (double v : x.data())
      if (!(v > 0.0)) throw Error(ErrorKind::domain_error, "log of non-positive value " + std::to_string(v));
    Tensor out = x;
    for (auto& v : out.data()) v = std::log(v);
    return push(OpKind::log, {a.id}, std::move(out),
                [](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                   const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  const Tensor& xv = vals[in[0]];
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] / xv[i];
                });
  }

  /// Sum of all entries (scalar result) or of each row (column vector result).
  Var sum(Var a, SumAxis axis = SumAxis::all) {
    const Tensor& x = value(a);
    if (axis == SumAxis::all) {
      double s = 0.0;
      for (double v : x.data()) s += v;
      return push(OpKind::sum, {a.id}, Tensor::scalar(s),
                  [](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                     const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                    const double gv = g[0];
                    for (auto& v : grads[in[0]].data()) v += gv;
                  });
    }
    require_rank2(x, "row sum");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (double v : x.row(i)) s += v;
      out[i] = s;
    }
    return push(OpKind::sum, {a.id}, std::move(out),
                [m, n](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                       const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[i];
                });
  }

  Var mean(Var a) {
    const Tensor& x = value(a);
    if (x.size() == 0) throw Error(ErrorKind::shape_mismatch, "mean of empty tensor");
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double inv = 1.0 / static_cast<double>(x.size());
    return push(OpKind::mean, {a.id}, Tensor::scalar(s * inv),
                [inv](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                      const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  const double gv = g[0] * inv;
                  for (auto& v : grads[in[0]].data()) v += gv;
                });
  }

  /// Divides each row by (its Euclidean norm + kNormalizeEps).
  Var l2_normalize_rows(Var a) {
    const Tensor& x = value(a);
    require_rank2(x, "l2-normalize-rows");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = x;
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
      double ss = 0.0;
      for (double v : x.row(i)) ss += v * v;
      norms[i] = std::sqrt(ss);
      const double denom = norms[i] + kNormalizeEps;
      for (auto& v : out.row(i)) v /= denom;
    }
    return push(OpKind::l2_normalize_rows, {a.id}, std::move(out),
                [m, n, norms = std::move(norms)](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                                                 const std::vector<std::size_t>& in, const Tensor& g,
                                                 const NeedsGrad&) {
                  const Tensor& xv = vals[in[0]];
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < m; ++i) {
                    const double nrm = norms[i];
                    const double s = nrm + kNormalizeEps;
                    double gx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) gx += g[i * n + j] * xv[i * n + j];
                    const double coef = nrm > 0.0 ? gx / (nrm * s * s) : 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                      dst[i * n + j] += g[i * n + j] / s - coef * xv[i * n + j];
                  }
                });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorKind::shape_mismatch, "concat-rows of nothing");
    const std::size_t n = value(parts[0]).cols();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
      const Tensor& t = value(p);
      require_rank2(t, "concat-rows");
      if (t.cols() != n) {
        throw Error(ErrorKind::shape_mismatch, "concat-rows column mismatch " + shape_string(t.shape()));
      }
      total += t.rows();
      ids.push_back(p.id);
    }
    std::vector<double> data;
    data.reserve(total * n);
    for (Var p : parts) {
      const auto d = value(p).data();
      data.insert(data.end(), d.begin(), d.end());
    }
    return push(OpKind::concat_rows, ids, Tensor({total, n}, std::move(data)),
                [](const std::vector<Tensor>& vals, std::vector<Tensor>& grads,
                   const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad& needs) {
                  std::size_t offset = 0;
                  for (std::size_t id : in) {
                    const std::size_t len = vals[id].size();
                    if (needs(id)) {
                      Tensor& dst = grads[id];
                      for (std::size_t i = 0; i < len; ++i) dst[i] += g[offset + i];
                    }
                    offset += len;
                  }
                });
  }

  Var transpose(Var a) {
    const Tensor& x = value(a);
    require_rank2(x, "transpose");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    return push(OpKind::transpose, {a.id}, std::move(out),
                [m, n](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                       const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad&) {
                  Tensor& dst = grads[in[0]];
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
                });
  }

  /// Reverse sweep from a scalar loss. Every recorded value gets an adjoint;
  /// values the loss does not depend on get zeros.
  Gradients backward(Var loss) {
    if (consumed_) throw Error(ErrorKind::tape_consumed, "backward already ran on this tape");
    const Tensor& l = value(loss);
    if (l.size() != 1) {
      throw Error(ErrorKind::non_scalar_loss, "loss has shape " + shape_string(l.shape()));
    }
    consumed_ = true;
    std::vector<Tensor> grads;
    grads.reserve(values_.size());
    for (const auto& v : values_) grads.push_back(Tensor::zeros(v.shape()));
    grads[loss.id][0] = 1.0;
    const NeedsGrad needs{&requires_grad_};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output > loss.id || !requires_grad_[it->output]) continue;
      it->backward(values_, grads, it->inputs, grads[it->output], needs);
    }
    return Gradients(std::move(grads));
  }

 private:
  struct NeedsGrad {
    const std::vector<bool>* flags;
    bool operator()(std::size_t id) const { return (*flags)[id]; }
  };

  using Backward = std::function<void(const std::vector<Tensor>&, std::vector<Tensor>&,
                                      const std::vector<std::size_t>&, const Tensor&, const NeedsGrad&)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    std::size_t output;
    Backward backward;
  };

  static void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
      throw Error(ErrorKind::shape_mismatch, std::string(op) + " needs a matrix, got " + shape_string(t.shape()));
    }
  }

  static void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a[i * k + p];
        if (aip == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  }

  Var add_sub(Var a, Var b, double sign, OpKind kind) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const bool same = A.shape() == B.shape();
    const bool row_broadcast = !same && A.rank() == 2 && B.size() == A.cols() &&
                               (B.rank() == 1 || (B.rank() == 2 && B.rows() == 1));
    if (!same && !row_broadcast) {
      throw Error(ErrorKind::shape_mismatch, std::string(kind == OpKind::add ? "add " : "sub ") +
                                                 shape_string(A.shape()) + " vs " + shape_string(B.shape()));
    }
    Tensor out = A;
    const std::size_t n = B.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * B[same ? i : i % n];
    return push(kind, {a.id, b.id}, std::move(out),
                [sign, same, n](const std::vector<Tensor>&, std::vector<Tensor>& grads,
                                const std::vector<std::size_t>& in, const Tensor& g, const NeedsGrad& needs) {
                  if (needs(in[0])) {
                    Tensor& da = grads[in[0]];
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                  }
                  if (needs(in[1])) {
                    Tensor& db = grads[in[1]];
                    for (std::size_t i = 0; i < g.size(); ++i) db[same ? i : i % n] += sign * g[i];
                  }
                });
  }

  Var push_leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw Error(ErrorKind::non_finite, "leaf value contains NaN or Inf");
    values_.push_back(std::move(value));
    requires_grad_.push_back(requires_grad);
    return Var{values_.size() - 1};
  }

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor out, Backward backward) {
    if (consumed_) throw Error(ErrorKind::tape_consumed, "cannot record on a consumed tape");
    if (!out.all_finite()) {
      throw Error(ErrorKind::non_finite, "operation produced NaN or Inf, shape " + shape_string(out.shape()));
    }
    bool rg = false;
    for (std::size_t id : inputs) rg = rg || requires_grad_[id];
    const std::size_t id = values_.size();
    values_.push_back(std::move(out));
    requires_grad_.push_back(rg);
    nodes_.push_back(Node{kind, std::move(inputs), id, std::move(backward)});
    return Var{id};
  }

  std::vector<Tensor> values_;
  std::vector<bool> requires_grad_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace anatcl::numgrad
