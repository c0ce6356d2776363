/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/numcore/tensor.hpp"

namespace fdsp {

/// Handle to a node recorded on a basic_graph.
struct var {
  std::size_t id = 0;
};

/// Reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the recording order is already a
/// topological order and backward() is a single reverse sweep. A graph and the
/// tensors bound to it belong to one thread.
template <class Scalar>
class basic_graph {
 public:
  using tensor_type = basic_tensor<Scalar>;
  using backward_fn = std::function<void(basic_graph&, std::size_t)>;

  /// Records a value that never receives a gradient.
  var constant(tensor_type value) { return push(std::move(value), false, nullptr, {}); }

  /// Binds a parameter tensor. When the tensor has requires_grad set, backward()
  /// accumulates into its grad slot; otherwise it behaves like constant().
  var param(tensor_type& leaf) {
    tensor_type copy(leaf.rows, leaf.cols, leaf.data);
    return push(std::move(copy), leaf.requires_grad, leaf.requires_grad ? &leaf : nullptr, {});
  }

  /// A leaf whose gradient stays inside the graph; read it back with grad().
  var input(tensor_type value) { return push(std::move(value), true, nullptr, {}); }

  var record(tensor_type value, bool needs_grad, backward_fn fn) {
#ifndef NDEBUG
    for (auto x : value.data) {
      if (!std::isfinite(static_cast<double>(x))) {
        throw degenerate_input_error("non-finite value produced during forward pass");
      }
    }
#endif
    return push(std::move(value), needs_grad, nullptr, std::move(fn));
  }

  [[nodiscard]] const tensor_type& value(var v) const { return nodes_.at(v.id).value; }
  [[nodiscard]] bool needs_grad(var v) const { return nodes_.at(v.id).needs_grad; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of the last backward() root with respect to v (zeros if none).
  [[nodiscard]] tensor_type grad(var v) const {
    const auto& n = nodes_.at(v.id);
    tensor_type g(n.value.rows, n.value.cols);
    if (!n.grad.empty()) g.data = n.grad;
    return g;
  }

  /// Mutable gradient buffer, allocated on first use. Backward closures write here.
  std::vector<Scalar>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), Scalar{0});
    return n.grad;
  }
  [[nodiscard]] const std::vector<Scalar>& grad_of(std::size_t id) const { return nodes_[id].grad; }
  [[nodiscard]] const tensor_type& value_of(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool wants_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Back-propagates from a 1x1 root.
  ///
  /// Interior gradients are recomputed from scratch on every call, while bound
  /// parameter tensors accumulate: calling backward twice without the caller
  /// resetting grads doubles the stored parameter gradient.
  void backward(var root) {
    auto& r = nodes_.at(root.id);
    if (!r.value.is_scalar()) {
      throw contract_error("backward() needs a scalar root, got " + r.value.shape());
    }
    for (auto& n : nodes_) n.grad.clear();
    if (!r.needs_grad) return;
    grad_buffer(root.id)[0] = Scalar{1};
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.leaf != nullptr) {
        if (!n.leaf->grad || n.leaf->grad->size() != n.grad.size()) {
          n.leaf->grad.emplace(n.grad.size(), Scalar{0});
        }
        auto& dst = *n.leaf->grad;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
      }
    }
  }

 private:
  struct node {
    tensor_type value;
    std::vector<Scalar> grad;
    bool needs_grad = false;
    tensor_type* leaf = nullptr;
    backward_fn backward;
  };

  var push(tensor_type value, bool needs_grad, tensor_type* leaf, backward_fn fn) {
    nodes_.push_back(node{std::move(value), {}, needs_grad, leaf, std::move(fn)});
    return var{nodes_.size() - 1};
  }

  std::vector<node> nodes_;
};

using Graph = basic_graph<float>;

namespace ops {

// Sums run in double in index order regardless of Scalar.
using acc_t = double;

inline std::string shapes(const auto& a, const auto& b) { return a.shape() + " and " + b.shape(); }

/// a[m x k] * b[k x n].
template <class S>
var matmul(basic_graph<S>& g, var a, var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.cols != B.rows) throw dimension_error("matmul shape mismatch: " + shapes(A, B));
  const std::size_t m = A.rows, k = A.cols, n = B.cols;
  basic_tensor<S> C(m, n);
  std::vector<acc_t> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const acc_t aip = A.data[i * k + p];
      const S* brow = B.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] = static_cast<S>(acc[j]);
  }
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.record(std::move(C), ng, [a, b, m, k, n](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    if (gr.wants_grad(a.id)) {
      const auto& Bv = gr.value_of(b.id).data;
      auto& dA = gr.grad_buffer(a.id);
      // B transposed so the inner loop runs over contiguous memory; each dA
      // entry still sums over j in ascending order.
      std::vector<S> Bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) Bt[j * k + p] = Bv[p * n + j];
      std::vector<acc_t> acc(k);
      for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const acc_t dcij = dC[i * n + j];
          const S* brow = Bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) acc[p] += dcij * brow[p];
        }
        for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += static_cast<S>(acc[p]);
      }
    }
    if (gr.wants_grad(b.id)) {
      const auto& Av = gr.value_of(a.id).data;
      auto& dB = gr.grad_buffer(b.id);
      std::vector<acc_t> acc(n);
      for (std::size_t p = 0; p < k; ++p) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const acc_t aip = Av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) acc[j] += aip * dC[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += static_cast<S>(acc[j]);
      }
    }
  });
}

/// Element-wise sum. b may also be a single row broadcast over the rows of a.
template <class S>
var add(basic_graph<S>& g, var a, var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  const bool broadcast = B.rows == 1 && A.rows != 1 && B.cols == A.cols;
  if (!A.same_shape(B) && !broadcast) throw dimension_error("add shape mismatch: " + shapes(A, B));
  basic_tensor<S> C = A;
  const std::size_t n = A.cols;
  for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[broadcast ? i % n : i];
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.record(std::move(C), ng, [a, b, broadcast, n](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    if (gr.wants_grad(a.id)) {
      auto& dA = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
    }
    if (gr.wants_grad(b.id)) {
      auto& dB = gr.grad_buffer(b.id);
      if (!broadcast) {
        for (std::size_t i = 0; i < dC.size(); ++i) dB[i] += dC[i];
      } else {
        std::vector<acc_t> acc(n, 0.0);
        for (std::size_t i = 0; i < dC.size(); ++i) acc[i % n] += dC[i];
        for (std::size_t j = 0; j < n; ++j) dB[j] += static_cast<S>(acc[j]);
      }
    }
  });
}

template <class S>
var scale(basic_graph<S>& g, var a, double factor) {
  basic_tensor<S> C = g.value(a);
  for (auto& x : C.data) x = static_cast<S>(x * factor);
  return g.record(std::move(C), g.needs_grad(a), [a, factor](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    auto& dA = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += static_cast<S>(dC[i] * factor);
  });
}

/// Side-by-side concatenation: [a | b].
template <class S>
var concat_cols(basic_graph<S>& g, var a, var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.rows != B.rows) throw dimension_error("concat_cols row mismatch: " + shapes(A, B));
  const std::size_t m = A.rows, ca = A.cols, cb = B.cols;
  basic_tensor<S> C(m, ca + cb);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(A.data.begin() + i * ca, ca, C.data.begin() + i * (ca + cb));
    std::copy_n(B.data.begin() + i * cb, cb, C.data.begin() + i * (ca + cb) + ca);
  }
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.record(std::move(C), ng, [a, b, m, ca, cb](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    if (gr.wants_grad(a.id)) {
      auto& dA = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ca; ++j) dA[i * ca + j] += dC[i * (ca + cb) + j];
    }
    if (gr.wants_grad(b.id)) {
      auto& dB = gr.grad_buffer(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cb; ++j) dB[i * cb + j] += dC[i * (ca + cb) + ca + j];
    }
  });
}

/// Stacked concatenation: [parts[0]; parts[1]; ...]. Empty (0-row) parts are allowed.
template <class S>
var concat_rows(basic_graph<S>& g, std::span<const var> parts) {
  if (parts.empty()) throw contract_error("concat_rows needs at least one part");
  const std::size_t n = g.value(parts.front()).cols;
  basic_tensor<S> C;
  C.cols = n;
  bool ng = false;
  std::vector<std::pair<var, std::size_t>> offsets;
  for (var p : parts) {
    const auto& P = g.value(p);
    if (P.cols != n) throw dimension_error("concat_rows width mismatch: " + shapes(g.value(parts.front()), P));
    offsets.emplace_back(p, C.data.size());
    C.data.insert(C.data.end(), P.data.begin(), P.data.end());
    C.rows += P.rows;
    ng = ng || g.needs_grad(p);
  }
  return g.record(std::move(C), ng, [offsets](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    for (const auto& [p, off] : offsets) {
      if (!gr.wants_grad(p.id)) continue;
      auto& dP = gr.grad_buffer(p.id);
      for (std::size_t i = 0; i < dP.size(); ++i) dP[i] += dC[off + i];
    }
  });
}

template <class S>
var concat_rows(basic_graph<S>& g, std::initializer_list<var> parts) {
  return concat_rows(g, std::span<const var>(parts.begin(), parts.size()));
}

/// Mean over rows: [m x n] -> [1 x n].
template <class S>
var row_mean(basic_graph<S>& g, var a) {
  const auto& A = g.value(a);
  if (A.rows == 0) throw degenerate_input_error("row_mean of an empty tensor");
  const std::size_t m = A.rows, n = A.cols;
  std::vector<acc_t> acc(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) acc[j] += A.data[i * n + j];
  basic_tensor<S> C(1, n);
  for (std::size_t j = 0; j < n; ++j) C.data[j] = static_cast<S>(acc[j] / double(m));
  return g.record(std::move(C), g.needs_grad(a), [a, m, n](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    auto& dA = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += static_cast<S>(dC[j] / double(m));
  });
}

namespace detail {

template <class S, class F, class DF>
var unary(basic_graph<S>& g, var a, F f, DF df_from_out) {
  basic_tensor<S> C = g.value(a);
  for (auto& x : C.data) x = f(x);
  return g.record(std::move(C), g.needs_grad(a), [a, df_from_out](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    const auto& out = gr.value_of(self).data;
    const auto& in = gr.value_of(a.id).data;
    auto& dA = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * df_from_out(in[i], out[i]);
  });
}

}  // namespace detail

template <class S>
var tanh(basic_graph<S>& g, var a) {
  return detail::unary(
      g, a, [](S x) { return std::tanh(x); }, [](S, S y) { return S{1} - y * y; });
}

template <class S>
var relu(basic_graph<S>& g, var a) {
  return detail::unary(
      g, a, [](S x) { return x > S{0} ? x : S{0}; }, [](S x, S) { return x > S{0} ? S{1} : S{0}; });
}

template <class S>
var sigmoid(basic_graph<S>& g, var a) {
  return detail::unary(
      g, a,
      [](S x) {
        return x >= S{0} ? S{1} / (S{1} + std::exp(-x)) : std::exp(x) / (S{1} + std::exp(x));
      },
      [](S, S y) { return y * (S{1} - y); });
}

/// Scales every row to unit L2 norm. Zero rows are a degenerate input.
template <class S>
var l2_normalize(basic_graph<S>& g, var a) {
  const auto& A = g.value(a);
  const std::size_t m = A.rows, n = A.cols;
  std::vector<acc_t> norms(m);
  basic_tensor<S> C(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    acc_t s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += acc_t(A.data[i * n + j]) * A.data[i * n + j];
    if (s <= 0.0) throw degenerate_input_error("l2_normalize of a zero-norm row");
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] = static_cast<S>(A.data[i * n + j] / norms[i]);
  }
  return g.record(std::move(C), g.needs_grad(a), [a, m, n, norms](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    const auto& Y = gr.value_of(self).data;
    auto& dA = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      acc_t dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += acc_t(dC[i * n + j]) * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        dA[i * n + j] += static_cast<S>((dC[i * n + j] - dot * Y[i * n + j]) / norms[i]);
      }
    }
  });
}

/// Pairwise cosine similarity between the rows of a[m x d] and b[n x d],
/// giving [m x n]. With 1-row inputs this is the scalar a.b / (|a||b|).
template <class S>
var cosine_sim(basic_graph<S>& g, var a, var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.cols != B.cols) throw dimension_error("cosine_sim width mismatch: " + shapes(A, B));
  const std::size_t m = A.rows, n = B.rows, d = A.cols;
  auto norms_of = [d](const basic_tensor<S>& T) {
    std::vector<acc_t> out(T.rows);
    for (std::size_t i = 0; i < T.rows; ++i) {
      acc_t s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += acc_t(T.data[i * d + j]) * T.data[i * d + j];
      if (s <= 0.0) throw degenerate_input_error("cosine_sim of a zero-norm vector");
      out[i] = std::sqrt(s);
    }
    return out;
  };
  const auto na = norms_of(A);
  const auto nb = norms_of(B);
  std::vector<acc_t> dots(m * n);
  basic_tensor<S> C(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      acc_t s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += acc_t(A.data[i * d + k]) * B.data[j * d + k];
      dots[i * n + j] = s;
      C.data[i * n + j] = static_cast<S>(s / (na[i] * nb[j]));
    }
  }
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.record(std::move(C), ng, [a, b, m, n, d, na, nb, dots](basic_graph<S>& gr, std::size_t self) {
    const auto& dC = gr.grad_of(self);
    const auto& Av = gr.value_of(a.id).data;
    const auto& Bv = gr.value_of(b.id).data;
    // d cos / d a = b / (|a||b|) - cos * a / |a|^2
    if (gr.wants_grad(a.id)) {
      auto& dA = gr.grad_buffer(a.id);
      std::vector<acc_t> acc(d);
      for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const acc_t up = dC[i * n + j];
          const acc_t inv = 1.0 / (na[i] * nb[j]);
          const acc_t cosv = dots[i * n + j] * inv;
          for (std::size_t k = 0; k < d; ++k) {
            acc[k] += up * (Bv[j * d + k] * inv - cosv * Av[i * d + k] / (na[i] * na[i]));
          }
        }
        for (std::size_t k = 0; k < d; ++k) dA[i * d + k] += static_cast<S>(acc[k]);
      }
    }
    if (gr.wants_grad(b.id)) {
      auto& dB = gr.grad_buffer(b.id);
      std::vector<acc_t> acc(d);
      for (std::size_t j = 0; j < n; ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const acc_t up = dC[i * n + j];
          const acc_t inv = 1.0 / (na[i] * nb[j]);
          const acc_t cosv = dots[i * n + j] * inv;
          for (std::size_t k = 0; k < d; ++k) {
            acc[k] += up * (Av[i * d + k] * inv - cosv * Bv[j * d + k] / (nb[j] * nb[j]));
          }
        }
        for (std::size_t k = 0; k < d; ++k) dB[j * d + k] += static_cast<S>(acc[k]);
      }
    }
  });
}

/// Mean over rows of -log softmax(logits[i])[labels[i]]; returns [1 x 1].
template <class S>
var softmax_cross_entropy(basic_graph<S>& g, var logits, std::span<const std::size_t> labels) {
  const auto& L = g.value(logits);
  const std::size_t m = L.rows, K = L.cols;
  if (labels.size() != m) {
    throw dimension_error("softmax_cross_entropy: " + std::to_string(labels.size()) +
                          " labels for logits " + L.shape());
  }
  if (m == 0) throw degenerate_input_error("softmax_cross_entropy of an empty batch");
  std::vector<acc_t> probs(m * K);
  acc_t total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= K) {
      throw index_error("label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(K) + " classes");
    }
    acc_t mx = L.data[i * K];
    for (std::size_t j = 1; j < K; ++j) mx = std::max<acc_t>(mx, L.data[i * K + j]);
    acc_t z = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      probs[i * K + j] = std::exp(acc_t(L.data[i * K + j]) - mx);
      z += probs[i * K + j];
    }
    for (std::size_t j = 0; j < K; ++j) probs[i * K + j] /= z;
    total += -(acc_t(L.data[i * K + labels[i]]) - mx - std::log(z));
  }
  basic_tensor<S> C = basic_tensor<S>::scalar(static_cast<S>(total / double(m)));
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return g.record(std::move(C), g.needs_grad(logits),
                  [logits, m, K, probs = std::move(probs), lab = std::move(lab)](basic_graph<S>& gr,
                                                                                std::size_t self) {
                    const acc_t up = gr.grad_of(self)[0] / double(m);
                    auto& dL = gr.grad_buffer(logits.id);
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < K; ++j) {
                        const acc_t onehot = j == lab[i] ? 1.0 : 0.0;
                        dL[i * K + j] += static_cast<S>(up * (probs[i * K + j] - onehot));
                      }
                    }
                  });
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, in the
/// overflow-free form max(x,0) - x*t + log(1 + exp(-|x|)). Returns [1 x 1].
template <class S>
var bce_with_logits(basic_graph<S>& g, var logits, std::span<const S> targets) {
  const auto& L = g.value(logits);
  if (targets.size() != L.size()) {
    throw dimension_error("bce_with_logits: " + std::to_string(targets.size()) +
                          " targets for logits " + L.shape());
  }
  if (L.size() == 0) throw degenerate_input_error("bce_with_logits of an empty batch");
  const std::size_t N = L.size();
  acc_t total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const acc_t x = L.data[i];
    const acc_t t = targets[i];
    if (t != 0.0 && t != 1.0) throw contract_error("bce_with_logits target must be 0 or 1");
    total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  basic_tensor<S> C = basic_tensor<S>::scalar(static_cast<S>(total / double(N)));
  std::vector<S> tg(targets.begin(), targets.end());
  return g.record(std::move(C), g.needs_grad(logits),
                  [logits, N, tg = std::move(tg)](basic_graph<S>& gr, std::size_t self) {
                    const acc_t up = gr.grad_of(self)[0] / double(N);
                    const auto& Lv = gr.value_of(logits.id).data;
                    auto& dL = gr.grad_buffer(logits.id);
                    for (std::size_t i = 0; i < N; ++i) {
                      const acc_t x = Lv[i];
                      const acc_t sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                      dL[i] += static_cast<S>(up * (sig - tg[i]));
                    }
                  });
}

/// x * W + b, with b a single row.
template <class S>
var linear(basic_graph<S>& g, var x, var w, var b) {
  return add(g, matmul(g, x, w), b);
}

}  // namespace ops
}  // namespace fdsp
