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
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore.hpp"

namespace fdsp {

struct encoder_dims {
  std::size_t feature_dim = 64;
  std::size_t d = 32;       // shared embedding width
  std::size_t d_tok = 32;   // token embedding width
  std::size_t image_hidden = 64;
  std::size_t text_hidden = 128;
};

namespace detail {

template <class S>
struct frozen_layer {
  basic_tensor<S> weight;  // [in x out]
  basic_tensor<S> bias;    // [1 x out]

  template <class Rng>
  static frozen_layer draw(std::size_t in, std::size_t out, Rng& rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    frozen_layer l;
    l.weight = basic_tensor<float>::gaussian(in, out, sd, rng).template cast<S>();
    l.bias = basic_tensor<float>::gaussian(1, out, sd, rng).template cast<S>();
    return l;
  }

  template <class T>
  frozen_layer<T> cast() const {
    return {weight.template cast<T>(), bias.template cast<T>()};
  }

  var apply_tanh(basic_graph<S>& g, var x) const {
    return ops::tanh(g, ops::linear(g, x, g.constant(weight), g.constant(bias)));
  }
};

}  // namespace detail

/// Frozen stand-in for a pretrained dual encoder.
///
/// Both towers are two tanh layers followed by L2 normalisation. The weights
/// enter every graph as constants, so gradients can reach the inputs (this is
/// how prompt tokens are trained) but never the towers themselves.
template <class Scalar>
class basic_frozen_encoders {
 public:
  basic_frozen_encoders(encoder_dims dims, std::uint64_t seed) : dims_(dims), seed_(seed) {
    if (dims.feature_dim == 0 || dims.d == 0 || dims.d_tok == 0) {
      throw dimension_error("encoder dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    image_[0] = detail::frozen_layer<Scalar>::draw(dims.feature_dim, dims.image_hidden, rng);
    image_[1] = detail::frozen_layer<Scalar>::draw(dims.image_hidden, dims.d, rng);
    text_[0] = detail::frozen_layer<Scalar>::draw(dims.d_tok, dims.text_hidden, rng);
    text_[1] = detail::frozen_layer<Scalar>::draw(dims.text_hidden, dims.d, rng);
  }

  template <class Other>
  explicit basic_frozen_encoders(const basic_frozen_encoders<Other>& o)
      : dims_(o.dims()), seed_(o.seed()) {
    for (int i = 0; i < 2; ++i) {
      image_[i] = o.image_layer(i).template cast<Scalar>();
      text_[i] = o.text_layer(i).template cast<Scalar>();
    }
  }

  [[nodiscard]] const encoder_dims& dims() const noexcept { return dims_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] const detail::frozen_layer<Scalar>& image_layer(int i) const { return image_[i]; }
  [[nodiscard]] const detail::frozen_layer<Scalar>& text_layer(int i) const { return text_[i]; }

  /// Rows of features [B x feature_dim] -> unit-norm embeddings [B x d].
  var encode_image(basic_graph<Scalar>& g, var features) const {
    if (g.value(features).cols != dims_.feature_dim) {
      throw dimension_error("encode_image expects " + std::to_string(dims_.feature_dim) +
                            " features, got " + g.value(features).shape());
    }
    return ops::l2_normalize(g, image_[1].apply_tanh(g, image_[0].apply_tanh(g, features)));
  }

  /// Already mean-pooled token rows [B x d_tok] -> unit-norm embeddings [B x d].
  var encode_pooled(basic_graph<Scalar>& g, var pooled) const {
    if (g.value(pooled).cols != dims_.d_tok) {
      throw dimension_error("text encoder expects token width " + std::to_string(dims_.d_tok) +
                            ", got " + g.value(pooled).shape());
    }
    return ops::l2_normalize(g, text_[1].apply_tanh(g, text_[0].apply_tanh(g, pooled)));
  }

  /// Token sequence [T x d_tok] -> unit-norm embedding [1 x d].
  var encode_text(basic_graph<Scalar>& g, var tokens) const {
    if (g.value(tokens).rows == 0) throw degenerate_input_error("encode_text of an empty token sequence");
    return encode_pooled(g, ops::row_mean(g, tokens));
  }

  [[nodiscard]] basic_tensor<Scalar> encode_image(const basic_tensor<Scalar>& features) const {
    basic_graph<Scalar> g;
    return g.value(encode_image(g, g.constant(features)));
  }
  [[nodiscard]] basic_tensor<Scalar> encode_text(const basic_tensor<Scalar>& tokens) const {
    basic_graph<Scalar> g;
    return g.value(encode_text(g, g.constant(tokens)));
  }

  /// Hash of every frozen weight; constant for the lifetime of the object.
  [[nodiscard]] std::uint64_t checksum() const {
    fnv1a64 h;
    for (const auto& l : image_) h.update(l.weight).update(l.bias);
    for (const auto& l : text_) h.update(l.weight).update(l.bias);
    return h.digest();
  }

 private:
  encoder_dims dims_;
  std::uint64_t seed_;
  detail::frozen_layer<Scalar> image_[2];
  detail::frozen_layer<Scalar> text_[2];
};

using FrozenEncoders = basic_frozen_encoders<float>;

/// Name -> token embedding, derived from a hash of the full name and the table seed.
class TokenTable {
 public:
  TokenTable(std::size_t d_tok, std::uint64_t seed, double scale = 1.0)
      : d_tok_(d_tok), seed_(seed), scale_(scale) {}

  TokenTable(const TokenTable& o) : d_tok_(o.d_tok_), seed_(o.seed_), scale_(o.scale_) {
    std::lock_guard lock(o.mutex_);
    cache_ = o.cache_;
  }

  [[nodiscard]] std::size_t d_tok() const noexcept { return d_tok_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  [[nodiscard]] Tensor class_token(std::string_view name) const {
    if (name.empty()) throw contract_error("class_token: empty name");
    std::lock_guard lock(mutex_);
    auto it = cache_.find(std::string(name));
    if (it != cache_.end()) return it->second;
    std::mt19937_64 rng(fnv1a64{}.update(name).update_u64(seed_).digest());
    Tensor t = Tensor::gaussian(1, d_tok_, scale_, rng);
    cache_.emplace(std::string(name), t);
    return t;
  }

  /// Rows of class tokens, one per name, in the given order.
  [[nodiscard]] Tensor class_tokens(std::span<const std::string> names) const {
    std::vector<Tensor> rows;
    rows.reserve(names.size());
    for (const auto& n : names) rows.push_back(class_token(n));
    return stack_rows<float>(rows);
  }

  /// Hash over every entry handed out so far, in name order.
  [[nodiscard]] std::uint64_t checksum() const {
    std::lock_guard lock(mutex_);
    fnv1a64 h;
    h.update_u64(d_tok_).update_u64(seed_);
    for (const auto& [name, t] : cache_) h.update(name).update(t);
    return h.digest();
  }

 private:
  std::size_t d_tok_;
  std::uint64_t seed_;
  double scale_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, Tensor> cache_;
};

}  // namespace fdsp
