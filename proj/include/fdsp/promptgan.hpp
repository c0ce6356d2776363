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
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore.hpp"

namespace fdsp {

struct gan_dims {
  std::size_t z_dim = 16;
  std::size_t d = 32;
  std::size_t context_rows = 8;  // M1 + M2
  std::size_t d_tok = 32;
  std::size_t hidden = 128;

  [[nodiscard]] std::size_t prompt_width() const noexcept { return context_rows * d_tok; }
};

template <class Scalar>
struct basic_dense_layer {
  basic_tensor<Scalar> weight;  // [in x out]
  basic_tensor<Scalar> bias;    // [1 x out]
};

/// Generator: [z, f(x)] -> tanh -> tanh -> linear -> flattened context rows.
/// Discriminator: [prompt, f(x)] -> relu -> relu -> linear -> realness logit.
template <class Scalar>
struct basic_gan_params {
  gan_dims dims;
  std::vector<basic_dense_layer<Scalar>> gen;
  std::vector<basic_dense_layer<Scalar>> disc;

  /// Gaussian std 1/sqrt(fan_in) weights and zero biases. The generator output
  /// layer is scaled by output_gain.
  static basic_gan_params make(const gan_dims& dims, std::uint64_t seed, double output_gain = 1.0) {
    if (dims.context_rows == 0 || dims.d_tok == 0 || dims.hidden == 0 || dims.d == 0) {
      throw dimension_error("gan dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    basic_gan_params p;
    p.dims = dims;
    auto layer = [&rng](std::size_t in, std::size_t out, double gain) {
      basic_dense_layer<Scalar> l;
      l.weight = basic_tensor<float>::gaussian(in, out, gain / std::sqrt(double(in)), rng).template cast<Scalar>();
      l.bias = basic_tensor<Scalar>(1, out);
      l.weight.requires_grad = l.bias.requires_grad = true;
      return l;
    };
    const std::size_t h = dims.hidden;
    p.gen.push_back(layer(dims.z_dim + dims.d, h, 1.0));
    p.gen.push_back(layer(h, h, 1.0));
    p.gen.push_back(layer(h, dims.prompt_width(), output_gain));
    p.disc.push_back(layer(dims.prompt_width() + dims.d, h, 1.0));
    p.disc.push_back(layer(h, h, 1.0));
    p.disc.push_back(layer(h, 1, 1.0));
    return p;
  }

  template <class Other>
  [[nodiscard]] basic_gan_params<Other> cast() const {
    basic_gan_params<Other> o;
    o.dims = dims;
    for (const auto& l : gen) o.gen.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    for (const auto& l : disc) o.disc.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    return o;
  }

  std::vector<basic_tensor<Scalar>*> generator_tensors() {
    std::vector<basic_tensor<Scalar>*> out;
    for (auto& l : gen) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<basic_tensor<Scalar>*> discriminator_tensors() {
    std::vector<basic_tensor<Scalar>*> out;
    for (auto& l : disc) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  /// "G/l<i>.w", "G/l<i>.b", "D/l<i>.w", ...
  std::vector<std::pair<std::string, basic_tensor<Scalar>*>> named() {
    std::vector<std::pair<std::string, basic_tensor<Scalar>*>> out;
    auto add = [&out](const char* prefix, std::vector<basic_dense_layer<Scalar>>& layers) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        out.emplace_back(std::string(prefix) + "/l" + std::to_string(i) + ".w", &layers[i].weight);
        out.emplace_back(std::string(prefix) + "/l" + std::to_string(i) + ".b", &layers[i].bias);
      }
    };
    add("G", gen);
    add("D", disc);
    return out;
  }

  [[nodiscard]] std::uint64_t generator_checksum() const {
    fnv1a64 h;
    for (const auto& l : gen) h.update(l.weight).update(l.bias);
    return h.digest();
  }
  [[nodiscard]] std::uint64_t discriminator_checksum() const {
    fnv1a64 h;
    for (const auto& l : disc) h.update(l.weight).update(l.bias);
    return h.digest();
  }
};

using GanParams = basic_gan_params<float>;

inline bool is_gan_param_name(std::string_view name) {
  return name.starts_with("G/") || name.starts_with("D/");
}

namespace detail {

template <class Scalar>
var dense(basic_graph<Scalar>& g, basic_dense_layer<Scalar>& l, var x, bool trainable) {
  const var w = trainable ? g.param(l.weight) : g.constant(l.weight);
  const var b = trainable ? g.param(l.bias) : g.constant(l.bias);
  return ops::linear(g, x, w, b);
}

}  // namespace detail

/// Flattened generated context rows [B x context_rows*d_tok] for noise [B x z_dim]
/// and image embeddings [B x d]. With trainable=false the weights enter as constants.
template <class Scalar>
var generator_forward(basic_graph<Scalar>& g, basic_gan_params<Scalar>& gan, var z, var image_emb,
                      bool trainable) {
  const auto& Z = g.value(z);
  const auto& E = g.value(image_emb);
  if (Z.cols != gan.dims.z_dim || E.cols != gan.dims.d || Z.rows != E.rows) {
    throw dimension_error("generator input mismatch: noise " + Z.shape() + ", embedding " + E.shape());
  }
  var h = ops::concat_cols(g, z, image_emb);
  h = ops::tanh(g, detail::dense(g, gan.gen[0], h, trainable));
  h = ops::tanh(g, detail::dense(g, gan.gen[1], h, trainable));
  return detail::dense(g, gan.gen[2], h, trainable);
}

/// Realness logits [B x 1] for flattened prompts [B x context_rows*d_tok] paired with embeddings [B x d].
template <class Scalar>
var discriminator_forward(basic_graph<Scalar>& g, basic_gan_params<Scalar>& gan, var prompt_flat,
                          var image_emb, bool trainable) {
  const auto& P = g.value(prompt_flat);
  const auto& E = g.value(image_emb);
  if (P.cols != gan.dims.prompt_width() || E.cols != gan.dims.d || P.rows != E.rows) {
    throw dimension_error("discriminator input mismatch: prompt " + P.shape() + ", embedding " + E.shape());
  }
  var h = ops::concat_cols(g, prompt_flat, image_emb);
  h = ops::relu(g, detail::dense(g, gan.disc[0], h, trainable));
  h = ops::relu(g, detail::dense(g, gan.disc[1], h, trainable));
  return detail::dense(g, gan.disc[2], h, trainable);
}

/// G(z | f(x)) reshaped to [context_rows x d_tok].
template <class Scalar>
basic_tensor<Scalar> generate(const basic_gan_params<Scalar>& gan, const basic_tensor<Scalar>& z,
                              const basic_tensor<Scalar>& image_emb) {
  if (z.rows != 1 || image_emb.rows != 1) throw dimension_error("generate takes one noise row and one embedding");
  basic_graph<Scalar> g;
  auto& mut = const_cast<basic_gan_params<Scalar>&>(gan);  // constants only: never written
  const var out = generator_forward(g, mut, g.constant(z), g.constant(image_emb), false);
  return g.value(out).reshaped(gan.dims.context_rows, gan.dims.d_tok);
}

/// Realness logit of one [context_rows x d_tok] prompt paired with one embedding.
template <class Scalar>
double discriminate(const basic_gan_params<Scalar>& gan, const basic_tensor<Scalar>& prompt,
                    const basic_tensor<Scalar>& image_emb) {
  if (prompt.rows != gan.dims.context_rows || prompt.cols != gan.dims.d_tok) {
    throw dimension_error("discriminate expects a " +
                          basic_tensor<Scalar>::shape_string(gan.dims.context_rows, gan.dims.d_tok) +
                          " prompt, got " + prompt.shape());
  }
  basic_graph<Scalar> g;
  auto& mut = const_cast<basic_gan_params<Scalar>&>(gan);
  const var flat = g.constant(prompt.reshaped(1, prompt.size()));
  return static_cast<double>(g.value(discriminator_forward(g, mut, flat, g.constant(image_emb), false))(0, 0));
}

/// One adversarial step's inputs. Real rows pair a stage-1 context with an image
/// of its domain; fake rows pair fresh noise with a freshly sampled image.
template <class Scalar>
struct basic_gan_batch {
  basic_tensor<Scalar> real_prompt;  // [B x context_rows*d_tok]
  basic_tensor<Scalar> real_emb;     // [B x d]
  basic_tensor<Scalar> fake_emb;     // [B x d]
  basic_tensor<Scalar> noise;        // [B x z_dim]

  [[nodiscard]] std::size_t size() const noexcept { return real_prompt.rows; }
};

using GanBatch = basic_gan_batch<float>;

enum class generator_loss { non_saturating, saturating };

struct gan_step_options {
  generator_loss g_loss = generator_loss::non_saturating;
  std::size_t d_steps = 1;
};

struct gan_step_result {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

/// Discriminator loss: BCE(real -> 1) + BCE(fake -> 0), each a batch mean.
template <class Scalar>
var discriminator_loss(basic_graph<Scalar>& g, basic_gan_params<Scalar>& gan, const basic_gan_batch<Scalar>& b,
                       bool train_disc, bool train_gen) {
  const std::size_t B = b.size();
  const std::vector<Scalar> ones(B, Scalar{1}), zeros(B, Scalar{0});
  const var fake = generator_forward(g, gan, g.constant(b.noise), g.constant(b.fake_emb), train_gen);
  const var real_logit = discriminator_forward(g, gan, g.constant(b.real_prompt), g.constant(b.real_emb), train_disc);
  const var fake_logit = discriminator_forward(g, gan, fake, g.constant(b.fake_emb), train_disc);
  return ops::add(g, ops::bce_with_logits(g, real_logit, std::span<const Scalar>(ones)),
                  ops::bce_with_logits(g, fake_logit, std::span<const Scalar>(zeros)));
}

/// Generator loss on the fake rows: -log D(G(z|f(x))) by default, or the
/// literal log(1 - D(G(z|f(x)))) of the min-max objective.
template <class Scalar>
var generator_loss_var(basic_graph<Scalar>& g, basic_gan_params<Scalar>& gan, const basic_gan_batch<Scalar>& b,
                       generator_loss kind, bool train_gen, bool train_disc) {
  const std::size_t B = b.size();
  const var fake = generator_forward(g, gan, g.constant(b.noise), g.constant(b.fake_emb), train_gen);
  const var logit = discriminator_forward(g, gan, fake, g.constant(b.fake_emb), train_disc);
  if (kind == generator_loss::non_saturating) {
    const std::vector<Scalar> ones(B, Scalar{1});
    return ops::bce_with_logits(g, logit, std::span<const Scalar>(ones));
  }
  const std::vector<Scalar> zeros(B, Scalar{0});
  return ops::scale(g, ops::bce_with_logits(g, logit, std::span<const Scalar>(zeros)), -1.0);
}

template <class Scalar>
struct basic_gan_optimizers {
  basic_optimizer_state<Scalar> gen;
  basic_optimizer_state<Scalar> disc;
};

using GanOptimizers = basic_gan_optimizers<float>;

/// d_steps discriminator updates (generator held fixed) followed by one generator
/// update (discriminator held fixed). Losses are reported before their updates.
template <class Scalar>
gan_step_result gan_train_step(basic_gan_params<Scalar>& gan, const basic_gan_batch<Scalar>& batch,
                               basic_gan_optimizers<Scalar>& opt, const gan_step_options& options = {}) {
  if (batch.size() == 0) throw contract_error("gan_train_step: empty batch");
  if (batch.real_emb.rows != batch.size() || batch.fake_emb.rows != batch.size() ||
      batch.noise.rows != batch.size()) {
    throw dimension_error("gan_train_step: batch fields disagree in length");
  }
  gan_step_result out;
  auto d_params = gan.discriminator_tensors();
  auto g_params = gan.generator_tensors();
  for (std::size_t s = 0; s < std::max<std::size_t>(options.d_steps, 1); ++s) {
    for (auto* t : d_params) t->clear_grad();
    basic_graph<Scalar> g;
    const var loss = discriminator_loss(g, gan, batch, true, false);
    g.backward(loss);
    if (s == 0) out.d_loss = static_cast<double>(g.value(loss)(0, 0));
    optimizer_step(opt.disc, std::span<basic_tensor<Scalar>* const>(d_params));
    for (auto* t : d_params) t->clear_grad();
  }
  for (auto* t : g_params) t->clear_grad();
  basic_graph<Scalar> g;
  const var loss = generator_loss_var(g, gan, batch, options.g_loss, true, false);
  g.backward(loss);
  out.g_loss = static_cast<double>(g.value(loss)(0, 0));
  optimizer_step(opt.gen, std::span<basic_tensor<Scalar>* const>(g_params));
  for (auto* t : g_params) t->clear_grad();
  return out;
}

/// Stage-1 contexts ("real" prompts) of one client, flattened to [1 x R*d_tok]
/// per domain, and the image embeddings they pair with.
struct RealPromptBank {
  std::map<std::uint32_t, Tensor> contexts;
  Tensor embeddings;                  // [n x d]
  std::vector<std::uint32_t> domains;  // domain of each embedding row

  [[nodiscard]] std::size_t size() const noexcept { return domains.size(); }

  void add_context(std::uint32_t domain, const Tensor& rows) { contexts[domain] = rows.reshaped(1, rows.size()); }
};

/// Builds a batch from the given bank rows. Fake embeddings are drawn uniformly
/// (with replacement) from the whole bank and noise is standard normal.
template <class Rng>
GanBatch sample_gan_batch(const RealPromptBank& bank, std::span<const std::size_t> rows, std::size_t z_dim, Rng& rng) {
  if (rows.empty()) throw contract_error("sample_gan_batch: no rows");
  if (bank.size() == 0) throw contract_error("sample_gan_batch: empty bank");
  const std::size_t B = rows.size();
  const std::size_t width = bank.contexts.begin()->second.cols;
  const std::size_t d = bank.embeddings.cols;
  GanBatch b{Tensor(B, width), Tensor(B, d), Tensor(B, d), Tensor(B, z_dim)};
  std::uniform_int_distribution<std::size_t> pick(0, bank.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < B; ++i) {
    const auto r = rows[i];
    const auto it = bank.contexts.find(bank.domains.at(r));
    if (it == bank.contexts.end()) {
      throw index_error("no real prompt for domain " + std::to_string(bank.domains[r]));
    }
    std::copy(it->second.data.begin(), it->second.data.end(), b.real_prompt.row(i).begin());
    std::copy(bank.embeddings.row(r).begin(), bank.embeddings.row(r).end(), b.real_emb.row(i).begin());
    const auto f = pick(rng);
    std::copy(bank.embeddings.row(f).begin(), bank.embeddings.row(f).end(), b.fake_emb.row(i).begin());
    for (auto& x : b.noise.row(i)) x = static_cast<float>(normal(rng));
  }
  return b;
}

}  // namespace fdsp
