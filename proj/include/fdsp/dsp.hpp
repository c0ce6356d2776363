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

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fdsp/encoder.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore.hpp"

namespace fdsp {

/// Which prompt family an experiment trains and evaluates.
///   dsp: shared context v + per-domain context u, then a prompt generator
///   hdp: fixed "a photo of a <class>" context, generator only
///   csp: shared context v only, then a prompt generator
///   wgm: dsp prompts used directly, no generator stage
enum class prompt_mode { dsp, hdp, csp, wgm };

inline std::string_view to_string(prompt_mode m) {
  switch (m) {
    case prompt_mode::dsp: return "dsp";
    case prompt_mode::hdp: return "hdp";
    case prompt_mode::csp: return "csp";
    case prompt_mode::wgm: return "wgm";
  }
  return "?";
}

inline prompt_mode parse_prompt_mode(std::string_view s) {
  if (s == "dsp") return prompt_mode::dsp;
  if (s == "hdp") return prompt_mode::hdp;
  if (s == "csp") return prompt_mode::csp;
  if (s == "wgm") return prompt_mode::wgm;
  throw config_error("unknown prompt mode '" + std::string(s) + "' (expected dsp|hdp|csp|wgm)");
}

inline bool trains_prompts(prompt_mode m) { return m != prompt_mode::hdp; }
inline bool trains_generator(prompt_mode m) { return m != prompt_mode::wgm; }

/// Domain-invariant context rows v plus one block of domain-specific rows per domain.
template <class Scalar>
struct basic_dsp_params {
  std::size_t m1 = 4;
  std::size_t m2 = 4;
  std::size_t d_tok = 32;
  basic_tensor<Scalar> v;
  std::map<std::uint32_t, basic_tensor<Scalar>> u;

  template <class Rng>
  static basic_dsp_params make(std::size_t m1, std::size_t m2, std::size_t d_tok,
                               std::span<const std::uint32_t> domains, Rng& rng, double init_std = 0.02) {
    if (m1 == 0 && m2 == 0) throw config_error("prompt needs at least one context row (M1 = M2 = 0)");
    basic_dsp_params p;
    p.m1 = m1;
    p.m2 = m2;
    p.d_tok = d_tok;
    p.v = basic_tensor<float>::gaussian(m1, d_tok, init_std, rng).template cast<Scalar>();
    p.v.requires_grad = true;
    if (m2 > 0) {
      for (auto d : domains) {
        auto t = basic_tensor<float>::gaussian(m2, d_tok, init_std, rng).template cast<Scalar>();
        t.requires_grad = true;
        p.u.emplace(d, std::move(t));
      }
    }
    return p;
  }

  template <class Other>
  [[nodiscard]] basic_dsp_params<Other> cast() const {
    basic_dsp_params<Other> o;
    o.m1 = m1;
    o.m2 = m2;
    o.d_tok = d_tok;
    o.v = v.template cast<Other>();
    for (const auto& [d, t] : u) o.u.emplace(d, t.template cast<Other>());
    return o;
  }

  [[nodiscard]] std::size_t context_rows() const noexcept { return m1 + m2; }
  [[nodiscard]] bool has_domain(std::uint32_t d) const { return m2 == 0 || u.count(d) != 0; }

  const basic_tensor<Scalar>& domain_rows(std::uint32_t d) const {
    auto it = u.find(d);
    if (it == u.end()) throw index_error("no domain-specific prompt for domain " + std::to_string(d));
    return it->second;
  }
  basic_tensor<Scalar>& domain_rows(std::uint32_t d) {
    auto it = u.find(d);
    if (it == u.end()) throw index_error("no domain-specific prompt for domain " + std::to_string(d));
    return it->second;
  }

  /// [v; u^d] as one (M1+M2) x d_tok block.
  [[nodiscard]] basic_tensor<Scalar> context(std::uint32_t d) const {
    if (m2 == 0) return basic_tensor<Scalar>(v.rows, v.cols, v.data);
    const basic_tensor<Scalar> parts[2] = {v, domain_rows(d)};
    return stack_rows<Scalar>(parts);
  }

  /// Named views in wire order: "u/<id>" entries then "v".
  std::vector<std::pair<std::string, basic_tensor<Scalar>*>> named() {
    std::vector<std::pair<std::string, basic_tensor<Scalar>*>> out;
    for (auto& [d, t] : u) out.emplace_back("u/" + std::to_string(d), &t);
    out.emplace_back("v", &v);
    return out;
  }

  [[nodiscard]] std::uint64_t checksum() const {
    fnv1a64 h;
    h.update(v);
    for (const auto& [d, t] : u) h.update_u64(d).update(t);
    return h.digest();
  }
};

using DspParams = basic_dsp_params<float>;

inline bool is_prompt_param_name(std::string_view name) {
  return name == "v" || name.starts_with("u/");
}

/// Row-concatenation [v; u^domain; cls] as a value.
template <class Scalar>
basic_tensor<Scalar> assemble_prompt(const basic_dsp_params<Scalar>& p, std::uint32_t domain,
                                     const basic_tensor<Scalar>& cls) {
  if (cls.rows != 1 || cls.cols != p.d_tok) {
    throw dimension_error("class token must be 1x" + std::to_string(p.d_tok) + ", got " + cls.shape());
  }
  const basic_tensor<Scalar> parts[2] = {p.context(domain), cls};
  return stack_rows<Scalar>(parts);
}

/// Text embeddings [K x d] for prompts [context; cls_k], k = 0..K-1.
///
/// context is any sequence of row blocks that precede the class token.
template <class Scalar>
var class_text_embeddings(basic_graph<Scalar>& g, const basic_frozen_encoders<Scalar>& enc,
                          std::span<const var> context, const basic_tensor<Scalar>& class_tokens) {
  std::vector<var> pooled;
  pooled.reserve(class_tokens.rows);
  std::vector<var> parts(context.begin(), context.end());
  parts.push_back(var{});
  for (std::size_t k = 0; k < class_tokens.rows; ++k) {
    parts.back() = g.constant(class_tokens.row_slice(k, 1));
    pooled.push_back(ops::row_mean(g, ops::concat_rows(g, std::span<const var>(parts))));
  }
  return enc.encode_pooled(g, ops::concat_rows(g, std::span<const var>(pooled)));
}

/// Similarity logits [B x K] = cos(image_emb, text_emb) / tau.
template <class Scalar>
var similarity_logits(basic_graph<Scalar>& g, var image_emb, var text_emb, double tau) {
  if (!(tau > 0.0)) throw contract_error("temperature must be positive, got " + std::to_string(tau));
  return ops::scale(g, ops::cosine_sim(g, image_emb, text_emb), 1.0 / tau);
}

template <class Scalar>
basic_tensor<Scalar> softmax_rows(const basic_tensor<Scalar>& logits) {
  basic_tensor<Scalar> out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max<double>(mx, logits(i, j));
    double z = 0.0;
    std::vector<double> e(logits.cols);
    for (std::size_t j = 0; j < logits.cols; ++j) z += e[j] = std::exp(double(logits(i, j)) - mx);
    for (std::size_t j = 0; j < logits.cols; ++j) out(i, j) = static_cast<Scalar>(e[j] / z);
  }
  return out;
}

/// Class probabilities [B x K] for image embeddings [B x d] under the prompts of one domain.
template <class Scalar>
basic_tensor<Scalar> classify(const basic_frozen_encoders<Scalar>& enc, const basic_dsp_params<Scalar>& p,
                              const basic_tensor<Scalar>& image_emb, std::uint32_t domain,
                              const basic_tensor<Scalar>& class_tokens, double tau) {
  if (class_tokens.rows < 2) throw contract_error("classify needs at least two classes");
  if (!(tau > 0.0)) throw contract_error("temperature must be positive, got " + std::to_string(tau));
  basic_graph<Scalar> g;
  const var ctx = g.constant(p.context(domain));
  const var text = class_text_embeddings(g, enc, std::span<const var>(&ctx, 1), class_tokens);
  const var logits = similarity_logits(g, g.constant(image_emb), text, tau);
  return softmax_rows(g.value(logits));
}

/// One client's mini-batch: precomputed image embeddings with labels and domains.
template <class Scalar>
struct basic_dsp_batch {
  basic_tensor<Scalar> image_emb;  // [B x d]
  std::vector<std::size_t> labels;
  std::vector<std::uint32_t> domains;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

using DspBatch = basic_dsp_batch<float>;

/// Mean cross-entropy of the batch under its own domains' prompts, recorded on g.
/// v and the u blocks of the batch's domains are bound as parameters.
template <class Scalar>
var dsp_loss(basic_graph<Scalar>& g, const basic_frozen_encoders<Scalar>& enc, basic_dsp_params<Scalar>& p,
             const basic_dsp_batch<Scalar>& batch, const basic_tensor<Scalar>& class_tokens, double tau) {
  const std::size_t B = batch.size();
  if (B == 0) throw contract_error("dsp_loss: empty batch");
  if (batch.domains.size() != B || batch.image_emb.rows != B) {
    throw dimension_error("dsp_loss: batch fields disagree in length");
  }
  std::map<std::uint32_t, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < B; ++i) {
    if (!p.has_domain(batch.domains[i])) {
      throw index_error("dsp_loss: no prompt for domain " + std::to_string(batch.domains[i]));
    }
    by_domain[batch.domains[i]].push_back(i);
  }
  const var v = g.param(p.v);
  var total{};
  bool first = true;
  for (const auto& [domain, rows] : by_domain) {
    basic_tensor<Scalar> emb(rows.size(), batch.image_emb.cols);
    std::vector<std::size_t> labels;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(batch.image_emb.row(rows[r]).begin(), emb.cols, emb.row(r).begin());
      labels.push_back(batch.labels[rows[r]]);
    }
    std::vector<var> context{v};
    if (p.m2 > 0) context.push_back(g.param(p.domain_rows(domain)));
    const var text = class_text_embeddings(g, enc, std::span<const var>(context), class_tokens);
    const var logits = similarity_logits(g, g.constant(std::move(emb)), text, tau);
    const var ce = ops::softmax_cross_entropy(g, logits, std::span<const std::size_t>(labels));
    const var weighted = ops::scale(g, ce, double(rows.size()) / double(B));
    total = first ? weighted : ops::add(g, total, weighted);
    first = false;
  }
  return total;
}

/// Per-tensor Adam states, so a step touches only the blocks the batch used.
template <class Scalar>
struct basic_dsp_optimizers {
  optimizer_settings settings;
  std::map<std::string, basic_optimizer_state<Scalar>> states;

  basic_optimizer_state<Scalar>& at(const std::string& name) {
    auto it = states.find(name);
    if (it == states.end()) it = states.emplace(name, basic_optimizer_state<Scalar>(settings)).first;
    return it->second;
  }
};

using DspOptimizers = basic_dsp_optimizers<float>;

/// One optimizer step on v and the u blocks touched by the batch.
/// Returns the mean cross-entropy before the step.
template <class Scalar>
double dsp_train_step(basic_dsp_params<Scalar>& p, const basic_dsp_batch<Scalar>& batch,
                      const basic_frozen_encoders<Scalar>& enc, const basic_tensor<Scalar>& class_tokens,
                      double tau, basic_dsp_optimizers<Scalar>& opt) {
  if (batch.size() == 0) throw contract_error("dsp_train_step: empty batch");
  p.v.requires_grad = true;
  p.v.clear_grad();
  for (auto& [d, t] : p.u) {
    t.requires_grad = true;
    t.clear_grad();
  }
  basic_graph<Scalar> g;
  const var loss = dsp_loss(g, enc, p, batch, class_tokens, tau);
  g.backward(loss);
  basic_tensor<Scalar>* vp = &p.v;
  optimizer_step(opt.at("v"), std::span<basic_tensor<Scalar>* const>(&vp, 1));
  for (auto& [d, t] : p.u) {
    if (!t.grad) continue;  // domain absent from this batch
    basic_tensor<Scalar>* up = &t;
    optimizer_step(opt.at("u/" + std::to_string(d)), std::span<basic_tensor<Scalar>* const>(&up, 1));
  }
  p.v.clear_grad();
  for (auto& [d, t] : p.u) t.clear_grad();
  return static_cast<double>(g.value(loss)(0, 0));
}

inline constexpr std::string_view hand_crafted_words[] = {"a", "photo", "of", "a"};

/// Frozen "a photo of a" context rows [4 x d_tok].
inline Tensor hand_crafted_context(const TokenTable& table) {
  std::vector<Tensor> rows;
  for (auto w : hand_crafted_words) rows.push_back(table.class_token(w));
  return stack_rows<float>(rows);
}

/// "a photo of a <class>" prompts, one [5 x d_tok] block per class. Never trained.
inline std::vector<Tensor> hand_crafted_prompt(const TokenTable& table, std::span<const std::string> classes) {
  const Tensor ctx = hand_crafted_context(table);
  std::vector<Tensor> out;
  for (const auto& c : classes) {
    const Tensor parts[2] = {ctx, table.class_token(c)};
    out.push_back(stack_rows<float>(parts));
  }
  return out;
}

}  // namespace fdsp
