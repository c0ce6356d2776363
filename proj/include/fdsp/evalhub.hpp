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

#include <algorithm>
#include <cstdio>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fdsp/config.hpp"
#include "fdsp/datagen.hpp"
#include "fdsp/dsp.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/fed/round.hpp"
#include "fdsp/pipeline.hpp"
#include "fdsp/promptgan.hpp"

namespace fdsp {

struct Prediction {
  Tensor probs;  // [1 x K]
  std::size_t predicted = 0;
  std::optional<std::size_t> true_label;
};

namespace detail {

inline Prediction from_logits(const Tensor& mean_logits) {
  Prediction p;
  p.probs = softmax_rows(mean_logits);
  for (std::size_t j = 1; j < p.probs.cols; ++j)
    if (p.probs(0, j) > p.probs(0, p.predicted)) p.predicted = j;
  return p;
}

inline Tensor context_logits(const FrozenEncoders& enc, const Tensor& context, const Tensor& class_tokens,
                             const Tensor& image_emb, double tau) {
  Graph g;
  const var ctx = g.constant(context);
  const var text = class_text_embeddings(g, enc, std::span<const var>(&ctx, 1), class_tokens);
  return g.value(similarity_logits(g, g.constant(image_emb), text, tau));
}

}  // namespace detail

/// Class probabilities for one image embedding [1 x d] with prompts
/// [G(z|f(x)); c_j]. Under mean_of_samples the logits of `samples` noise draws
/// are averaged before the softmax. `noise_seed` fixes the draws for this image.
inline Prediction predict(const GanParams& gan, const FrozenEncoders& enc, const Tensor& class_tokens,
                          const Tensor& image_emb, double tau, z_policy policy, std::size_t samples,
                          std::uint64_t noise_seed) {
  if (class_tokens.rows < 2) throw contract_error("predict needs at least two classes");
  if (!(tau > 0.0)) throw contract_error("temperature must be positive, got " + std::to_string(tau));
  if (image_emb.rows != 1) throw dimension_error("predict takes one image embedding, got " + image_emb.shape());
  const auto R = gan.dims.context_rows, T = gan.dims.d_tok;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t S = policy == z_policy::mean_of_samples ? std::max<std::size_t>(samples, 1) : 1;
  Tensor sum(1, class_tokens.rows);
  for (std::size_t s = 0; s < S; ++s) {
    Tensor z(1, gan.dims.z_dim);
    if (policy != z_policy::fixed_zero)
      for (auto& x : z.data) x = static_cast<float>(normal(rng));
    const Tensor ctx = generate(gan, z, image_emb).reshaped(R, T);
    const Tensor logits = detail::context_logits(enc, ctx, class_tokens, image_emb, tau);
    for (std::size_t j = 0; j < sum.cols; ++j) sum.data[j] += logits.data[j];
  }
  if (S > 1)
    for (auto& x : sum.data) x = static_cast<float>(double(x) / double(S));
  return detail::from_logits(sum);
}

/// [v; mean over source domains of u], the context used without a generator.
inline Tensor mean_domain_context(const DspParams& p) {
  if (p.m2 == 0) return p.v;
  if (p.u.empty()) throw contract_error("no source-domain prompts to average");
  Tensor mean(p.m2, p.d_tok);
  std::vector<double> acc(mean.size(), 0.0);
  for (const auto& [d, t] : p.u)
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += t.data[k];
  for (std::size_t k = 0; k < acc.size(); ++k) mean.data[k] = static_cast<float>(acc[k] / double(p.u.size()));
  const Tensor parts[2] = {p.v, mean};
  return stack_rows<float>(parts);
}

inline Prediction predict_wgm(const DspParams& p, const FrozenEncoders& enc, const Tensor& class_tokens,
                              const Tensor& image_emb, double tau) {
  if (class_tokens.rows < 2) throw contract_error("predict needs at least two classes");
  if (!(tau > 0.0)) throw contract_error("temperature must be positive, got " + std::to_string(tau));
  return detail::from_logits(detail::context_logits(enc, mean_domain_context(p), class_tokens, image_emb, tau));
}

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Accuracy and the unweighted mean of per-class F1 over all K classes. A class
/// with no true positives (including one never seen nor predicted) scores 0.
inline Metrics score(std::span<const std::size_t> truth, std::span<const std::size_t> pred, std::size_t K) {
  if (truth.empty()) throw degenerate_input_error("cannot score an empty prediction set");
  if (truth.size() != pred.size()) throw dimension_error("truth and prediction counts differ");
  std::vector<std::size_t> tp(K), fp(K), fn(K);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= K || pred[i] >= K) throw index_error("class index out of range");
    if (truth[i] == pred[i]) {
      ++correct;
      ++tp[truth[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  Metrics m;
  m.accuracy = double(correct) / double(truth.size());
  double f1 = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = 2.0 * double(tp[k]) + double(fp[k]) + double(fn[k]);
    f1 += denom > 0.0 ? 2.0 * double(tp[k]) / denom : 0.0;
  }
  m.macro_f1 = f1 / double(K);
  return m;
}

struct EvalRow {
  std::string target_domain;
  std::size_t samples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct EvalReport {
  std::string protocol;  // "lodo", "cross-dataset" or "holdout"
  std::string mode;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;

  [[nodiscard]] double mean_accuracy() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.accuracy;
    return rows.empty() ? 0.0 : s / double(rows.size());
  }
  [[nodiscard]] double mean_macro_f1() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.macro_f1;
    return rows.empty() ? 0.0 : s / double(rows.size());
  }

  static std::string csv_header() { return "protocol,target_domain,accuracy,macro_f1,seed,config_hash\n"; }

  [[nodiscard]] std::string csv_rows() const {
    std::string out;
    char buf[64];
    for (const auto& r : rows) {
      out += protocol + "," + r.target_domain + ",";
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,", r.accuracy, r.macro_f1);
      out += buf + std::to_string(seed) + "," + config_hash + "\n";
    }
    return out;
  }
  [[nodiscard]] std::string to_csv() const { return csv_header() + csv_rows(); }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["mode"] = mode;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    auto& arr = j["domains"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      arr.push_back({{"target_domain", r.target_domain},
                     {"samples", r.samples},
                     {"accuracy", r.accuracy},
                     {"macro_f1", r.macro_f1}});
    }
    j["mean_accuracy"] = mean_accuracy();
    j["mean_macro_f1"] = mean_macro_f1();
    return j;
  }
};

/// Per-image predictions for every sample of one domain, in dataset order.
/// Images are spread over `threads` workers and merged by index.
inline std::vector<Prediction> predict_domain(const TrainedModel& model, const Runtime& rt,
                                              const data::DomainDataset& ds, std::uint32_t domain,
                                              const ExperimentConfig& cfg, std::size_t threads = 1) {
  const auto rows = ds.indices_of(domain);
  if (rows.empty()) throw degenerate_input_error("target domain '" + ds.domain(domain).name + "' has no samples");
  const Tensor class_tokens = rt.table.class_tokens(ds.classes);
  if (model.mode != prompt_mode::wgm && !model.gan) throw contract_error("model has no trained generator");
  std::vector<Prediction> out(rows.size());
  const auto errors = fed::parallel_for(rows.size(), threads, [&](std::size_t k) {
    const auto i = rows[k];
    const Tensor emb = rt.image_emb.row_slice(i, 1);
    out[k] = model.mode == prompt_mode::wgm
                 ? predict_wgm(model.prompts, rt.enc, class_tokens, emb, cfg.tau)
                 : predict(*model.gan, rt.enc, class_tokens, emb, cfg.tau, cfg.inference_z, cfg.z_samples,
                           detail::stream_seed(cfg.noise_seed, "predict", i));
    out[k].true_label = ds.label_of[i];
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline EvalRow evaluate(const TrainedModel& model, const Runtime& rt, const data::DomainDataset& ds,
                        std::uint32_t target, const ExperimentConfig& cfg, std::size_t threads = 1) {
  const auto preds = predict_domain(model, rt, ds, target, cfg, threads);
  std::vector<std::size_t> truth, pred;
  for (const auto& p : preds) {
    truth.push_back(*p.true_label);
    pred.push_back(p.predicted);
  }
  const auto m = score(truth, pred, ds.num_classes());
  return EvalRow{ds.domain(target).name, preds.size(), m.accuracy, m.macro_f1};
}

inline EvalReport make_report(std::string protocol, const ExperimentConfig& cfg) {
  EvalReport r;
  r.protocol = std::move(protocol);
  r.mode = std::string(to_string(cfg.mode));
  r.config_hash = cfg.hash();
  r.seed = cfg.model_seed;
  return r;
}

/// Evaluates a trained model on every domain of ds.
inline EvalReport evaluate_all(const TrainedModel& model, const Runtime& rt, const data::DomainDataset& ds,
                               const ExperimentConfig& cfg, std::string protocol, std::size_t threads = 1) {
  auto report = make_report(std::move(protocol), cfg);
  for (const auto& d : ds.domains) report.rows.push_back(evaluate(model, rt, ds, d.id, cfg, threads));
  return report;
}

/// Trains once per domain with that domain held out and evaluates on it.
inline EvalReport leave_one_domain_out(const ExperimentConfig& cfg, const data::DomainDataset& ds, const Runtime& rt,
                                       const RunOptions& opts = {}) {
  if (ds.domains.size() < 2) throw contract_error("leave-one-domain-out needs at least two domains");
  auto report = make_report("lodo", cfg);
  for (const auto& target : ds.domains) {
    std::vector<std::uint32_t> sources;
    for (const auto& d : ds.domains)
      if (d.id != target.id) sources.push_back(d.id);
    const auto model = train_model(cfg, ds, rt, sources, target.id, opts);
    report.rows.push_back(evaluate(model, rt, ds, target.id, cfg, opts.threads));
  }
  return report;
}

inline EvalReport leave_one_domain_out(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const auto ds = make_dataset(cfg);
  const auto rt = Runtime::make(cfg, ds);
  return leave_one_domain_out(cfg, ds, rt, opts);
}

/// Trains on every source-dataset domain and evaluates each target-dataset
/// domain zero-shot, with class tokens taken from the target's class names.
inline EvalReport cross_dataset(const ExperimentConfig& cfg, const data::DomainDataset& source,
                                const data::DomainDataset& target, const RunOptions& opts = {}) {
  if (source.feature_dim != target.feature_dim) {
    throw dimension_error("source feature_dim " + std::to_string(source.feature_dim) + " differs from target " +
                          std::to_string(target.feature_dim));
  }
  const auto rt = Runtime::make(cfg, source);
  std::vector<std::uint32_t> sources;
  for (const auto& d : source.domains) sources.push_back(d.id);
  const auto model = train_model(cfg, source, rt, sources, std::nullopt, opts);
  return evaluate_all(model, rt.rebind(target), target, cfg, "cross-dataset", opts.threads);
}

}  // namespace fdsp
