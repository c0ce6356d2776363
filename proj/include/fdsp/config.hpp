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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fdsp/datagen.hpp"
#include "fdsp/dsp.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/fed/aggregate.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore/optimizer.hpp"
#include "fdsp/promptgan.hpp"

namespace fdsp {

enum class z_policy { fixed_zero, seeded_sample, mean_of_samples };

inline std::string_view to_string(z_policy p) {
  switch (p) {
    case z_policy::fixed_zero: return "fixed-zero";
    case z_policy::seeded_sample: return "seeded-sample";
    case z_policy::mean_of_samples: return "mean-of-samples";
  }
  return "?";
}

inline z_policy parse_z_policy(std::string_view s) {
  if (s == "fixed-zero") return z_policy::fixed_zero;
  if (s == "seeded-sample") return z_policy::seeded_sample;
  if (s == "mean-of-samples") return z_policy::mean_of_samples;
  throw config_error("unknown z policy '" + std::string(s) + "'");
}

/// Everything that determines a run. Two configs with the same canonical text
/// produce byte-identical outputs.
///
/// Member defaults use the reference optimizer settings (stage-1 Adam lr 1e-5,
/// stage-2 AdamW lr 1e-4) over 30 epochs. paper_profile() stretches that to 100.
struct ExperimentConfig {
  // dataset: a path, or a synthetic spec when the path is empty
  std::string dataset_path;
  data::SyntheticSpec synthetic{};

  std::size_t n_clients = 3;
  double overlap_ratio = 0.0;
  prompt_mode mode = prompt_mode::dsp;
  std::size_t m1 = 4;
  std::size_t m2 = 4;
  std::size_t d = 32;
  std::size_t d_tok = 32;
  std::size_t image_hidden = 64;
  std::size_t text_hidden = 128;
  double token_scale = 1.0;
  double prompt_init_std = 0.02;
  double tau = 0.01;

  double alpha = 0.2;
  fed::momentum_rule rule = fed::momentum_rule::reformulated;
  bool sample_weighted = false;

  std::size_t z_dim = 16;
  std::size_t gan_hidden = 128;
  double gan_output_gain = 1.0;
  std::size_t d_steps = 1;
  generator_loss g_loss = generator_loss::non_saturating;
  z_policy inference_z = z_policy::mean_of_samples;
  std::size_t z_samples = 8;

  std::size_t epochs = 30;      // stage 1
  std::size_t gan_epochs = 30;  // stage 2
  double epochs_per_round = 1.0;
  std::size_t batch_size = 32;
  optimizer_settings prompt_opt{optimizer_kind::adam, 1e-5, 0.9, 0.999, 1e-8, 0.0};
  optimizer_settings gan_opt{optimizer_kind::adamw, 1e-4, 0.9, 0.999, 1e-8, 2e-5};

  std::uint64_t data_seed = 0;
  std::uint64_t model_seed = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t backbone_seed = 0;  // frozen encoders and token table; not touched by "seed"

  std::string target_domain;  // train: held-out domain name (empty: train on all)
  std::string output_dir = "out";

  /// Reference schedule: 100 epochs of both stages at the defaults' optimizer settings.
  static ExperimentConfig paper_profile() {
    ExperimentConfig c;
    c.epochs = 100;
    c.gan_epochs = 100;
    c.batch_size = 32;
    c.prompt_opt = {optimizer_kind::adam, 1e-5, 0.9, 0.999, 1e-8, 0.0};
    c.gan_opt = {optimizer_kind::adamw, 1e-4, 0.9, 0.999, 1e-8, 2e-5};
    return c;
  }

  /// Settings that train to convergence on the 16-shot synthetic presets within
  /// 30 epochs. At lr 1e-5 the prompts move by about 1e-3 in that budget.
  static ExperimentConfig desk_profile() {
    ExperimentConfig c;
    c.batch_size = 8;
    c.prompt_opt.lr = 0.3;
    c.gan_opt = {optimizer_kind::adamw, 3e-3, 0.5, 0.999, 1e-8, 0.1};
    return c;
  }

  void set_all_seeds(std::uint64_t s) { data_seed = model_seed = noise_seed = s; }

  [[nodiscard]] std::size_t context_rows() const {
    switch (mode) {
      case prompt_mode::hdp: return std::size(hand_crafted_words);
      case prompt_mode::csp: return m1;
      default: return m1 + m2;
    }
  }
  [[nodiscard]] std::size_t effective_m2() const { return mode == prompt_mode::csp ? 0 : m2; }

  [[nodiscard]] encoder_dims encoders(std::size_t feature_dim) const {
    return {feature_dim, d, d_tok, image_hidden, text_hidden};
  }

  /// Aggregation events per stage.
  [[nodiscard]] std::size_t rounds(std::size_t stage_epochs) const {
    return static_cast<std::size_t>(std::llround(double(stage_epochs) / epochs_per_round));
  }

  void validate() const;
  [[nodiscard]] std::string canonical() const;
  [[nodiscard]] std::string hash() const { return hex64(fnv1a(canonical())); }

  /// Applies one key=value pair. Unknown keys are an error.
  void set(std::string_view key, std::string_view value);
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double out = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw config_error("config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
}

inline std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw config_error("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                       std::string(v) + "'");
  }
  return out;
}

inline bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config key '" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline void ExperimentConfig::set(std::string_view key, std::string_view value) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_u64;
  static const std::map<std::string, std::function<void(ExperimentConfig&, std::string_view)>, std::less<>> setters = {
      {"dataset", [](auto& c, auto v) { c.dataset_path = std::string(v); }},
      {"data.classes", [](auto& c, auto v) { c.synthetic.classes = to_u64("data.classes", v); }},
      {"data.domains", [](auto& c, auto v) { c.synthetic.domains = to_u64("data.domains", v); }},
      {"data.shots", [](auto& c, auto v) { c.synthetic.shots = to_u64("data.shots", v); }},
      {"data.feature_dim", [](auto& c, auto v) { c.synthetic.feature_dim = to_u64("data.feature_dim", v); }},
      {"data.shift_strength", [](auto& c, auto v) { c.synthetic.shift_strength = to_double("data.shift_strength", v); }},
      {"data.family", [](auto& c, auto v) { c.synthetic.family = std::string(v); }},
      {"clients", [](auto& c, auto v) { c.n_clients = to_u64("clients", v); }},
      {"overlap", [](auto& c, auto v) { c.overlap_ratio = to_double("overlap", v); }},
      {"prompt_mode", [](auto& c, auto v) { c.mode = parse_prompt_mode(v); }},
      {"m1", [](auto& c, auto v) { c.m1 = to_u64("m1", v); }},
      {"m2", [](auto& c, auto v) { c.m2 = to_u64("m2", v); }},
      {"d", [](auto& c, auto v) { c.d = to_u64("d", v); }},
      {"d_tok", [](auto& c, auto v) { c.d_tok = to_u64("d_tok", v); }},
      {"image_hidden", [](auto& c, auto v) { c.image_hidden = to_u64("image_hidden", v); }},
      {"text_hidden", [](auto& c, auto v) { c.text_hidden = to_u64("text_hidden", v); }},
      {"token_scale", [](auto& c, auto v) { c.token_scale = to_double("token_scale", v); }},
      {"prompt_init_std", [](auto& c, auto v) { c.prompt_init_std = to_double("prompt_init_std", v); }},
      {"tau", [](auto& c, auto v) { c.tau = to_double("tau", v); }},
      {"alpha", [](auto& c, auto v) { c.alpha = to_double("alpha", v); }},
      {"momentum_rule",
       [](auto& c, auto v) {
         if (v == "reformulated") c.rule = fed::momentum_rule::reformulated;
         else if (v == "literal") c.rule = fed::momentum_rule::literal;
         else throw config_error("momentum_rule must be reformulated|literal");
       }},
      {"sample_weighted", [](auto& c, auto v) { c.sample_weighted = to_bool("sample_weighted", v); }},
      {"z_dim", [](auto& c, auto v) { c.z_dim = to_u64("z_dim", v); }},
      {"gan_hidden", [](auto& c, auto v) { c.gan_hidden = to_u64("gan_hidden", v); }},
      {"gan_output_gain", [](auto& c, auto v) { c.gan_output_gain = to_double("gan_output_gain", v); }},
      {"d_steps", [](auto& c, auto v) { c.d_steps = to_u64("d_steps", v); }},
      {"generator_loss",
       [](auto& c, auto v) {
         if (v == "non-saturating") c.g_loss = generator_loss::non_saturating;
         else if (v == "saturating") c.g_loss = generator_loss::saturating;
         else throw config_error("generator_loss must be non-saturating|saturating");
       }},
      {"z_policy", [](auto& c, auto v) { c.inference_z = parse_z_policy(v); }},
      {"z_samples", [](auto& c, auto v) { c.z_samples = to_u64("z_samples", v); }},
      {"epochs", [](auto& c, auto v) { c.epochs = to_u64("epochs", v); }},
      {"gan_epochs", [](auto& c, auto v) { c.gan_epochs = to_u64("gan_epochs", v); }},
      {"epochs_per_round", [](auto& c, auto v) { c.epochs_per_round = to_double("epochs_per_round", v); }},
      {"batch_size", [](auto& c, auto v) { c.batch_size = to_u64("batch_size", v); }},
      {"prompt.lr", [](auto& c, auto v) { c.prompt_opt.lr = to_double("prompt.lr", v); }},
      {"prompt.beta1", [](auto& c, auto v) { c.prompt_opt.beta1 = to_double("prompt.beta1", v); }},
      {"prompt.beta2", [](auto& c, auto v) { c.prompt_opt.beta2 = to_double("prompt.beta2", v); }},
      {"prompt.weight_decay", [](auto& c, auto v) { c.prompt_opt.weight_decay = to_double("prompt.weight_decay", v); }},
      {"gan.lr", [](auto& c, auto v) { c.gan_opt.lr = to_double("gan.lr", v); }},
      {"gan.beta1", [](auto& c, auto v) { c.gan_opt.beta1 = to_double("gan.beta1", v); }},
      {"gan.beta2", [](auto& c, auto v) { c.gan_opt.beta2 = to_double("gan.beta2", v); }},
      {"gan.weight_decay", [](auto& c, auto v) { c.gan_opt.weight_decay = to_double("gan.weight_decay", v); }},
      {"seed.data", [](auto& c, auto v) { c.data_seed = to_u64("seed.data", v); }},
      {"seed.model", [](auto& c, auto v) { c.model_seed = to_u64("seed.model", v); }},
      {"seed.noise", [](auto& c, auto v) { c.noise_seed = to_u64("seed.noise", v); }},
      {"seed.backbone", [](auto& c, auto v) { c.backbone_seed = to_u64("seed.backbone", v); }},
      {"seed", [](auto& c, auto v) { c.set_all_seeds(to_u64("seed", v)); }},
      {"target_domain", [](auto& c, auto v) { c.target_domain = std::string(v); }},
      {"output_dir", [](auto& c, auto v) { c.output_dir = std::string(v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw config_error("unknown config key '" + std::string(key) + "'");
  it->second(*this, detail::trim(value));
}

inline void ExperimentConfig::validate() const {
  if (n_clients == 0) throw config_error("clients must be >= 1");
  if (!(overlap_ratio >= 0.0 && overlap_ratio <= 1.0)) throw config_error("overlap must lie in [0, 1]");
  if (!(tau > 0.0)) throw config_error("tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw config_error("alpha must lie in [0, 1]");
  if (mode != prompt_mode::hdp && m1 + effective_m2() == 0) throw config_error("m1 + m2 must be positive");
  if (d == 0 || d_tok == 0 || z_dim == 0 || gan_hidden == 0) throw config_error("dimensions must be positive");
  if (batch_size == 0) throw config_error("batch_size must be >= 1");
  if (z_samples == 0) throw config_error("z_samples must be >= 1");
  const double halves = 2.0 * epochs_per_round;
  if (!(epochs_per_round > 0.0) || std::abs(halves - std::round(halves)) > 1e-12) {
    throw config_error("epochs_per_round must be a positive multiple of 0.5");
  }
  for (std::size_t e : {epochs, gan_epochs}) {
    const double r = double(e) / epochs_per_round;
    if (std::abs(r - std::round(r)) > 1e-9) {
      throw config_error("epochs (" + std::to_string(e) + ") must be a multiple of epochs_per_round");
    }
  }
  if (prompt_opt.lr < 0.0 || gan_opt.lr < 0.0) throw config_error("learning rates must be non-negative");
}

inline std::string ExperimentConfig::canonical() const {
  using detail::fmt_double;
  std::ostringstream o;
  auto kv = [&o](std::string_view k, const std::string& v) { o << k << " = " << v << "\n"; };
  auto n = [](std::size_t v) { return std::to_string(v); };
  kv("alpha", fmt_double(alpha));
  kv("batch_size", n(batch_size));
  kv("clients", n(n_clients));
  kv("d", n(d));
  kv("d_steps", n(d_steps));
  kv("d_tok", n(d_tok));
  kv("data.classes", n(synthetic.classes));
  kv("data.domains", n(synthetic.domains));
  kv("data.family", synthetic.family);
  kv("data.feature_dim", n(synthetic.feature_dim));
  kv("data.shift_strength", fmt_double(synthetic.shift_strength));
  kv("data.shots", n(synthetic.shots));
  kv("dataset", dataset_path);
  kv("epochs", n(epochs));
  kv("epochs_per_round", fmt_double(epochs_per_round));
  kv("gan.beta1", fmt_double(gan_opt.beta1));
  kv("gan.beta2", fmt_double(gan_opt.beta2));
  kv("gan.lr", fmt_double(gan_opt.lr));
  kv("gan.weight_decay", fmt_double(gan_opt.weight_decay));
  kv("gan_epochs", n(gan_epochs));
  kv("gan_hidden", n(gan_hidden));
  kv("gan_output_gain", fmt_double(gan_output_gain));
  kv("generator_loss", g_loss == generator_loss::non_saturating ? "non-saturating" : "saturating");
  kv("image_hidden", n(image_hidden));
  kv("m1", n(m1));
  kv("m2", n(m2));
  kv("momentum_rule", rule == fed::momentum_rule::reformulated ? "reformulated" : "literal");
  kv("overlap", fmt_double(overlap_ratio));
  kv("prompt.beta1", fmt_double(prompt_opt.beta1));
  kv("prompt.beta2", fmt_double(prompt_opt.beta2));
  kv("prompt.lr", fmt_double(prompt_opt.lr));
  kv("prompt.weight_decay", fmt_double(prompt_opt.weight_decay));
  kv("prompt_init_std", fmt_double(prompt_init_std));
  kv("prompt_mode", std::string(to_string(mode)));
  kv("sample_weighted", sample_weighted ? "true" : "false");
  kv("seed.backbone", std::to_string(backbone_seed));
  kv("seed.data", std::to_string(data_seed));
  kv("seed.model", std::to_string(model_seed));
  kv("seed.noise", std::to_string(noise_seed));
  kv("target_domain", target_domain);
  kv("tau", fmt_double(tau));
  kv("text_hidden", n(text_hidden));
  kv("token_scale", fmt_double(token_scale));
  kv("z_dim", n(z_dim));
  kv("z_policy", std::string(to_string(inference_z)));
  kv("z_samples", n(z_samples));
  return o.str();
}

/// Parses "key = value" lines; '#' starts a comment. Later keys override earlier ones.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

}  // namespace fdsp
