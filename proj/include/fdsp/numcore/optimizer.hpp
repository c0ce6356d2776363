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
#include <span>
#include <string>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/numcore/tensor.hpp"

namespace fdsp {

enum class optimizer_kind { adam, adamw };

struct optimizer_settings {
  optimizer_kind kind = optimizer_kind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam / AdamW with per-parameter moment buffers.
///
/// Parameters are matched to moment buffers by position, so every call must pass
/// the same parameter list in the same order. Gradients are read, never cleared.
template <class Scalar>
struct basic_optimizer_state {
  optimizer_settings settings;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  basic_optimizer_state() = default;
  explicit basic_optimizer_state(optimizer_settings s) : settings(s) {}
};

using OptimizerState = basic_optimizer_state<float>;

template <class Scalar>
void optimizer_step(basic_optimizer_state<Scalar>& state, std::span<basic_tensor<Scalar>* const> params) {
  const auto& cfg = state.settings;
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw contract_error("optimizer_step: parameter list changed from " +
                         std::to_string(state.first_moment.size()) + " to " +
                         std::to_string(params.size()) + " tensors");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (!p->grad || p->grad->size() != p->size()) {
      throw contract_error("optimizer_step: parameter " + std::to_string(i) + " " + p->shape() +
                           " has no gradient");
    }
    if (state.first_moment[i].size() != p->size()) {
      throw contract_error("optimizer_step: moment buffer shape mismatch for parameter " +
                           std::to_string(i));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& grad = *p.grad;
    for (std::size_t k = 0; k < p.size(); ++k) {
      double w = p.data[k];
      double gk = grad[k];
      if (cfg.kind == optimizer_kind::adamw) {
        w -= cfg.lr * cfg.weight_decay * w;  // decoupled decay
      } else if (cfg.weight_decay != 0.0) {
        gk += cfg.weight_decay * w;
      }
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      p.data[k] = static_cast<Scalar>(w);
    }
  }
}

template <class Scalar>
void optimizer_step(basic_optimizer_state<Scalar>& state, std::initializer_list<basic_tensor<Scalar>*> params) {
  optimizer_step(state, std::span<basic_tensor<Scalar>* const>(params.begin(), params.size()));
}

}  // namespace fdsp
