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

// Central finite-difference gradient oracle, shared by unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fdsp/numcore.hpp"

namespace fdsp::testing {

using DTensor = basic_tensor<double>;
using DGraph = basic_graph<double>;
using Builder = std::function<var(DGraph&, const std::vector<var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
/// zero from dividing by rounding noise.
inline double rel_error(double a, double n, double floor = 1e-4) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares the analytic gradient of build(inputs) with central differences
/// of step h for every entry of every input.
inline GradCheck check_gradients(const std::vector<DTensor>& inputs, const Builder& build, double h = 1e-3) {
  auto forward = [&](const std::vector<DTensor>& xs) {
    DGraph g;
    std::vector<var> vs;
    for (const auto& x : xs) vs.push_back(g.input(x));
    return g.value(build(g, vs))(0, 0);
  };
  DGraph g;
  std::vector<var> vs;
  for (const auto& x : inputs) vs.push_back(g.input(x));
  g.backward(build(g, vs));

  GradCheck out;
  auto xs = inputs;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const DTensor analytic = g.grad(vs[t]);
    for (std::size_t k = 0; k < xs[t].size(); ++k) {
      const double orig = xs[t].data[k];
      xs[t].data[k] = orig + h;
      const double up = forward(xs);
      xs[t].data[k] = orig - h;
      const double down = forward(xs);
      xs[t].data[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic.data[k], numeric));
      out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic.data[k] - numeric));
      ++out.entries;
    }
  }
  return out;
}

/// Gaussian tensor whose entries stay at least `margin` away from zero, so relu
/// kinks are never straddled by a finite-difference step.
template <class Rng>
DTensor away_from_zero(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0, double margin = 0.05) {
  std::normal_distribution<double> n(0.0, stddev);
  DTensor t(r, c);
  for (auto& x : t.data) {
    do x = n(rng);
    while (std::abs(x) < margin);
  }
  return t;
}

/// sum_ij weights(i,j) * x(i,j), so every output entry carries its own
/// weight in the gradient. Built from matmul and add only.
inline var weighted_sum(DGraph& g, var x, const DTensor& weights) {
  const std::size_t rows = g.value(x).rows, cols = g.value(x).cols;  // copied: recording reallocates
  var total{};
  for (std::size_t i = 0; i < rows; ++i) {
    DTensor pick(1, rows);
    pick(0, i) = 1.0;
    const var row = ops::matmul(g, g.constant(pick), x);
    const var term = ops::matmul(g, row, g.constant(weights.row_slice(i, 1).reshaped(cols, 1)));
    total = i == 0 ? term : ops::add(g, total, term);
  }
  return total;
}

}  // namespace fdsp::testing
