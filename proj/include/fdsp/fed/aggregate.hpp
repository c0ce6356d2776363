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
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fdsp/dsp.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/fed/message.hpp"

namespace fdsp::fed {

using Entries = std::map<std::string, Tensor>;

/// Unweighted per-name mean. Senders are visited in id order, so the result does
/// not depend on arrival order. A name is averaged over the senders carrying it,
/// which is how domain-specific "u/<id>" blocks are pooled across the clients
/// holding that domain. With weights (sender -> weight) the mean is weighted.
inline Entries fedavg(std::span<const ParamMessage> msgs, const std::map<std::uint32_t, double>* weights = nullptr) {
  if (msgs.empty()) throw protocol_error("fedavg needs at least one message");
  std::vector<const ParamMessage*> sorted;
  for (const auto& m : msgs) sorted.push_back(&m);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->sender < b->sender; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->round != sorted[0]->round) {
      throw protocol_error("fedavg across rounds " + std::to_string(sorted[0]->round) + " and " +
                           std::to_string(sorted[i]->round));
    }
    if (sorted[i]->sender == sorted[i - 1]->sender) {
      throw protocol_error("duplicate upload from sender " + std::to_string(sorted[i]->sender));
    }
  }

  struct acc {
    std::size_t rows, cols, count = 0;
    std::vector<double> sum;
    double weight = 0.0;
  };
  auto weight_of = [weights](std::uint32_t sender) {
    if (weights == nullptr) return 1.0;
    auto it = weights->find(sender);
    if (it == weights->end() || !(it->second > 0.0)) {
      throw protocol_error("no positive aggregation weight for sender " + std::to_string(sender));
    }
    return it->second;
  };
  std::map<std::string, acc> sums;
  for (const auto* m : sorted) {
    for (const auto& e : m->entries) {
      auto [it, fresh] = sums.try_emplace(e.name, acc{e.value.rows, e.value.cols, 0, {}});
      auto& a = it->second;
      if (a.rows != e.value.rows || a.cols != e.value.cols) {
        throw protocol_error("shape disagreement for '" + e.name + "': " + Tensor::shape_string(a.rows, a.cols) +
                             " vs " + e.value.shape() + " from sender " + std::to_string(m->sender));
      }
      const double w = weight_of(m->sender);
      if (fresh && weights == nullptr) {
        a.sum.assign(e.value.data.begin(), e.value.data.end());  // keeps -0.0 intact
      } else if (fresh) {
        a.sum.assign(e.value.size(), 0.0);
        for (std::size_t k = 0; k < a.sum.size(); ++k) a.sum[k] = w * e.value.data[k];
      } else {
        for (std::size_t k = 0; k < a.sum.size(); ++k) a.sum[k] += w * e.value.data[k];
      }
      ++a.count;
      a.weight += w;
    }
  }
  Entries out;
  for (auto& [name, a] : sums) {
    Tensor t(a.rows, a.cols);
    for (std::size_t k = 0; k < a.sum.size(); ++k) t.data[k] = static_cast<float>(a.sum[k] / a.weight);
    out.emplace(name, std::move(t));
  }
  return out;
}

/// How a server smooths successive prompt averages.
///   reformulated: out_k = alpha * fedavg_k + (1 - alpha) * out_{k-1}
///   literal:      out_k = alpha * out_{k-1} + (1 - alpha) * out_{k-2}, seeded by
///                 the first two averages. Fresh uploads never enter after round 2.
enum class momentum_rule { reformulated, literal };

struct AggregationRecord {
  std::uint32_t round = 0;
  std::vector<std::string> momentum_names;
  std::vector<std::string> plain_names;
};

/// Server-side aggregation state: previous distributed prompt values and routing counters.
class AggHistory {
 public:
  explicit AggHistory(double alpha = 0.2, momentum_rule rule = momentum_rule::reformulated)
      : alpha_(alpha), rule_(rule) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw config_error("momentum coefficient must lie in [0, 1], got " + std::to_string(alpha));
    }
  }

  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] momentum_rule rule() const noexcept { return rule_; }
  [[nodiscard]] const Entries& previous() const noexcept { return prev_; }
  [[nodiscard]] std::size_t momentum_routed() const noexcept { return momentum_routed_; }
  [[nodiscard]] std::size_t plain_routed() const noexcept { return plain_routed_; }
  [[nodiscard]] const std::vector<AggregationRecord>& log() const noexcept { return log_; }

  /// Turns one round's average into the values redistributed to clients.
  /// Prompt names ("v", "u/*") are smoothed; everything else passes through.
  Entries momentum_aggregate(const Entries& avg, std::uint32_t round) {
    AggregationRecord rec;
    rec.round = round;
    Entries out;
    for (const auto& [name, value] : avg) {
      if (!is_prompt_param_name(name)) {
        out.emplace(name, value);
        rec.plain_names.push_back(name);
        ++plain_routed_;
        continue;
      }
      rec.momentum_names.push_back(name);
      ++momentum_routed_;
      out.emplace(name, smooth(name, value));
    }
    log_.push_back(std::move(rec));
    return out;
  }

  /// fedavg followed by momentum_aggregate.
  Entries aggregate(std::span<const ParamMessage> msgs, const std::map<std::uint32_t, double>* weights = nullptr) {
    const auto round = msgs.empty() ? 0u : msgs.front().round;
    return momentum_aggregate(fedavg(msgs, weights), round);
  }

 private:
  Tensor smooth(const std::string& name, const Tensor& avg) {
    auto p1 = prev_.find(name);
    Tensor out;
    if (p1 == prev_.end()) {
      out = avg;
    } else {
      if (!p1->second.same_shape(avg)) {
        throw protocol_error("history shape " + p1->second.shape() + " for '" + name + "' does not match " +
                             avg.shape());
      }
      if (rule_ == momentum_rule::reformulated) {
        out = blend(avg, p1->second);
      } else {
        auto p2 = prev2_.find(name);
        out = p2 == prev2_.end() ? avg : blend(p1->second, p2->second);
      }
      prev2_[name] = p1->second;
    }
    prev_[name] = out;
    return out;
  }

  // alpha * a + (1 - alpha) * b, elementwise in double. The endpoints copy so
  // signed zeros survive bit-for-bit.
  Tensor blend(const Tensor& a, const Tensor& b) const {
    if (alpha_ == 1.0) return a;
    if (alpha_ == 0.0) return b;
    Tensor out(a.rows, a.cols);
    for (std::size_t k = 0; k < a.size(); ++k) {
      out.data[k] = static_cast<float>(alpha_ * double(a.data[k]) + (1.0 - alpha_) * double(b.data[k]));
    }
    return out;
  }

  double alpha_;
  momentum_rule rule_;
  Entries prev_;
  Entries prev2_;
  std::size_t momentum_routed_ = 0;
  std::size_t plain_routed_ = 0;
  std::vector<AggregationRecord> log_;
};

}  // namespace fdsp::fed
