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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fdsp/errors.hpp"

namespace fdsp::fed {

/// Which source domains (by position 0..n_source_domains-1) each client holds.
struct Partition {
  std::vector<std::set<std::size_t>> assignments;
  double overlap_ratio = 0.0;
  std::size_t n_clients = 0;
  std::size_t n_source_domains = 0;
  std::vector<std::size_t> shared;  // domains placed on two clients

  /// Number of clients holding domain d.
  [[nodiscard]] std::size_t holders(std::size_t d) const {
    return static_cast<std::size_t>(
        std::count_if(assignments.begin(), assignments.end(), [d](const auto& s) { return s.count(d) != 0; }));
  }
};

/// Deals domains to clients. round(r * n) domains, chosen by a seeded shuffle,
/// go to two consecutive clients each; the rest go to one client. Placement walks
/// a single round-robin cursor, so every client is used once the number of
/// placements reaches n_clients.
inline Partition partition_domains(std::size_t n_source_domains, std::size_t n_clients, double r,
                                   std::uint64_t seed) {
  if (n_clients == 0) throw partition_error("partition needs at least one client");
  if (n_source_domains == 0) throw partition_error("partition needs at least one source domain");
  if (!(r >= 0.0 && r <= 1.0)) throw partition_error("overlap ratio must lie in [0, 1], got " + std::to_string(r));

  const auto n_shared = static_cast<std::size_t>(std::llround(r * static_cast<double>(n_source_domains)));
  if (n_shared > 0 && n_clients < 2) {
    throw partition_error("overlap ratio " + std::to_string(r) + " shares domains but there is only one client");
  }
  const std::size_t placements = 2 * n_shared + (n_source_domains - n_shared);
  if (n_clients > placements) {
    throw partition_error("infeasible partition: " + std::to_string(n_clients) + " clients but only " +
                          std::to_string(placements) + " domain placements");
  }

  std::vector<std::size_t> order(n_source_domains);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  Partition p;
  p.overlap_ratio = r;
  p.n_clients = n_clients;
  p.n_source_domains = n_source_domains;
  p.assignments.resize(n_clients);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n_shared; ++i) {
    p.assignments[cursor % n_clients].insert(order[i]);
    p.assignments[(cursor + 1) % n_clients].insert(order[i]);
    p.shared.push_back(order[i]);
    cursor += 2;
  }
  for (std::size_t i = n_shared; i < n_source_domains; ++i) {
    p.assignments[cursor % n_clients].insert(order[i]);
    ++cursor;
  }
  std::sort(p.shared.begin(), p.shared.end());
  return p;
}

}  // namespace fdsp::fed
