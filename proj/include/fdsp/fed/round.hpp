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
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/fed/aggregate.hpp"
#include "fdsp/fed/message.hpp"

namespace fdsp::fed {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Returns the first
/// exception by index, if any, after every task has finished.
template <class Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) guarded(i);
    });
  }
  pool.clear();  // joins
  return errors;
}

struct RoundResult {
  std::uint32_t round = 0;
  std::vector<ParamMessage> uploads;  // sender order
  Entries distributed;
};

/// One synchronous round. Client must provide
///   std::uint32_t id() const;
///   ParamMessage train(std::uint32_t round);   // local span, then upload
///   void receive(const Entries&);
/// Any client failure aborts the round before aggregation.
template <class Client>
RoundResult run_round(std::uint32_t round, std::span<Client> clients, AggHistory& server, std::size_t threads = 1,
                      const std::map<std::uint32_t, double>* weights = nullptr) {
  RoundResult out;
  out.round = round;
  out.uploads.resize(clients.size());
  const auto errors = parallel_for(clients.size(), threads, [&](std::size_t i) {
    out.uploads[i] = clients[i].train(round);
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    std::string what = "unknown failure";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    throw round_error("round " + std::to_string(round) + ": client " + std::to_string(clients[i].id()) +
                      " failed: " + what);
  }
  out.distributed = server.aggregate(out.uploads, weights);
  for (auto& c : clients) c.receive(out.distributed);
  return out;
}

}  // namespace fdsp::fed
