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

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>

#include "fdsp/fed/aggregate.hpp"
#include "fdsp/fed/message.hpp"
#include "fdsp/fed/partition.hpp"
#include "fdsp/fed/round.hpp"
#include "fdsp/hash.hpp"

namespace fdsp::fed {
namespace {

ParamMessage msg(std::uint32_t sender, std::uint32_t round, std::vector<NamedTensor> entries) {
  ParamMessage m{sender, round, std::move(entries)};
  m.sort_entries();
  return m;
}

ParamMessage random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(0, 6), dim(0, 5), any(0, 1 << 30);
  ParamMessage m;
  m.sender = static_cast<std::uint32_t>(any(rng));
  m.round = static_cast<std::uint32_t>(any(rng));
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Tensor t(static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)));
    for (auto& x : t.data) x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));  // any bit pattern, NaNs included
    m.entries.push_back({"t" + std::to_string(i) + "/" + std::to_string(any(rng)), std::move(t)});
  }
  m.sort_entries();
  return m;
}

bool same_bits(const ParamMessage& a, const ParamMessage& b) {
  if (a.sender != b.sender || a.round != b.round || a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].name != b.entries[i].name || !bit_equal(a.entries[i].value, b.entries[i].value)) return false;
  }
  return true;
}

TEST(ParamMessage, RandomMessagesRoundTripBitExactly) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_message(rng);
    const auto back = deserialize(serialize(m));
    ASSERT_TRUE(same_bits(m, back)) << "message " << i;
  }
}

TEST(ParamMessage, HeaderLayout) {
  const auto m = msg(7, 3, {{"v", Tensor::from_rows({{1.0f, -2.0f}})}});
  const auto bytes = serialize(m);
  EXPECT_EQ(std::memcmp(bytes.data(), "FDSP", 4), 0);
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), 1);          // version
  EXPECT_EQ(bytes[6], 3);                            // round
  EXPECT_EQ(bytes[10], 7);                           // sender
  EXPECT_EQ(bytes[14], 1);                           // entry count
  // name len u16 + "v" + rank u8 + 2 dims u32 + 2 floats, then the checksum.
  EXPECT_EQ(bytes.size(), 18u + 2 + 1 + 1 + 8 + 8 + 8);
}

TEST(ParamMessage, EveryFlippedByteIsRejected) {
  const auto m = msg(1, 2, {{"u/0", Tensor::from_rows({{0.5f, 1.5f}, {2.5f, 3.5f}})}, {"v", Tensor(1, 3, 4.0f)}});
  const auto bytes = serialize(m);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x01;
    EXPECT_THROW((void)deserialize(bad), error) << "byte " << i;
  }
  auto cut = bytes;
  cut.resize(bytes.size() - 5);
  EXPECT_THROW((void)deserialize(cut), checksum_error);
  auto flipped = bytes;
  flipped[20] ^= 0x40;
  EXPECT_THROW((void)deserialize(flipped), checksum_error);
}

TEST(ParamMessage, UnknownVersionIsVersionError) {
  auto bytes = serialize(msg(0, 0, {}));
  bytes[4] = 9;
  const std::size_t body = bytes.size() - 8;
  const auto sum = fnv1a(std::span<const std::uint8_t>(bytes.data(), body));
  for (int k = 0; k < 8; ++k) bytes[body + k] = static_cast<std::uint8_t>(sum >> (8 * k));
  EXPECT_THROW((void)deserialize(bytes), version_error);
}

TEST(ParamMessage, FileRoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "fdsp_test_fed";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(2);
  const auto m = random_message(rng);
  write_message(dir / "m.bin", m);
  EXPECT_TRUE(same_bits(read_message(dir / "m.bin"), m));
  EXPECT_THROW((void)read_message(dir / "missing.bin"), io_error);
  std::filesystem::remove_all(dir);
}

TEST(Fedavg, TwoClientsArithmeticMean) {
  const ParamMessage in[] = {msg(0, 1, {{"v", Tensor::from_rows({{1, 3}})}}), msg(1, 1, {{"v", Tensor::from_rows({{3, 5}})}})};
  EXPECT_EQ(fedavg(in).at("v"), Tensor::from_rows({{2, 4}}));
}

TEST(Fedavg, SingleClientIsIdentity) {
  std::mt19937_64 rng(3);
  const ParamMessage in[] = {msg(4, 1, {{"v", Tensor::gaussian(3, 4, 1.0, rng)}})};
  EXPECT_TRUE(bit_equal(fedavg(in).at("v"), in[0].entries[0].value));
}

TEST(Fedavg, IdenticalMessagesAreBitIdentical) {
  std::mt19937_64 rng(4);
  auto t = Tensor::gaussian(4, 8, 3.0, rng);
  t.data[0] = -0.0f;
  t.data[1] = std::numeric_limits<float>::denorm_min();
  t.data[2] = 3.4e38f;
  for (std::size_t n : {2u, 3u, 7u}) {
    std::vector<ParamMessage> in;
    for (std::uint32_t s = 0; s < n; ++s) in.push_back(msg(s, 5, {{"G/l0.w", t}}));
    EXPECT_TRUE(bit_equal(fedavg(in).at("G/l0.w"), t)) << n;
  }
}

TEST(Fedavg, DomainBlocksAverageOverHoldersOnly) {
  std::vector<ParamMessage> in;
  for (std::uint32_t c = 0; c < 4; ++c) {
    std::vector<NamedTensor> e{{"v", Tensor(1, 2, float(c))}};
    if (c == 1) e.push_back({"u/2", Tensor::from_rows({{1, 10}})});
    if (c == 3) e.push_back({"u/2", Tensor::from_rows({{4, 20}})});
    in.push_back(msg(c, 2, e));
  }
  const auto avg = fedavg(in);
  EXPECT_EQ(avg.at("u/2"), Tensor::from_rows({{2.5f, 15.0f}}));
  EXPECT_EQ(avg.at("v"), Tensor(1, 2, 1.5f));
}

TEST(Fedavg, ArrivalOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  std::vector<ParamMessage> in;
  for (std::uint32_t c = 0; c < 5; ++c) in.push_back(msg(c, 1, {{"v", Tensor::gaussian(2, 7, 1.0, rng)}}));
  const auto a = fedavg(in);
  std::reverse(in.begin(), in.end());
  std::swap(in[1], in[3]);
  EXPECT_TRUE(bit_equal(fedavg(in).at("v"), a.at("v")));
}

TEST(Fedavg, ProtocolErrors) {
  EXPECT_THROW((void)fedavg(std::span<const ParamMessage>{}), protocol_error);
  const ParamMessage shapes[] = {msg(0, 1, {{"v", Tensor(1, 2)}}), msg(1, 1, {{"v", Tensor(2, 1)}})};
  EXPECT_THROW((void)fedavg(shapes), protocol_error);
  const ParamMessage rounds[] = {msg(0, 1, {{"v", Tensor(1, 2)}}), msg(1, 2, {{"v", Tensor(1, 2)}})};
  EXPECT_THROW((void)fedavg(rounds), protocol_error);
  const ParamMessage dup[] = {msg(0, 1, {{"v", Tensor(1, 2)}}), msg(0, 1, {{"v", Tensor(1, 2)}})};
  EXPECT_THROW((void)fedavg(dup), protocol_error);
}

TEST(Fedavg, SampleWeightedMean) {
  const ParamMessage in[] = {msg(0, 1, {{"v", Tensor::from_rows({{0, 4}})}}), msg(1, 1, {{"v", Tensor::from_rows({{4, 0}})}})};
  const std::map<std::uint32_t, double> w{{0, 3.0}, {1, 1.0}};
  EXPECT_EQ(fedavg(in, &w).at("v"), Tensor::from_rows({{1, 3}}));
  const std::map<std::uint32_t, double> missing{{0, 1.0}};
  EXPECT_THROW((void)fedavg(in, &missing), protocol_error);
}

TEST(Momentum, FirstRoundPassesThrough) {
  AggHistory h(0.2);
  const Entries avg{{"v", Tensor(1, 1, 1.0f)}};
  EXPECT_EQ(h.momentum_aggregate(avg, 1).at("v"), Tensor(1, 1, 1.0f));
}

TEST(Momentum, PointTwoOfOneOverZero) {
  AggHistory h(0.2);
  (void)h.momentum_aggregate({{"v", Tensor(1, 1, 0.0f)}}, 1);
  const float out = h.momentum_aggregate({{"v", Tensor(1, 1, 1.0f)}}, 2).at("v")(0, 0);
  EXPECT_LE(std::abs(out - 0.2f), std::nextafter(0.2f, 1.0f) - 0.2f);
}

TEST(Momentum, AlphaOneIsFedavgForTenRounds) {
  std::mt19937_64 rng(6);
  AggHistory h(1.0);
  for (std::uint32_t r = 1; r <= 10; ++r) {
    std::vector<ParamMessage> in;
    for (std::uint32_t c = 0; c < 3; ++c) in.push_back(msg(c, r, {{"v", Tensor::gaussian(2, 3, 1.0, rng)}}));
    EXPECT_TRUE(bit_equal(h.aggregate(in).at("v"), fedavg(in).at("v"))) << "round " << r;
  }
}

TEST(Momentum, AlphaZeroFreezesDistributedValues) {
  std::mt19937_64 rng(7);
  AggHistory h(0.0);
  Entries first;
  for (std::uint32_t r = 1; r <= 10; ++r) {
    const auto out = h.momentum_aggregate({{"v", Tensor::gaussian(2, 3, 1.0, rng)}}, r);
    if (r == 1) first = out;
    EXPECT_TRUE(bit_equal(out.at("v"), first.at("v")));
  }
}

TEST(Momentum, LiteralRuleUsesTwoHistories) {
  AggHistory h(0.5, momentum_rule::literal);
  EXPECT_EQ(h.momentum_aggregate({{"v", Tensor(1, 1, 2.0f)}}, 1).at("v")(0, 0), 2.0f);
  EXPECT_EQ(h.momentum_aggregate({{"v", Tensor(1, 1, 4.0f)}}, 2).at("v")(0, 0), 4.0f);
  // 0.5 * out_2 + 0.5 * out_1; the fresh average never enters.
  EXPECT_EQ(h.momentum_aggregate({{"v", Tensor(1, 1, 100.0f)}}, 3).at("v")(0, 0), 3.0f);
}

TEST(Momentum, RoutingByNamePrefix) {
  AggHistory h(0.2);
  const Entries avg{{"v", Tensor(1, 1)}, {"u/3", Tensor(1, 1)}, {"G/l0.w", Tensor(1, 1)}, {"D/l2.b", Tensor(1, 1)}};
  for (std::uint32_t r = 1; r <= 10; ++r) (void)h.momentum_aggregate(avg, r);
  EXPECT_EQ(h.momentum_routed(), 20u);
  EXPECT_EQ(h.plain_routed(), 20u);
  ASSERT_EQ(h.log().size(), 10u);
  EXPECT_EQ(h.log().back().momentum_names, (std::vector<std::string>{"u/3", "v"}));
  EXPECT_EQ(h.log().back().plain_names, (std::vector<std::string>{"D/l2.b", "G/l0.w"}));
  // GAN names pass through untouched even when they move.
  const auto out = h.momentum_aggregate({{"G/l0.w", Tensor(1, 1, 5.0f)}}, 11);
  EXPECT_EQ(out.at("G/l0.w")(0, 0), 5.0f);
}

TEST(Momentum, InvalidAlphaAndShapeChange) {
  EXPECT_THROW(AggHistory(1.5), config_error);
  EXPECT_THROW(AggHistory(-0.1), config_error);
  AggHistory h(0.2);
  (void)h.momentum_aggregate({{"v", Tensor(1, 2)}}, 1);
  EXPECT_THROW((void)h.momentum_aggregate({{"v", Tensor(2, 1)}}, 2), protocol_error);
}

TEST(Partition, FourDomainsFourClientsNoOverlap) {
  const auto p = partition_domains(4, 4, 0.0, 0);
  std::set<std::size_t> seen;
  for (const auto& a : p.assignments) {
    ASSERT_EQ(a.size(), 1u);
    seen.insert(*a.begin());
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Partition, HalfOverlapOnTwoClients) {
  const auto p = partition_domains(4, 2, 0.5, 0);
  std::size_t shared = 0, unique = 0;
  for (std::size_t d = 0; d < 4; ++d) (p.holders(d) == 2 ? shared : unique) += 1;
  EXPECT_EQ(shared, 2u);
  EXPECT_EQ(unique, 2u);
  EXPECT_EQ(p.shared.size(), 2u);
}

TEST(Partition, SingleClientHoldsEverything) {
  const auto p = partition_domains(3, 1, 0.0, 0);
  EXPECT_EQ(p.assignments[0], (std::set<std::size_t>{0, 1, 2}));
}

TEST(Partition, DeterministicAndCoversEveryDomain) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double r : {0.0, 1.0 / 3.0, 1.0}) {
      const auto a = partition_domains(3, 3, r, seed), b = partition_domains(3, 3, r, seed);
      EXPECT_EQ(a.assignments, b.assignments);
      std::size_t multi = 0;
      for (std::size_t d = 0; d < 3; ++d) {
        EXPECT_GE(a.holders(d), 1u);
        multi += a.holders(d) >= 2;
      }
      EXPECT_EQ(multi, static_cast<std::size_t>(std::llround(r * 3)));
      for (const auto& s : a.assignments) EXPECT_FALSE(s.empty());
    }
  }
}

TEST(Partition, InfeasibleRequestsAreErrors) {
  EXPECT_THROW((void)partition_domains(3, 4, 0.0, 0), partition_error);
  EXPECT_THROW((void)partition_domains(0, 1, 0.0, 0), partition_error);
  EXPECT_THROW((void)partition_domains(3, 0, 0.0, 0), partition_error);
  EXPECT_THROW((void)partition_domains(3, 1, 1.0, 0), partition_error);
  EXPECT_THROW((void)partition_domains(3, 2, 1.5, 0), partition_error);
}

struct CountingClient {
  std::uint32_t cid = 0;
  float value = 0.0f;
  bool fail = false;
  std::size_t received = 0;
  std::uint32_t id() const { return cid; }
  ParamMessage train(std::uint32_t round) {
    if (fail) throw std::runtime_error("boom");
    value += 1.0f;
    return msg(cid, round, {{"v", Tensor(1, 1, value)}, {"G/l0.w", Tensor(1, 1, value)}});
  }
  void receive(const Entries& e) {
    value = e.at("v")(0, 0);
    ++received;
  }
};

TEST(RunRound, AggregatesOncePerRoundAndRedistributes) {
  std::vector<CountingClient> clients{{0, 0.0f}, {1, 2.0f}};
  AggHistory server(1.0);
  for (std::uint32_t r = 1; r <= 10; ++r) {
    const auto res = run_round(r, std::span<CountingClient>(clients), server);
    EXPECT_EQ(res.uploads.size(), 2u);
    EXPECT_EQ(res.uploads[1].sender, 1u);
  }
  EXPECT_EQ(server.log().size(), 10u);
  EXPECT_EQ(clients[0].received, 10u);
  EXPECT_EQ(clients[0].value, clients[1].value);
}

TEST(RunRound, IdenticalClientsKeepTheirLocalValues) {
  std::vector<CountingClient> clients{{0, 3.0f}, {1, 3.0f}};
  AggHistory server(0.2);
  const auto res = run_round(1, std::span<CountingClient>(clients), server);
  EXPECT_EQ(res.distributed.at("v")(0, 0), 4.0f);
  EXPECT_EQ(res.distributed.at("G/l0.w")(0, 0), 4.0f);
}

TEST(RunRound, ThreadCountDoesNotChangeResults) {
  auto run = [](std::size_t threads) {
    std::vector<CountingClient> clients;
    for (std::uint32_t c = 0; c < 6; ++c) clients.push_back({c, float(c) * 0.37f});
    AggHistory server(0.2);
    Entries last;
    for (std::uint32_t r = 1; r <= 5; ++r) last = run_round(r, std::span<CountingClient>(clients), server, threads).distributed;
    return last.at("v");
  };
  EXPECT_TRUE(bit_equal(run(1), run(4)));
}

TEST(RunRound, ClientFailureIsRoundErrorWithoutAggregation) {
  std::vector<CountingClient> clients{{0, 0.0f}, {5, 0.0f, true}};
  AggHistory server(0.2);
  try {
    (void)run_round(3, std::span<CountingClient>(clients), server);
    FAIL() << "expected round_error";
  } catch (const round_error& e) {
    EXPECT_NE(std::string(e.what()).find("client 5"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  EXPECT_TRUE(server.log().empty());
  EXPECT_EQ(clients[0].received, 0u);
}

TEST(ParallelFor, CollectsPerIndexExceptions) {
  std::atomic<int> ran{0};
  const auto errors = parallel_for(8, 3, [&](std::size_t i) {
    ++ran;
    if (i == 5) throw std::runtime_error("x");
  });
  EXPECT_EQ(ran.load(), 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(errors[i] != nullptr, i == 5);
}

}  // namespace
}  // namespace fdsp::fed
