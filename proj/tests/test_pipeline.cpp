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

#include <map>
#include <set>

#include "fdsp/fed/message.hpp"
#include "fdsp/pipeline.hpp"
#include "tiny_config.hpp"

namespace fdsp {
namespace {

using testing::tiny_config;

struct Rig {
  ExperimentConfig cfg;
  data::DomainDataset ds;
  Runtime rt;
  explicit Rig(ExperimentConfig c) : cfg(std::move(c)), ds(make_dataset(cfg)), rt(Runtime::make(cfg, ds)) {}
  TrainedModel train(std::uint32_t held_out, const RunOptions& opts = {}) const {
    std::vector<std::uint32_t> sources;
    for (const auto& d : ds.domains)
      if (d.id != held_out) sources.push_back(d.id);
    return train_model(cfg, ds, rt, sources, held_out, opts);
  }
};

std::vector<std::uint8_t> bytes_of(const TrainedModel& m) { return fed::serialize(m.checkpoint(1)); }

TEST(Pipeline, HeldOutSamplesNeverReachABatch) {
  Rig s(tiny_config());
  for (const auto& target : s.ds.domains) {
    std::size_t seen = 0;
    RunOptions opts;
    opts.hooks.on_batch = [&](const BatchEvent& e) {
      for (auto i : e.samples) {
        ASSERT_NE(s.ds.domain_of[i], target.id);
        ++seen;
      }
    };
    (void)s.train(target.id, opts);
    EXPECT_GT(seen, 0u);
  }
}

TEST(Pipeline, EveryRoundOfOneEpochCoversEachClientOnce) {
  Rig s(tiny_config());
  std::map<std::pair<int, std::uint32_t>, std::map<std::uint32_t, std::multiset<std::size_t>>> by_round;
  RunOptions opts;
  opts.hooks.on_batch = [&](const BatchEvent& e) {
    by_round[{e.stage, e.round}][e.client].insert(e.samples.begin(), e.samples.end());
  };
  (void)s.train(0, opts);
  EXPECT_EQ(by_round.size(), s.cfg.epochs + s.cfg.gan_epochs);
  for (const auto& [key, clients] : by_round) {
    std::size_t total = 0;
    for (const auto& [c, rows] : clients) {
      EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), rows.size());
      total += rows.size();
    }
    EXPECT_EQ(total, 3u * s.cfg.synthetic.classes * s.cfg.synthetic.shots);
  }
}

TEST(Pipeline, HalfEpochRoundsDoubleTheAggregationEvents) {
  for (double epr : {0.5, 1.0, 2.0}) {
    auto cfg = tiny_config();
    cfg.epochs = 4;
    cfg.gan_epochs = 2;
    cfg.epochs_per_round = epr;
    Rig s(cfg);
    std::map<int, std::size_t> rounds;
    RunOptions opts;
    opts.hooks.on_round = [&](const RoundEvent& e) { ++rounds[e.stage]; };
    const auto m = s.train(1, opts);
    EXPECT_EQ(rounds[1], std::size_t(4 / epr)) << epr;
    EXPECT_EQ(rounds[2], std::size_t(2 / epr)) << epr;
    EXPECT_EQ(m.stage1_rounds, rounds[1]);
  }
}

TEST(Pipeline, RoutingCountersSeparatePromptAndGanNames) {
  Rig s(tiny_config());
  std::size_t stage1 = 0, stage2 = 0;
  RunOptions opts;
  opts.hooks.on_round = [&](const RoundEvent& e) {
    ASSERT_NE(e.record, nullptr);
    for (const auto& n : e.record->momentum_names) EXPECT_TRUE(is_prompt_param_name(n)) << n;
    for (const auto& n : e.record->plain_names) EXPECT_TRUE(is_gan_param_name(n)) << n;
    if (e.stage == 1) {
      EXPECT_EQ(e.record->momentum_names.size(), 4u);  // v and three u blocks
      EXPECT_TRUE(e.record->plain_names.empty());
      ++stage1;
    } else {
      EXPECT_TRUE(e.record->momentum_names.empty());
      EXPECT_EQ(e.record->plain_names.size(), 12u);
      ++stage2;
    }
    EXPECT_TRUE(std::isfinite(e.prompt_norm) && std::isfinite(e.gan_norm));
  };
  (void)s.train(2, opts);
  EXPECT_EQ(stage1, s.cfg.epochs);
  EXPECT_EQ(stage2, s.cfg.gan_epochs);
}

TEST(Pipeline, BackboneIsFrozenEndToEnd) {
  Rig s(tiny_config());
  const auto enc = s.rt.enc.checksum();
  const auto emb = s.rt.image_emb;
  (void)s.train(0);
  EXPECT_EQ(s.rt.enc.checksum(), enc);
  // the token table hashes entries as they are issued; a second run issues no new ones
  const auto before = s.rt.checksum();
  (void)s.train(1);
  EXPECT_EQ(s.rt.checksum(), before);
  EXPECT_TRUE(bit_equal(s.rt.image_emb, emb));
}

TEST(Pipeline, DeterministicAcrossRunsAndThreadCounts) {
  Rig s(tiny_config());
  RunOptions par;
  par.threads = 3;
  const auto a = bytes_of(s.train(3)), b = bytes_of(s.train(3)), c = bytes_of(s.train(3, par));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Pipeline, ModesOwnTheRightParameters) {
  auto names = [](const TrainedModel& m) {
    std::set<std::string> out;
    for (const auto& e : m.checkpoint(0).entries) out.insert(e.name.substr(0, 2));
    return out;
  };
  for (auto mode : {prompt_mode::dsp, prompt_mode::csp, prompt_mode::hdp, prompt_mode::wgm}) {
    auto cfg = tiny_config();
    cfg.mode = mode;
    Rig s(cfg);
    const auto m = s.train(0);
    const auto n = names(m);
    EXPECT_EQ(n.count("v"), trains_prompts(mode) ? 1u : 0u) << to_string(mode);
    EXPECT_EQ(n.count("u/"), mode == prompt_mode::dsp || mode == prompt_mode::wgm ? 1u : 0u) << to_string(mode);
    EXPECT_EQ(n.count("G/"), trains_generator(mode) ? 1u : 0u) << to_string(mode);
    EXPECT_EQ(m.prompt_updates > 0, trains_prompts(mode)) << to_string(mode);
  }
}

TEST(Pipeline, CheckpointRoundTripRestoresTheModel) {
  Rig s(tiny_config());
  const auto m = s.train(1);
  const auto back = TrainedModel::from_checkpoint(fed::deserialize(fed::serialize(m.checkpoint(7))), s.cfg);
  EXPECT_EQ(bytes_of(back), bytes_of(m));
  EXPECT_EQ(back.source_domains, m.source_domains);

  auto missing = m.checkpoint(7);
  missing.entries.erase(missing.entries.begin());
  EXPECT_THROW((void)TrainedModel::from_checkpoint(missing, s.cfg), schema_error);
  auto other = s.cfg;
  other.m1 = 3;
  EXPECT_THROW((void)TrainedModel::from_checkpoint(m.checkpoint(7), other), dimension_error);
}

TEST(Pipeline, ContractViolations) {
  Rig s(tiny_config());
  const std::uint32_t srcs[] = {0, 1};
  EXPECT_THROW((void)train_model(s.cfg, s.ds, s.rt, srcs, 1u), contract_error);
  EXPECT_THROW((void)train_model(s.cfg, s.ds, s.rt, std::span<const std::uint32_t>{}, 1u), contract_error);
  auto cfg = tiny_config();
  cfg.n_clients = 5;
  Rig five(cfg);
  EXPECT_THROW((void)five.train(0), partition_error);
}

TEST(Pipeline, TargetDomainByName) {
  auto cfg = tiny_config();
  Rig s(cfg);
  cfg.target_domain = s.ds.domains[2].name;
  const auto m = train_model(cfg, s.ds, s.rt);
  EXPECT_EQ(m.source_domains, (std::vector<std::uint32_t>{0, 1, 3}));
  cfg.target_domain = "nowhere";
  EXPECT_THROW((void)train_model(cfg, s.ds, s.rt), index_error);
}

TEST(Runtime, RebindRejectsOtherFeatureWidths) {
  Rig s(tiny_config());
  auto cfg = tiny_config();
  cfg.synthetic.feature_dim = 12;
  EXPECT_THROW((void)s.rt.rebind(make_dataset(cfg)), dimension_error);
  cfg.synthetic.feature_dim = 16;
  cfg.synthetic.family = "B";
  const auto b = make_dataset(cfg);
  EXPECT_EQ(s.rt.rebind(b).image_emb.rows, b.size());
}

}  // namespace
}  // namespace fdsp
