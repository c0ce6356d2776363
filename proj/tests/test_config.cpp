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

#include <filesystem>
#include <fstream>

#include "fdsp/config.hpp"

namespace fdsp {
namespace {

TEST(Config, CanonicalTextRoundTrips) {
  ExperimentConfig c;
  c.set("alpha", "0.35");
  c.set("prompt_mode", "csp");
  c.set("tau", "0.125");
  c.set("target_domain", "domain_2");
  ExperimentConfig back;
  apply_config_text(back, c.canonical());
  EXPECT_EQ(back.canonical(), c.canonical());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.mode, prompt_mode::csp);
}

TEST(Config, HashSeesEveryChange) {
  const ExperimentConfig base;
  for (auto [k, v] : {std::pair{"alpha", "0.3"}, {"epochs", "7"}, {"seed.noise", "4"}, {"gan.lr", "0.5"},
                      {"momentum_rule", "literal"}, {"z_policy", "fixed-zero"}}) {
    ExperimentConfig c;
    c.set(k, v);
    EXPECT_NE(c.hash(), base.hash()) << k;
  }
  EXPECT_EQ(ExperimentConfig{}.hash(), base.hash());
}

TEST(Config, CommentsBlankLinesAndOverrides) {
  ExperimentConfig c;
  apply_config_text(c, "# desk run\n\nalpha = 0.5  # trailing\n  epochs=4\nalpha = 0.25\n");
  EXPECT_DOUBLE_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.epochs, 4u);
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), config_error);
  EXPECT_THROW(c.set("alpha", "0.2x"), config_error);
  EXPECT_THROW(c.set("epochs", "-3"), config_error);
  EXPECT_THROW(c.set("prompt_mode", "fancy"), config_error);
  EXPECT_THROW(apply_config_text(c, "alpha 0.2\n"), config_error);
  EXPECT_THROW((void)load_config("/nonexistent/fdsp.cfg"), io_error);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
  EXPECT_NO_THROW(ExperimentConfig::paper_profile().validate());
  auto bad = [](const char* k, const char* v) {
    ExperimentConfig c;
    c.set(k, v);
    return c;
  };
  EXPECT_THROW(bad("alpha", "1.5").validate(), config_error);
  EXPECT_THROW(bad("tau", "0").validate(), config_error);
  EXPECT_THROW(bad("epochs_per_round", "0.3").validate(), config_error);
  EXPECT_THROW(bad("batch_size", "0").validate(), config_error);
  auto c = bad("m1", "0");
  c.set("m2", "0");
  EXPECT_THROW(c.validate(), config_error);
  c.set("prompt_mode", "hdp");
  EXPECT_NO_THROW(c.validate());
  auto odd = bad("epochs", "3");
  odd.set("epochs_per_round", "2");
  EXPECT_THROW(odd.validate(), config_error);
}

TEST(Config, RoundsPerStage) {
  ExperimentConfig c;
  c.epochs_per_round = 0.5;
  EXPECT_EQ(c.rounds(10), 20u);
  c.epochs_per_round = 1.0;
  EXPECT_EQ(c.rounds(10), 10u);
}

TEST(Config, SeedLeavesTheBackboneAlone) {
  ExperimentConfig c;
  c.set("seed.backbone", "9");
  c.set("seed", "4");
  EXPECT_EQ(c.data_seed, 4u);
  EXPECT_EQ(c.model_seed, 4u);
  EXPECT_EQ(c.noise_seed, 4u);
  EXPECT_EQ(c.backbone_seed, 9u);
}

TEST(Config, PaperProfileUsesReferenceOptimizerSettings) {
  const auto p = ExperimentConfig::paper_profile();
  EXPECT_EQ(p.epochs, 100u);
  EXPECT_EQ(p.m1, 4u);
  EXPECT_EQ(p.m2, 4u);
  EXPECT_DOUBLE_EQ(p.prompt_opt.lr, 1e-5);
  EXPECT_DOUBLE_EQ(p.gan_opt.lr, 1e-4);
  EXPECT_DOUBLE_EQ(p.gan_opt.weight_decay, 2e-5);
  EXPECT_EQ(p.gan_opt.kind, optimizer_kind::adamw);
  EXPECT_EQ(p.prompt_opt.kind, optimizer_kind::adam);
  EXPECT_DOUBLE_EQ(p.epochs_per_round, 1.0);
}

TEST(Config, LoadsFromFileOverABase) {
  const auto path = std::filesystem::temp_directory_path() / "fdsp_test_config.cfg";
  std::ofstream(path) << "epochs = 12\nprompt_mode = wgm\n";
  const auto c = load_config(path, ExperimentConfig::paper_profile());
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.mode, prompt_mode::wgm);
  EXPECT_DOUBLE_EQ(c.prompt_opt.lr, 1e-5);
  std::filesystem::remove(path);
}

TEST(Config, ModeHelpers) {
  ExperimentConfig c;
  EXPECT_EQ(c.context_rows(), 8u);
  c.mode = prompt_mode::csp;
  EXPECT_EQ(c.context_rows(), 4u);
  EXPECT_EQ(c.effective_m2(), 0u);
  for (auto m : {prompt_mode::dsp, prompt_mode::csp, prompt_mode::hdp, prompt_mode::wgm})
    EXPECT_EQ(parse_prompt_mode(to_string(m)), m);
}

}  // namespace
}  // namespace fdsp
