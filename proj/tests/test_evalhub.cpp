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

#include <random>

#include "fdsp/evalhub.hpp"
#include "tiny_config.hpp"

namespace fdsp {
namespace {

using testing::tiny_config;

Tensor unit_row(std::size_t d, std::mt19937_64& rng) {
  Tensor t = Tensor::gaussian(1, d, 1.0, rng);
  double n = 0.0;
  for (float x : t.data) n += double(x) * x;
  for (float& x : t.data) x = static_cast<float>(x / std::sqrt(n));
  return t;
}

struct Bench {
  encoder_dims dims{16, 8, 8, 16, 16};
  FrozenEncoders enc{dims, 3};
  std::mt19937_64 rng{11};
  GanParams gan = GanParams::make(gan_dims{4, 8, 4, 8, 16}, 5);
  Tensor classes = Tensor::gaussian(5, 8, 1.0, rng);
};

TEST(Score, HandComputedMacroF1) {
  // class 0: tp1 fp1 fn0 -> 2/3; class 1: tp1 fp0 fn1 -> 2/3; class 2 never seen -> 0
  const std::size_t truth[] = {0, 1, 1}, pred[] = {0, 1, 0};
  const auto m = score(truth, pred, 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 2.0 / 3.0);
  EXPECT_NEAR(m.macro_f1, 4.0 / 9.0, 1e-12);
}

TEST(Score, ConstantPredictorOnBalancedClasses) {
  std::vector<std::size_t> truth, pred;
  for (std::size_t k = 0; k < 5; ++k)
    for (int i = 0; i < 10; ++i) {
      truth.push_back(k);
      pred.push_back(2);
    }
  const auto m = score(truth, pred, 5);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.2);
  EXPECT_NEAR(m.macro_f1, (2.0 * 10 / (2 * 10 + 40)) / 5.0, 1e-12);
  const auto perfect = score(truth, truth, 5);
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(perfect.macro_f1, 1.0);
}

TEST(Score, RejectsEmptyAndMismatched) {
  const std::size_t a[] = {0, 1}, b[] = {0};
  EXPECT_THROW((void)score(std::span<const std::size_t>{}, std::span<const std::size_t>{}, 2), degenerate_input_error);
  EXPECT_THROW((void)score(a, b, 2), dimension_error);
}

TEST(Predict, IdenticalClassTokensAreATie) {
  Bench b;
  Tensor same(2, 8);
  for (std::size_t j = 0; j < 8; ++j) same(0, j) = same(1, j) = b.classes(0, j);
  const auto p = predict(b.gan, b.enc, same, unit_row(8, b.rng), 0.01, z_policy::mean_of_samples, 8, 1);
  EXPECT_NEAR(p.probs(0, 0), 0.5, 1e-6);
  EXPECT_NEAR(p.probs(0, 1), 0.5, 1e-6);
}

TEST(Predict, ProbabilitiesFormADistribution) {
  Bench b;
  for (int i = 0; i < 100; ++i) {
    const auto p = predict(b.gan, b.enc, b.classes, unit_row(8, b.rng), 0.05, z_policy::seeded_sample, 1, i);
    double s = 0.0;
    for (float x : p.probs.data) {
      EXPECT_GE(x, 0.0f);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
    for (float x : p.probs.data) EXPECT_LE(x, p.probs(0, p.predicted));
  }
}

TEST(Predict, FixedZeroIgnoresTheNoiseSeed) {
  Bench b;
  const Tensor emb = unit_row(8, b.rng);
  const auto a = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::fixed_zero, 1, 1);
  const auto c = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::fixed_zero, 1, 99);
  EXPECT_TRUE(bit_equal(a.probs, c.probs));
  const auto s1 = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::mean_of_samples, 8, 7);
  const auto s2 = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::mean_of_samples, 8, 7);
  EXPECT_TRUE(bit_equal(s1.probs, s2.probs));
}

TEST(Predict, ScalingTheTemperatureKeepsTheArgmax) {
  Bench b;
  for (int i = 0; i < 20; ++i) {
    const Tensor emb = unit_row(8, b.rng);
    const auto hot = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::fixed_zero, 1, 0);
    const auto cold = predict(b.gan, b.enc, b.classes, emb, 0.5, z_policy::fixed_zero, 1, 0);
    EXPECT_EQ(hot.predicted, cold.predicted);
  }
}

TEST(Predict, ContractErrors) {
  Bench b;
  const Tensor emb = unit_row(8, b.rng);
  EXPECT_THROW((void)predict(b.gan, b.enc, b.classes.row_slice(0, 1), emb, 0.01, z_policy::fixed_zero, 1, 0),
               contract_error);
  EXPECT_THROW((void)predict(b.gan, b.enc, b.classes, emb, 0.0, z_policy::fixed_zero, 1, 0), contract_error);
}

// A generator with zero output weights emits its output bias whatever z and f(x)
// are. With the bias set to [v; mean u] it must agree with the generator-free path.
TEST(PredictWgm, MatchesAConstantGenerator) {
  Bench b;
  const std::uint32_t domains[] = {0, 1, 2};
  auto p = DspParams::make(2, 2, 8, domains, b.rng, 0.5);
  const Tensor ctx = mean_domain_context(p);
  ASSERT_EQ(ctx.rows, 4u);
  auto& out = b.gan.gen[2];
  std::fill(out.weight.data.begin(), out.weight.data.end(), 0.0f);
  out.bias = ctx.reshaped(1, ctx.size());
  for (int i = 0; i < 10; ++i) {
    const Tensor emb = unit_row(8, b.rng);
    const auto a = predict(b.gan, b.enc, b.classes, emb, 0.01, z_policy::mean_of_samples, 4, i);
    const auto w = predict_wgm(p, b.enc, b.classes, emb, 0.01);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(a.probs(0, j), w.probs(0, j), 1e-5);
    EXPECT_EQ(a.predicted, w.predicted);
  }
}

TEST(PredictWgm, SingleSourceMeanIsThatDomain) {
  std::mt19937_64 rng(2);
  const std::uint32_t one[] = {3};
  const auto p = DspParams::make(2, 3, 4, one, rng, 1.0);
  const Tensor ctx = mean_domain_context(p);
  EXPECT_TRUE(bit_equal(ctx, assemble_prompt(p, 3, Tensor(1, 4)).row_slice(0, 5)));
}

TEST(PredictWgm, MeanOverDomains) {
  std::mt19937_64 rng(2);
  const std::uint32_t two[] = {0, 1};
  const auto p = DspParams::make(1, 2, 3, two, rng, 1.0);
  const Tensor ctx = mean_domain_context(p);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(ctx(1 + r, j), 0.5 * (p.u.at(0)(r, j) + p.u.at(1)(r, j)), 1e-6);
}

class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(tiny_config());
    ds_ = new data::DomainDataset(make_dataset(*cfg_));
    rt_ = new Runtime(Runtime::make(*cfg_, *ds_));
    const std::uint32_t srcs[] = {1, 2, 3};
    model_ = new TrainedModel(train_model(*cfg_, *ds_, *rt_, srcs, 0u));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete rt_;
    delete ds_;
    delete cfg_;
  }
  static inline ExperimentConfig* cfg_ = nullptr;
  static inline data::DomainDataset* ds_ = nullptr;
  static inline Runtime* rt_ = nullptr;
  static inline TrainedModel* model_ = nullptr;
};

TEST_F(Trained, EvaluationIsPure) {
  const auto enc = rt_->checksum();
  const auto prompts = model_->prompts.checksum();
  const auto gen = model_->gan->generator_checksum(), disc = model_->gan->discriminator_checksum();
  (void)evaluate_all(*model_, *rt_, *ds_, *cfg_, "holdout");
  EXPECT_EQ(rt_->checksum(), enc);
  EXPECT_EQ(model_->prompts.checksum(), prompts);
  EXPECT_EQ(model_->gan->generator_checksum(), gen);
  EXPECT_EQ(model_->gan->discriminator_checksum(), disc);
}

TEST_F(Trained, ThreadCountDoesNotChangePredictions) {
  const auto a = predict_domain(*model_, *rt_, *ds_, 0, *cfg_, 1);
  const auto b = predict_domain(*model_, *rt_, *ds_, 0, *cfg_, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(bit_equal(a[i].probs, b[i].probs));
    EXPECT_EQ(*a[i].true_label, ds_->label_of[ds_->indices_of(0)[i]]);
  }
}

TEST_F(Trained, ReportFormats) {
  const auto r = evaluate_all(*model_, *rt_, *ds_, *cfg_, "holdout");
  ASSERT_EQ(r.rows.size(), 4u);
  double s = 0.0;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.samples, cfg_->synthetic.classes * cfg_->synthetic.shots);
    s += row.accuracy;
  }
  EXPECT_NEAR(r.mean_accuracy(), s / 4.0, 1e-12);
  const auto csv = r.to_csv();
  EXPECT_EQ(csv.rfind(EvalReport::csv_header(), 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("holdout," + ds_->domains[0].name + ","), std::string::npos);
  const auto j = r.to_json();
  EXPECT_EQ(j["domains"].size(), 4u);
  EXPECT_EQ(j["config_hash"], cfg_->hash());
  EXPECT_DOUBLE_EQ(j["mean_accuracy"].get<double>(), r.mean_accuracy());
}

TEST_F(Trained, WgmNeedsNoGenerator) {
  auto cfg = *cfg_;
  cfg.mode = prompt_mode::wgm;
  const std::uint32_t srcs[] = {1, 2, 3};
  const auto m = train_model(cfg, *ds_, *rt_, srcs, 0u);
  EXPECT_FALSE(m.gan.has_value());
  const auto row = evaluate(m, *rt_, *ds_, 0, cfg);
  EXPECT_EQ(row.samples, ds_->indices_of(0).size());
}

TEST(Protocols, LeaveOneDomainOutHasARowPerDomain) {
  const auto cfg = tiny_config();
  const auto r = leave_one_domain_out(cfg);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.protocol, "lodo");
  const auto ds = make_dataset(cfg);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.rows[i].target_domain, ds.domains[i].name);
  EXPECT_EQ(leave_one_domain_out(cfg).to_csv(), r.to_csv());
}

TEST(Protocols, CrossDatasetOnItselfEqualsEvaluateAll) {
  const auto cfg = tiny_config();
  const auto ds = make_dataset(cfg);
  const auto rt = Runtime::make(cfg, ds);
  std::vector<std::uint32_t> all{0, 1, 2, 3};
  const auto model = train_model(cfg, ds, rt, all, std::nullopt);
  const auto direct = evaluate_all(model, rt, ds, cfg, "cross-dataset");
  EXPECT_EQ(cross_dataset(cfg, ds, ds).to_csv(), direct.to_csv());
}

TEST(Protocols, CrossDatasetWithDisjointClassNames) {
  auto cfg = tiny_config();
  const auto src = make_dataset(cfg);
  cfg.synthetic.family = "B";
  auto tgt = make_dataset(cfg);
  for (auto& c : tgt.classes) c = "other_" + c;
  const auto r = cross_dataset(tiny_config(), src, tgt);
  ASSERT_EQ(r.rows.size(), tgt.domains.size());
  for (const auto& row : r.rows) EXPECT_TRUE(row.accuracy >= 0.0 && row.accuracy <= 1.0);
  cfg.synthetic.feature_dim = 12;
  EXPECT_THROW((void)cross_dataset(tiny_config(), src, make_dataset(cfg)), dimension_error);
}

}  // namespace
}  // namespace fdsp
