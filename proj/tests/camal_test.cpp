/*
 * Copyright 2026 The DeviceScope Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "devicescope/camal/bundle.hpp"
#include "devicescope/camal/pipeline.hpp"
#include "devicescope/camal/training.hpp"
#include "oracles.hpp"

namespace ds = devicescope;
using namespace devicescope::camal;
using ds::nn::Matrix;
using ds::nn::Tensor;

namespace {

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

ds::data::Window window_of(std::vector<double> values) {
  ds::data::Window w;
  w.house_id = "h";
  w.values = std::move(values);
  return w;
}

CamalEnsemble random_ensemble(std::mt19937_64& rng, std::size_t T) {
  CamalEnsemble ens;
  ens.window_length = T;
  for (std::size_t k : {5u, 7u, 9u, 15u}) {
    ds::nn::ResNetConfig cfg;
    cfg.kernel_size = k;
    cfg.filters = {4, 6};
    auto m = ds::nn::ResNetModel::zeros(cfg);
    ds::testing::randomize(m, rng);
    for (auto& b : ds::nn::buffers(m)) {
      if (b.name.find("running_var") != std::string::npos) {
        for (double& v : b.values) v = std::abs(v) + 0.5;
      }
    }
    ens.models.push_back(std::move(m));
  }
  return ens;
}

// Positives carry a 2000 W plateau on zero base load; negatives are flat zero.
std::vector<ds::data::Window> plateau_set(std::size_t n, std::size_t T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ds::data::Window> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto w = window_of(std::vector<double>(T, 0.0));
    w.weak_label = static_cast<int>(i % 2);
    w.truth = std::vector<std::uint8_t>(T, 0);
    if (i % 2) {
      const std::size_t len = 3 + rng() % 6, start = rng() % (T - len);
      for (std::size_t t = start; t < start + len; ++t) w.values[t] = 2000.0, (*w.truth)[t] = 1;
    }
    out.push_back(std::move(w));
  }
  return out;
}

const TrainedEnsemble& toy_ensemble() {
  static const TrainedEnsemble trained = [] {
    EnsembleTrainConfig cfg;
    cfg.filters = {8, 8};
    cfg.train.epochs = 15;
    cfg.train.batch_size = 8;
    cfg.seed = 21;
    return train_ensemble(plateau_set(40, 48, 5), ds::data::Appliance::kKettle, cfg, "toy");
  }();
  return trained;
}

}  // namespace

TEST(Ensemble, MeanProbabilityExamples) {
  EXPECT_NEAR(mean_probability(std::vector<double>{0.2, 0.4, 0.6, 0.8}), 0.5, 1e-15);
  EXPECT_EQ(mean_probability(std::vector<double>{0.37}), 0.37);
  EXPECT_THROW(mean_probability(std::vector<double>{}), ds::Error);
}

TEST(Ensemble, SingleMemberProbabilityPassesThrough) {
  std::mt19937_64 rng(1);
  auto ens = random_ensemble(rng, 32);
  ens.models.resize(1);
  auto w = window_of(random_series(rng, 32, 0, 3000));
  const auto r = ensemble_predict(ens, w);
  EXPECT_EQ(r.prob_ensemble, ds::nn::model_forward(ens.models[0], model_input(w.values)).probs[1]);
}

TEST(Ensemble, ModelOrderIsIrrelevant) {
  std::mt19937_64 rng(2);
  auto ens = random_ensemble(rng, 40);
  auto reversed = ens;
  std::reverse(reversed.models.begin(), reversed.models.end());
  for (int i = 0; i < 100; ++i) {
    auto w = window_of(random_series(rng, 40, 0, 3000));
    const auto a = ensemble_predict(ens, w), b = ensemble_predict(reversed, w);
    EXPECT_NEAR(a.prob_ensemble, b.prob_ensemble, 1e-12);
    EXPECT_EQ(a.detected, b.detected);
    auto pb = b.per_model_probs;
    std::reverse(pb.begin(), pb.end());
    EXPECT_EQ(a.per_model_probs, pb);
    double sum = 0.0;
    for (double p : a.per_model_probs) sum += p;
    EXPECT_NEAR(a.prob_ensemble, sum / 4.0, 1e-12);
  }
}

TEST(Ensemble, WindowLengthMustMatch) {
  std::mt19937_64 rng(3);
  auto ens = random_ensemble(rng, 32);
  try {
    ensemble_predict(ens, window_of(std::vector<double>(31, 1.0)));
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.code(), ds::ErrorCode::kLengthMismatch);
  }
}

TEST(Detect, StrictThreshold) {
  EXPECT_TRUE(detect(0.51, 0.5));
  EXPECT_FALSE(detect(0.5, 0.5));
  EXPECT_FALSE(detect(0.49, 0.5));
  EXPECT_THROW(detect(0.7, 0.0), ds::Error);
  EXPECT_THROW(detect(0.7, 1.0), ds::Error);
}

TEST(Cam, SingleFeatureMap) {
  Tensor f(1, 3);
  f(0, 0) = 0, f(0, 1) = 1, f(0, 2) = 3;
  Matrix w(2, 1);
  w << -7, 2;
  EXPECT_EQ(class_activation_map(f, w, 1), (std::vector<double>{0, 2, 6}));
}

TEST(Cam, ZeroWeightsGiveZeroMap) {
  std::mt19937_64 rng(4);
  auto ens = random_ensemble(rng, 24);
  auto& m = ens.models[2];
  m.head_weight.setZero();
  const auto cam = cam_extract(m, window_of(random_series(rng, 24, 0, 2000)), 1);
  EXPECT_EQ(cam, std::vector<double>(24, 0.0));
}

TEST(Cam, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto ens = random_ensemble(rng, 30);
    const auto& m = ens.models[trial % 4];
    auto w = window_of(random_series(rng, 30, 0, 2500));
    const auto fwd = ds::nn::model_forward(m, model_input(w.values));
    const std::size_t cls = trial % 2;
    const auto fast = cam_extract(m, w, cls);
    const auto slow = ds::testing::naive_cam(ds::testing::to_grid(fwd.feature_maps), m.head_weight, cls);
    ASSERT_EQ(fast.size(), 30u);
    for (std::size_t t = 0; t < 30; ++t) ASSERT_NEAR(fast[t], slow[t], 1e-12);
  }
}

TEST(Cam, LinearInFeatureMaps) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a(5, 20), b(5, 20), w(2, 5);
    for (auto* m : {&a, &b, &w}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
    }
    const auto ca = class_activation_map(Tensor(a), w, 1), cb = class_activation_map(Tensor(b), w, 1);
    const auto cab = class_activation_map(Tensor(Matrix(a + b)), w, 1);
    for (std::size_t t = 0; t < 20; ++t) ASSERT_NEAR(cab[t], ca[t] + cb[t], 1e-12);
  }
}

TEST(Cam, ShapeErrors) {
  EXPECT_THROW(class_activation_map(Tensor(3, 4), Matrix::Zero(2, 2), 1), ds::Error);
  EXPECT_THROW(class_activation_map(Tensor(2, 4), Matrix::Zero(2, 2), 2), ds::Error);
}

TEST(CamNormalize, Examples) {
  EXPECT_EQ(cam_normalize(std::vector<double>{1, 3, 5}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(cam_normalize(std::vector<double>{2, 2, 2}), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(cam_normalize(std::vector<double>{1, std::nan(""), 2}), ds::Error);
}

TEST(CamNormalize, BoundsAndIdempotence) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    auto cam = random_series(rng, 2 + rng() % 200, -50, 50);
    const auto n = cam_normalize(cam);
    const auto [lo, hi] = std::minmax_element(n.begin(), n.end());
    ASSERT_EQ(*lo, 0.0);
    ASSERT_EQ(*hi, 1.0);
    const auto again = cam_normalize(n);
    for (std::size_t t = 0; t < n.size(); ++t) ASSERT_NEAR(again[t], n[t], 1e-15);
  }
}

TEST(CamAverage, Examples) {
  const std::vector<double> a = {0.1, 0.7, 0.3};
  EXPECT_EQ(cam_average(std::vector<std::vector<double>>{a, a}), a);
  EXPECT_EQ(cam_average(std::vector<std::vector<double>>{{0, 1}, {1, 0}}), (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(cam_average(std::vector<std::vector<double>>{{0, 1}, {1}}), ds::Error);
}

TEST(CamAverage, MatchesSummationOracleAndStaysInUnitRange) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6, T = 1 + rng() % 100;
    std::vector<std::vector<double>> cams;
    for (std::size_t i = 0; i < n; ++i) cams.push_back(cam_normalize(random_series(rng, T, -5, 5)));
    const auto avg = cam_average(cams);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> column;
      for (const auto& c : cams) column.push_back(c[t]);
      ASSERT_NEAR(avg[t], ds::testing::naive_mean(column), 1e-12);
      ASSERT_GE(avg[t], 0.0);
      ASSERT_LE(avg[t], 1.0);
    }
  }
}

TEST(Attention, ClosedForm) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  const auto s = attention_scores(std::vector<double>{0, 1}, std::vector<double>{5, -5}, InputTransform::kRaw);
  EXPECT_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 0.0066928509242848554, 1e-15);
  EXPECT_GT(attention_scores(std::vector<double>{1}, std::vector<double>{40}, InputTransform::kRaw)[0], 1 - 1e-12);
}

TEST(Attention, ZeroCamGivesHalfAndZscoreCentersWindow) {
  std::mt19937_64 rng(9);
  const auto x = random_series(rng, 50, 0, 3000);
  std::vector<double> cam(50, 0.0);
  for (double v : attention_scores(cam, x, InputTransform::kZScore)) EXPECT_EQ(v, 0.5);
  std::fill(cam.begin(), cam.end(), 1.0);
  const auto s = attention_scores(cam, x, InputTransform::kZScore);
  const auto z = ds::nn::standardize(x);
  for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(s[t] > 0.5, z[t] > 0.0) << t;
  // A constant window has no spread to standardize; every score sits at 0.5.
  for (double v : attention_scores(cam, std::vector<double>(50, 120.0), InputTransform::kZScore)) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(attention_scores(cam, std::vector<double>(49, 1.0), InputTransform::kRaw), ds::Error);
}

TEST(Attention, RawNonNegativeInputMarksPositiveProductOnly) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto cam = cam_normalize(random_series(rng, 40, -1, 1));
    auto x = random_series(rng, 40, 0, 3000);
    x[rng() % 40] = 0.0;
    const auto y = binarize_status(attention_scores(cam, x, InputTransform::kRaw), 0.5);
    for (std::size_t t = 0; t < 40; ++t) ASSERT_EQ(y[t], cam[t] * x[t] > 0 ? 1 : 0);
  }
}

TEST(Binarize, StrictAndMonotone) {
  EXPECT_EQ(binarize_status(std::vector<double>{0.49, 0.5, 0.51}, 0.5), (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(binarize_status(std::vector<double>(4, 1.0), 0.5), std::vector<std::uint8_t>(4, 1));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_series(rng, 30, 0, 1);
    const double lo = u(rng), hi = std::min(0.999, lo + u(rng) / 2);
    const auto a = binarize_status(s, lo), b = binarize_status(s, hi);
    for (std::size_t t = 0; t < 30; ++t) {
      ASSERT_LE(b[t], a[t]);
      for (std::size_t u2 = 0; u2 < 30; ++u2) {
        if (s[t] <= s[u2]) ASSERT_LE(a[t], a[u2]);
      }
    }
  }
}

TEST(Localize, UndetectedWindowIsAllZero) {
  std::mt19937_64 rng(12);
  auto ens = random_ensemble(rng, 32);
  for (auto& m : ens.models) {
    m.head_weight.setZero();
    m.head_bias << std::log(7.0 / 3.0), 0.0;  // p(class 1) = 0.3
  }
  const auto r = localize_window(ens, window_of(random_series(rng, 32, 0, 3000)));
  EXPECT_NEAR(r.detection.prob_ensemble, 0.3, 1e-12);
  EXPECT_FALSE(r.detection.detected);
  EXPECT_EQ(r.status.y_hat, std::vector<std::uint8_t>(32, 0));
  EXPECT_EQ(r.status.s, std::vector<double>(32, 0.0));
  EXPECT_EQ(r.status.cam_avg, std::vector<double>(32, 0.0));
}

TEST(Localize, GatingHoldsOnRandomEnsembles) {
  std::mt19937_64 rng(13);
  std::size_t gated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto ens = random_ensemble(rng, 24);
    const auto r = localize_window(ens, window_of(random_series(rng, 24, 0, 3000)));
    ASSERT_EQ(r.status.y_hat.size(), 24u);
    ASSERT_EQ(r.detection.detected, r.detection.prob_ensemble > 0.5);
    if (!r.detection.detected) {
      ++gated;
      ASSERT_EQ(std::count(r.status.y_hat.begin(), r.status.y_hat.end(), 1), 0);
    } else {
      for (std::size_t t = 0; t < 24; ++t) ASSERT_EQ(r.status.y_hat[t], r.status.s[t] > 0.5 ? 1 : 0);
    }
  }
  EXPECT_GT(gated, 0u);
}

TEST(Localize, PureFunctionOfInputs) {
  std::mt19937_64 rng(14);
  auto ens = random_ensemble(rng, 36);
  auto w = window_of(random_series(rng, 36, 0, 3000));
  const auto a = localize_window(ens, w), b = localize_window(ens, w);
  EXPECT_EQ(a.detection.per_model_probs, b.detection.per_model_probs);
  EXPECT_EQ(a.status.s, b.status.s);
  EXPECT_EQ(a.status.y_hat, b.status.y_hat);
  EXPECT_EQ(a.status.cam_avg, b.status.cam_avg);
}

TEST(Localize, TrainedEnsembleOverlapsInjectedPulse) {
  const auto& ens = toy_ensemble().ensemble;
  auto windows = plateau_set(20, 48, 99);
  std::size_t positives = 0;
  for (const auto& w : windows) {
    const auto r = localize_window(ens, w);
    EXPECT_EQ(r.detection.detected, *w.weak_label == 1);
    if (*w.weak_label == 0) continue;
    ++positives;
    std::size_t inter = 0;
    for (std::size_t t = 0; t < 48; ++t) inter += r.status.y_hat[t] & (*w.truth)[t];
    EXPECT_GT(inter, 0u);
  }
  EXPECT_EQ(positives, 10u);
}

TEST(Training, MembersFollowKernelSizesAndSeeds) {
  const auto& trained = toy_ensemble();
  ASSERT_EQ(trained.ensemble.models.size(), 4u);
  const std::vector<std::size_t> kernels = {5, 7, 9, 15};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(trained.ensemble.models[i].config.kernel_size, kernels[i]);
    EXPECT_EQ(trained.members[i].loss_history.size(), 15u);
  }
  EXPECT_EQ(trained.ensemble.fingerprint.windows, 40u);
  EXPECT_EQ(trained.ensemble.fingerprint.positives, 20u);
  EXPECT_EQ(trained.ensemble.fingerprint.labels_used, 40u);
  EXPECT_EQ(trained.ensemble.window_length, 48u);
}

TEST(Training, ThreadCountDoesNotChangeWeights) {
  EnsembleTrainConfig cfg;
  cfg.kernel_sizes = {5, 7};
  cfg.filters = {4};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  auto windows = plateau_set(16, 24, 3);
  const auto serial = train_ensemble(windows, ds::data::Appliance::kKettle, cfg);
  cfg.threads = 2;
  const auto parallel = train_ensemble(windows, ds::data::Appliance::kKettle, cfg);
  for (std::size_t m = 0; m < 2; ++m) {
    auto a = ds::nn::parameters(const_cast<ds::nn::ResNetModel&>(serial.ensemble.models[m]));
    auto b = ds::nn::parameters(const_cast<ds::nn::ResNetModel&>(parallel.ensemble.models[m]));
    for (std::size_t p = 0; p < a.size(); ++p) {
      ASSERT_TRUE(std::equal(a[p].values.begin(), a[p].values.end(), b[p].values.begin()));
    }
  }
}

TEST(Selection, KeepsAtMostFiveAndNeverLowersValidationF1) {
  std::mt19937_64 rng(15);
  auto ens = random_ensemble(rng, 48);
  const auto& good = toy_ensemble().ensemble.models;
  ens.models.insert(ens.models.end(), good.begin(), good.end());
  auto validation = plateau_set(20, 48, 77);
  const auto chosen = select_members(ens, validation, 5);
  ASSERT_FALSE(chosen.empty());
  EXPECT_LE(chosen.size(), 5u);
  EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
  const auto picked = subset(ens, chosen);
  std::size_t correct = 0;
  for (const auto& w : validation) correct += ensemble_predict(picked, w).detected == (*w.weak_label == 1);
  EXPECT_EQ(correct, validation.size());
}

TEST(Bundle, RoundTripPreservesPredictions) {
  const auto& trained = toy_ensemble();
  auto ens = trained.ensemble;
  ens.localization.status_threshold = 0.8;
  const auto dir = std::filesystem::temp_directory_path() / "devicescope_bundle_test";
  std::filesystem::remove_all(dir);
  save_bundle(ens, dir);
  const auto back = load_bundle(dir);
  EXPECT_EQ(back.models.size(), 4u);
  EXPECT_EQ(back.window_length, 48u);
  EXPECT_EQ(back.localization.status_threshold, 0.8);
  EXPECT_EQ(back.fingerprint.digest, ens.fingerprint.digest);
  EXPECT_EQ(back.fingerprint.dataset_id, "toy");
  for (const auto& w : plateau_set(6, 48, 4)) {
    const auto a = localize_window(ens, w), b = localize_window(back, w);
    EXPECT_EQ(a.status.s, b.status.s);
    EXPECT_EQ(a.detection.prob_ensemble, b.detection.prob_ensemble);
  }
  std::filesystem::remove_all(dir);
}
