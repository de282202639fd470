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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "devicescope/camal/pipeline.hpp"
#include "devicescope/eval/metrics.hpp"
#include "devicescope/nn/train.hpp"

namespace devicescope::camal {

struct EnsembleTrainConfig {
  std::vector<std::size_t> kernel_sizes = {5, 7, 9, 15};
  std::vector<std::size_t> filters = {32, 64, 64};
  std::size_t convs_per_block = 3;
  std::size_t seeds_per_kernel = 1;
  nn::TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // members train independently
};

struct MemberReport {
  std::size_t kernel_size = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
};

struct TrainedEnsemble {
  CamalEnsemble ensemble;
  std::vector<MemberReport> members;
};

/// FNV-1a over (house, start, label) of every training window.
inline std::string fingerprint_digest(std::span<const data::Window> windows) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& w : windows) {
    mix(w.house_id.data(), w.house_id.size());
    const std::uint64_t start = w.start_index;
    const int label = w.weak_label.value_or(-1);
    const std::uint64_t len = w.length();
    mix(&start, sizeof start);
    mix(&label, sizeof label);
    mix(&len, sizeof len);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline TrainingFingerprint make_fingerprint(std::string dataset_id, std::span<const data::Window> windows) {
  TrainingFingerprint f;
  f.dataset_id = std::move(dataset_id);
  std::set<std::string> houses;
  for (const auto& w : windows) {
    houses.insert(w.house_id);
    f.positives += w.weak_label.value_or(0) == 1 ? 1 : 0;
  }
  f.train_houses.assign(houses.begin(), houses.end());
  f.windows = windows.size();
  f.labels_used = windows.size();  // one weak label per window
  f.digest = fingerprint_digest(windows);
  return f;
}

/// Trains one detector per (kernel size, seed slot). Member seeds derive
/// from the base seed and the member index only, so results do not depend on
/// the thread count.
inline TrainedEnsemble train_ensemble(std::span<const data::Window> windows, data::Appliance appliance,
                                      const EnsembleTrainConfig& cfg, const std::string& dataset_id = "",
                                      const std::function<void(std::size_t, std::size_t, double)>& progress = {}) {
  require(!cfg.kernel_sizes.empty() && cfg.seeds_per_kernel >= 1, ErrorCode::kInvalidConfig,
          "no ensemble members requested");
  require(!windows.empty(), ErrorCode::kEmptyInput, "no training windows");
  struct Job {
    std::size_t kernel;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t k : cfg.kernel_sizes) {
    for (std::size_t r = 0; r < cfg.seeds_per_kernel; ++r) {
      jobs.push_back({k, cfg.seed * 1000003ull + jobs.size() * 7919ull + 1});
    }
  }
  std::vector<nn::TrainResult> results(jobs.size());
  auto run = [&](std::size_t j) {
    nn::ResNetConfig rc;
    rc.kernel_size = jobs[j].kernel;
    rc.filters = cfg.filters;
    rc.convs_per_block = cfg.convs_per_block;
    nn::TrainConfig tc = cfg.train;
    tc.seed = jobs[j].seed;
    auto on_epoch = progress ? nn::ProgressFn([&, j](std::size_t e, double l) { progress(j, e, l); })
                             : nn::ProgressFn{};
    results[j] = nn::train(nn::ResNetModel::initialize(rc, jobs[j].seed), windows, tc, on_epoch);
  };
  if (cfg.threads <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
  } else {
    std::vector<std::exception_ptr> errors(jobs.size());
    for (std::size_t start = 0; start < jobs.size(); start += cfg.threads) {
      std::vector<std::jthread> pool;
      for (std::size_t j = start; j < std::min(jobs.size(), start + cfg.threads); ++j) {
        pool.emplace_back([&, j] {
          try {
            run(j);
          } catch (...) {
            errors[j] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  TrainedEnsemble out;
  out.ensemble.appliance = appliance;
  out.ensemble.window_length = windows.front().length();
  out.ensemble.fingerprint = make_fingerprint(dataset_id, windows);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    out.members.push_back({jobs[j].kernel, jobs[j].seed, results[j].loss_history});
    out.ensemble.models.push_back(std::move(results[j].model));
  }
  return out;
}

/// Greedy forward selection of at most `max_size` members by window-level F1
/// on weakly labelled validation windows. Stops when no addition improves F1.
inline std::vector<std::size_t> select_members(const CamalEnsemble& candidates,
                                               std::span<const data::Window> validation,
                                               std::size_t max_size = 5) {
  candidates.validate();
  require(!validation.empty(), ErrorCode::kEmptyInput, "no validation windows");
  const std::size_t n = candidates.models.size();
  std::vector<std::vector<double>> probs(n);
  std::vector<std::uint8_t> truth;
  for (const auto& w : validation) {
    require(w.weak_label.has_value(), ErrorCode::kNoGroundTruthAvailable, "validation window without label");
    truth.push_back(static_cast<std::uint8_t>(*w.weak_label));
    const nn::Tensor x = model_input(w.values);
    for (std::size_t m = 0; m < n; ++m) probs[m].push_back(nn::model_forward(candidates.models[m], x).probs[1]);
  }
  auto score = [&](const std::vector<std::size_t>& members) {
    std::vector<std::uint8_t> pred(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      double p = 0.0;
      for (std::size_t m : members) p += probs[m][i];
      pred[i] = detect(p / static_cast<double>(members.size()), candidates.detection_threshold) ? 1 : 0;
    }
    return eval::detection_metrics(pred, truth).f1.value;
  };
  std::vector<std::size_t> chosen;
  double best = -1.0;
  while (chosen.size() < std::min(max_size, n)) {
    std::size_t pick = n;
    double pick_score = best;
    for (std::size_t m = 0; m < n; ++m) {
      if (std::find(chosen.begin(), chosen.end(), m) != chosen.end()) continue;
      auto trial = chosen;
      trial.push_back(m);
      const double s = score(trial);
      if (s > pick_score) {
        pick_score = s;
        pick = m;
      }
    }
    if (pick == n) break;
    chosen.push_back(pick);
    best = pick_score;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// Attention scores without the detection gate.
inline std::vector<double> ungated_scores(const CamalEnsemble& ens, const data::Window& window) {
  check_window(ens, window);
  const nn::Tensor x = model_input(window.values);
  std::vector<std::vector<double>> cams;
  for (const auto& model : ens.models) {
    const auto fwd = nn::model_forward(model, x);
    cams.push_back(cam_normalize(class_activation_map(fwd.feature_maps, model.head_weight, 1)));
  }
  return attention_scores(cam_average(cams), window.values, ens.localization.transform);
}

/// Status threshold chosen from weak labels alone: the `quantile` of the
/// ungated scores over windows labelled as containing no activation, so
/// that roughly 1 - quantile of known-OFF timesteps would be marked ON.
/// Never returns less than 0.5.
inline double calibrate_status_threshold(const CamalEnsemble& ens, std::span<const data::Window> windows,
                                         double quantile) {
  require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile must be in (0, 1)");
  std::vector<double> scores;
  for (const auto& w : windows) {
    require(w.weak_label.has_value(), ErrorCode::kNoGroundTruthAvailable, "calibration window without label");
    if (*w.weak_label != 0) continue;
    const auto s = ungated_scores(ens, w);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  require(!scores.empty(), ErrorCode::kEmptyInput, "no negative windows to calibrate on");
  const auto k = std::min(scores.size() - 1, static_cast<std::size_t>(quantile * static_cast<double>(scores.size())));
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), scores.end());
  return std::clamp(scores[k], 0.5, 1.0 - 1e-9);
}

inline CamalEnsemble subset(const CamalEnsemble& ens, std::span<const std::size_t> members) {
  CamalEnsemble out = ens;
  out.models.clear();
  for (std::size_t m : members) out.models.push_back(ens.models.at(m));
  return out;
}

}  // namespace devicescope::camal
