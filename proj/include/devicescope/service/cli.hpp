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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "devicescope/camal/bundle.hpp"
#include "devicescope/camal/training.hpp"
#include "devicescope/data/manifest.hpp"
#include "devicescope/data/synth.hpp"
#include "devicescope/data/windows.hpp"
#include "devicescope/eval/benchmark.hpp"
#include "devicescope/service/server.hpp"

namespace devicescope::service {

namespace fs = std::filesystem;

inline double default_rate_per_day(data::Appliance kind) {
  switch (kind) {
    case data::Appliance::kKettle: return 2.0;
    case data::Appliance::kMicrowave: return 1.0;
    case data::Appliance::kDishwasher: return 0.6;
    case data::Appliance::kWashingMachine: return 0.5;
    case data::Appliance::kShower: return 0.7;
  }
  return 0.0;
}

inline data::Appliance appliance_flag(const std::string& name) {
  const auto kind = data::parse_appliance(name);
  require(kind.has_value(), ErrorCode::kInvalidArgument, "unknown appliance '" + name + "'");
  return *kind;
}

struct SynthOptions {
  std::size_t houses = 8;
  std::size_t days = 30;
  std::uint64_t seed = 0;
  std::string out;
  std::string dataset = "synth";
  int test_houses = -1;  // default: a quarter of the houses
  std::vector<std::string> appliances = {"kettle", "dishwasher"};
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
  data::SynthConfig cfg;
  cfg.houses = o.houses;
  cfg.days = o.days;
  cfg.rates_per_day.clear();
  for (const auto& a : o.appliances) {
    const auto kind = appliance_flag(a);
    cfg.rates_per_day[kind] = default_rate_per_day(kind);
  }
  const std::size_t n_test = o.test_houses < 0 ? o.houses / 4 : static_cast<std::size_t>(o.test_houses);
  require(n_test < o.houses, ErrorCode::kInvalidArgument, "at least one training house is required");
  auto houses = data::synth_generate(cfg, o.seed);
  fs::create_directories(o.out);
  data::DatasetManifest m;
  m.dataset_id = o.dataset;
  m.sample_period = cfg.sample_period;
  for (std::size_t h = 0; h < houses.size(); ++h) {
    data::round_watts(houses[h]);
    const std::string file = houses[h].house_id + ".csv";
    data::write_csv(fs::path(o.out) / file, houses[h]);
    m.houses.push_back({houses[h].house_id, file, h + n_test >= houses.size() ? data::HouseRole::kTest : data::HouseRole::kTrain});
  }
  const auto manifest = fs::path(o.out) / "manifest.json";
  data::save_manifest(m, manifest);
  out << "wrote " << houses.size() << " houses and " << manifest.string() << '\n';
  return 0;
}

struct IngestOptions {
  std::vector<std::string> inputs;
  std::string out;
  std::string dataset;
  std::int64_t period = data::kDefaultSamplePeriod;
  std::vector<std::string> test_houses;
};

inline int cmd_ingest(const IngestOptions& o, std::ostream& out) {
  fs::create_directories(o.out);
  data::DatasetManifest m;
  m.dataset_id = o.dataset;
  m.sample_period = o.period;
  for (const auto& input : o.inputs) {
    auto series = data::resample(data::load_csv(input), o.period);
    data::round_watts(series);
    const std::string file = series.house_id + ".csv";
    require(m.find(series.house_id) == nullptr, ErrorCode::kInvalidArgument, "house '" + series.house_id + "' given twice");
    data::write_csv(fs::path(o.out) / file, series);
    const bool test = std::find(o.test_houses.begin(), o.test_houses.end(), series.house_id) != o.test_houses.end();
    m.houses.push_back({series.house_id, file, test ? data::HouseRole::kTest : data::HouseRole::kTrain});
    out << series.house_id << ": " << series.size() << " samples, " << series.missing_count() << " missing\n";
  }
  data::save_manifest(m, fs::path(o.out) / "manifest.json");
  return 0;
}

struct TrainOptions {
  std::string manifest;
  std::string appliance;
  std::string out;
  std::size_t window = 1440;
  std::size_t stride = 0;
  std::vector<std::size_t> kernels = {5, 7, 9, 15};
  std::vector<std::size_t> filters = {32, 64, 64};
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double status_threshold = 0.5;
  double calibrate_quantile = 0.0;  // 0: keep status_threshold
  bool quiet = false;
};

/// Training windows of every train-role house in a manifest.
inline std::vector<data::Window> training_windows(const data::DatasetManifest& m, data::Appliance kind,
                                                  std::size_t window, std::size_t stride) {
  std::vector<data::Window> out;
  const auto spec = data::default_spec(kind);
  for (const auto& house : m.load(data::HouseRole::kTrain)) {
    auto ws = data::labeled_windows(house, spec, window, stride);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const auto kind = appliance_flag(o.appliance);
  const auto manifest = data::load_manifest(o.manifest);
  const auto windows = training_windows(manifest, kind, o.window, o.stride);
  camal::EnsembleTrainConfig cfg;
  cfg.kernel_sizes = o.kernels;
  cfg.filters = o.filters;
  cfg.train.epochs = o.epochs;
  cfg.train.batch_size = o.batch;
  cfg.train.learning_rate = o.learning_rate;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.train.validate();
  auto progress = [&](std::size_t member, std::size_t epoch, double loss) {
    if (!o.quiet) err << "member " << member << " epoch " << epoch + 1 << " loss " << loss << '\n';
  };
  auto trained = camal::train_ensemble(windows, kind, cfg, manifest.dataset_id, progress);
  auto& ens = trained.ensemble;
  ens.localization.status_threshold = o.status_threshold;
  if (o.calibrate_quantile > 0.0) {
    ens.localization.status_threshold = camal::calibrate_status_threshold(ens, windows, o.calibrate_quantile);
  }
  const auto path = camal::save_bundle(ens, o.out);
  out << "trained " << ens.models.size() << " models on " << windows.size() << " windows ("
      << ens.fingerprint.positives << " positive); status threshold " << ens.localization.status_threshold
      << "; bundle " << path.string() << '\n';
  return 0;
}

struct EvalOptions {
  std::string manifest;
  std::string bundle;
  std::string store;  // default: <manifest dir>/benchmarks
  std::string method = "camal";
  std::string created_at;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const auto manifest = data::load_manifest(o.manifest);
  auto ens = camal::load_bundle(o.bundle);
  require(ens.fingerprint.dataset_id.empty() || ens.fingerprint.dataset_id == manifest.dataset_id,
          ErrorCode::kInvalidArgument,
          "bundle was trained on '" + ens.fingerprint.dataset_id + "', manifest is '" + manifest.dataset_id + "'");
  const auto houses = manifest.load(data::HouseRole::kTest);
  auto records = eval::run_benchmark(ens, houses, o.created_at);
  for (auto& r : records) {
    r.dataset_id = manifest.dataset_id;
    r.method_id = o.method;
  }
  const fs::path dir = o.store.empty() ? manifest.base_dir / "benchmarks" : fs::path(o.store);
  eval::BenchmarkStore store(eval::BenchmarkStore::path_for(dir, manifest.dataset_id));
  store.append(records);
  for (const auto& r : records) out << eval::to_json(r).dump() << '\n';
  return 0;
}

struct PredictOptions {
  std::string manifest;
  std::string bundle;
  std::string house;
  std::size_t offset = 0;
};

inline int cmd_predict(const PredictOptions& o, std::ostream& out) {
  const auto manifest = data::load_manifest(o.manifest);
  const auto ens = camal::load_bundle(o.bundle);
  const auto* entry = manifest.find(o.house);
  require(entry != nullptr, ErrorCode::kNotFound, "unknown house '" + o.house + "'");
  const auto series = data::load_csv(manifest.resolve(*entry), {}, entry->id);
  require(o.offset + ens.window_length <= series.size(), ErrorCode::kInvalidArgument, "window exceeds the series");
  data::Window w;
  w.house_id = series.house_id;
  w.start_index = o.offset;
  w.start_timestamp = series.timestamps[o.offset];
  w.values.assign(series.aggregate.begin() + static_cast<std::ptrdiff_t>(o.offset),
                  series.aggregate.begin() + static_cast<std::ptrdiff_t>(o.offset + ens.window_length));
  for (double v : w.values) require(!is_missing(v), ErrorCode::kNonFiniteValue, "window contains missing readings");
  const auto r = camal::localize_window(ens, w);
  nlohmann::json j = {{"house", w.house_id},
                      {"offset", o.offset},
                      {"length", ens.window_length},
                      {"appliance", data::appliance_name(ens.appliance)},
                      {"prob_ensemble", round_to(r.detection.prob_ensemble, 6)},
                      {"detected", r.detection.detected},
                      {"y_hat", r.status.y_hat}};
  out << j.dump() << '\n';
  return 0;
}

struct ServeOptions {
  std::string config;
  int port = 0;  // 0: from config / environment
};

inline int cmd_serve(const ServeOptions& o, std::ostream& out) {
  AppConfig cfg = load_app_config(o.config);
  if (o.port != 0) cfg.port = o.port;
  Api api(load_snapshot(cfg));
  httplib::Server server;
  install_routes(server, api);
  out << "listening on http://" << cfg.host << ':' << cfg.port << '\n' << std::flush;
  require(server.listen(cfg.host, cfg.port), ErrorCode::kIoError,
          "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  return 0;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Appliance detection and localization from aggregate smart-meter data", "devicescope"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic houses and a manifest");
  synth_cmd->add_option("--houses", synth.houses)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--days", synth.days)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--dataset", synth.dataset);
  synth_cmd->add_option("--test-houses", synth.test_houses, "Number of held-out houses (default: a quarter)");
  synth_cmd->add_option("--appliances", synth.appliances)->delimiter(',');

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load CSV files, resample and write a dataset");
  ingest_cmd->add_option("inputs", ingest.inputs)->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest.out)->required();
  ingest_cmd->add_option("--dataset", ingest.dataset)->required();
  ingest_cmd->add_option("--period", ingest.period)->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--test-houses", ingest.test_houses)->delimiter(',');

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train an ensemble for one appliance on weak labels");
  train_cmd->add_option("--manifest", train.manifest)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--appliance", train.appliance)->required();
  train_cmd->add_option("--out", train.out)->required();
  train_cmd->add_option("--window", train.window)->check(CLI::PositiveNumber);
  train_cmd->add_option("--stride", train.stride, "Window stride (default: window length)");
  train_cmd->add_option("--kernels", train.kernels)->delimiter(',');
  train_cmd->add_option("--filters", train.filters)->delimiter(',');
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--batch", train.batch);
  train_cmd->add_option("--lr", train.learning_rate);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--threads", train.threads)->check(CLI::PositiveNumber);
  train_cmd->add_option("--status-threshold", train.status_threshold)->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--calibrate-quantile", train.calibrate_quantile,
                        "Set the status threshold from negative training windows")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_flag("--quiet", train.quiet);

  EvalOptions evalo;
  auto* eval_cmd = app.add_subcommand("eval", "Score a bundle on the test houses and record the result");
  eval_cmd->add_option("--manifest", evalo.manifest)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--bundle", evalo.bundle)->required()->check(CLI::ExistingPath);
  eval_cmd->add_option("--store", evalo.store);
  eval_cmd->add_option("--method", evalo.method);
  eval_cmd->add_option("--created-at", evalo.created_at);

  PredictOptions predict;
  auto* predict_cmd = app.add_subcommand("predict", "Detect and localize one window");
  predict_cmd->add_option("--manifest", predict.manifest)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--bundle", predict.bundle)->required()->check(CLI::ExistingPath);
  predict_cmd->add_option("--house", predict.house)->required();
  predict_cmd->add_option("--offset", predict.offset);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP JSON API");
  serve_cmd->add_option("--config", serve.config)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", serve.port)->check(CLI::Range(1, 65535));

  if (!args.empty() && !args.front().starts_with("-") && app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "devicescope: unknown subcommand '" << args.front() << "'\n" << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "devicescope: " << e.what() << '\n' << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, out);
    if (ingest_cmd->parsed()) return cmd_ingest(ingest, out);
    if (train_cmd->parsed()) return cmd_train(train, out, err);
    if (eval_cmd->parsed()) return cmd_eval(evalo, out);
    if (predict_cmd->parsed()) return cmd_predict(predict, out);
    if (serve_cmd->parsed()) return cmd_serve(serve, out);
  } catch (const Error& e) {
    err << "devicescope: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "devicescope: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace devicescope::service
