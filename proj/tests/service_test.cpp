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

#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "devicescope/camal/bundle.hpp"
#include "devicescope/camal/training.hpp"
#include "devicescope/data/synth.hpp"
#include "devicescope/service/api.hpp"
#include "devicescope/service/config.hpp"
#include "devicescope/service/server.hpp"

#include <httplib.h>

namespace ds = devicescope;
namespace fs = std::filesystem;
using namespace devicescope::service;

namespace {

constexpr std::size_t kDays = 10;
constexpr std::size_t kLength = 360;

/// Synthetic dataset, a small kettle bundle and a config, built once.
struct Fixture {
  fs::path root;
  AppConfig config;
  std::vector<ds::data::PowerSeries> houses;

  Fixture() {
    root = fs::temp_directory_path() / "devicescope_service_test";
    fs::remove_all(root);
    fs::create_directories(root / "data");
    ds::data::SynthConfig sc;
    sc.houses = 3;
    sc.days = kDays;
    sc.rates_per_day = {{ds::data::Appliance::kKettle, 3.0}};
    houses = ds::data::synth_generate(sc, 5);
    ds::data::DatasetManifest m;
    m.dataset_id = "synth";
    for (std::size_t h = 0; h < houses.size(); ++h) {
      ds::data::round_watts(houses[h]);
      ds::data::write_csv(root / "data" / (houses[h].house_id + ".csv"), houses[h]);
      m.houses.push_back({houses[h].house_id, houses[h].house_id + ".csv",
                          h == 2 ? ds::data::HouseRole::kTest : ds::data::HouseRole::kTrain});
    }
    ds::data::save_manifest(m, root / "data" / "manifest.json");

    std::vector<ds::data::Window> windows;
    for (std::size_t h = 0; h < 2; ++h) {
      auto ws = ds::data::labeled_windows(houses[h], ds::data::default_spec(ds::data::Appliance::kKettle), kLength,
                                          kLength / 2);
      windows.insert(windows.end(), ws.begin(), ws.end());
    }
    ds::camal::EnsembleTrainConfig tc;
    tc.kernel_sizes = {5, 9};
    tc.filters = {8, 8};
    tc.train.epochs = 8;
    tc.seed = 3;
    auto trained = ds::camal::train_ensemble(windows, ds::data::Appliance::kKettle, tc, "synth");
    ds::camal::save_bundle(trained.ensemble, root / "models" / "kettle");

    std::ofstream(root / "config.json") << R"({
      "data_root": ".",
      "manifests": ["data/manifest.json"],
      "bundles": {"kettle": "models/kettle"},
      "benchmark_dir": "benchmarks",
      "port": 18080
    })";
    config = load_app_config(root / "config.json", [](const char*) { return std::nullopt; });
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Api make_api() { return Api(load_snapshot(fixture().config)); }

std::map<std::string, std::string> window_params(std::size_t offset, std::size_t length = kLength,
                                                 const std::string& house = "house_01") {
  return {{"dataset", "synth"}, {"house", house}, {"offset", std::to_string(offset)}, {"length", std::to_string(length)}};
}

Json predict_body(std::size_t offset, std::vector<std::string> appliances, std::size_t length = kLength) {
  return {{"dataset", "synth"}, {"house", "house_03"}, {"offset", offset}, {"length", length}, {"appliances", appliances}};
}

void expect_error(const Response& r, int status) {
  EXPECT_EQ(r.status, status) << r.body.dump();
  ASSERT_TRUE(r.body.contains("error"));
  EXPECT_TRUE(r.body["error"]["code"].is_string());
  EXPECT_TRUE(r.body["error"]["message"].is_string());
}

}  // namespace

TEST(AppConfig, FileAndEnvironmentOverrides) {
  const auto& f = fixture();
  EXPECT_EQ(f.config.port, 18080);
  EXPECT_EQ(f.config.data_root, f.root / ".");
  EXPECT_NO_THROW(f.config.validate());
  auto env = [](const char* name) -> std::optional<std::string> {
    if (std::string(name) == "DEVICESCOPE_PORT") return "9001";
    if (std::string(name) == "DEVICESCOPE_DATA_ROOT") return "/srv/data";
    return std::nullopt;
  };
  const auto c = load_app_config(f.root / "config.json", env);
  EXPECT_EQ(c.port, 9001);
  EXPECT_EQ(c.data_root, fs::path("/srv/data"));
  EXPECT_THROW(load_app_config(f.root / "config.json", [](const char*) { return std::optional<std::string>("x"); }),
               ds::Error);
}

TEST(AppConfig, ValidationRejectsBadValues) {
  AppConfig c = fixture().config;
  c.port = 0;
  EXPECT_THROW(c.validate(), ds::Error);
  c = fixture().config;
  c.window_lengths = {500};
  EXPECT_THROW(c.validate(), ds::Error);
  c = fixture().config;
  c.manifests.push_back("nope.json");
  EXPECT_THROW(c.validate(), ds::Error);
  EXPECT_THROW(parse_app_config(Json{{"bundles", {{"toaster", "x"}}}}), ds::Error);
}

TEST(Api, DatasetsAndHouses) {
  auto api = make_api();
  const auto d = api.datasets();
  ASSERT_EQ(d.status, 200);
  ASSERT_EQ(d.body["datasets"].size(), 1u);
  EXPECT_EQ(d.body["datasets"][0]["id"], "synth");
  EXPECT_EQ(d.body["window_lengths"], Json({360, 720, 1440}));
  EXPECT_EQ(d.body["appliances"][0]["appliance"], "kettle");
  const auto h = api.houses("synth");
  ASSERT_EQ(h.status, 200);
  ASSERT_EQ(h.body["houses"].size(), 3u);
  EXPECT_EQ(h.body["houses"][0]["total_length"], kDays * 1440);
  EXPECT_EQ(h.body["houses"][2]["role"], "test");
  expect_error(api.houses("nope"), 404);
}

TEST(Api, FirstPageOfTenDaySeries) {
  auto api = make_api();
  const auto r = api.window(window_params(0));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["aggregate"].size(), kLength);
  EXPECT_EQ(r.body["timestamps"].size(), kLength);
  EXPECT_EQ(r.body["total_length"], kDays * 1440);
  EXPECT_TRUE(r.body["has_next"].get<bool>());
  EXPECT_FALSE(r.body["has_prev"].get<bool>());
  EXPECT_EQ(r.body["appliances"]["kettle"].size(), kLength);
}

TEST(Api, LastPageAndOutOfRange) {
  auto api = make_api();
  const std::size_t last = kDays * 1440 - kLength;
  const auto r = api.window(window_params(last));
  ASSERT_EQ(r.status, 200);
  EXPECT_FALSE(r.body["has_next"].get<bool>());
  EXPECT_TRUE(r.body["has_prev"].get<bool>());
  expect_error(api.window(window_params(last + 1)), 416);
  expect_error(api.window(window_params(kDays * 1440 + 5000)), 416);
  expect_error(api.window(std::map<std::string, std::string>{{"dataset", "synth"}, {"house", "house_01"}, {"offset", "-360"}, {"length", "360"}}), 416);
  expect_error(api.window(window_params(0, kLength, "house_99")), 404);
  expect_error(api.window(window_params(0, 500)), 400);
  expect_error(api.window(std::map<std::string, std::string>{{"dataset", "synth"}, {"house", "house_01"}, {"offset", "abc"}, {"length", "360"}}), 400);
  expect_error(api.window(std::map<std::string, std::string>{{"house", "house_01"}, {"length", "360"}}), 400);
}

TEST(Api, AggregateEqualsStoredSlice) {
  auto api = make_api();
  const auto stored = ds::data::load_csv(fixture().root / "data" / "house_02.csv");
  for (std::size_t offset : {0u, 720u, 5040u}) {
    const auto r = api.window(window_params(offset, 720, "house_02"));
    ASSERT_EQ(r.status, 200);
    for (std::size_t t = 0; t < 720; ++t) {
      ASSERT_EQ(r.body["aggregate"][t].get<double>(), stored.aggregate[offset + t]);
      ASSERT_EQ(r.body["timestamps"][t].get<std::int64_t>(), stored.timestamps[offset + t]);
      ASSERT_EQ(r.body["appliances"]["kettle"][t].get<double>(), stored.appliances.at(ds::data::Appliance::kKettle)[offset + t]);
    }
  }
}

TEST(Api, NavigationAlgebra) {
  auto api = make_api();
  for (std::size_t length : {360u, 720u, 1440u}) {
    for (std::size_t offset = 0; offset + 2 * length <= kDays * 1440; offset += 3 * length) {
      const auto here = api.window(window_params(offset, length));
      ASSERT_TRUE(here.body["has_next"].get<bool>());
      const auto next = api.window(window_params(offset + length, length));
      ASSERT_EQ(next.status, 200);
      EXPECT_EQ(next.body["offset"], offset + length);
      EXPECT_EQ(next.body["timestamps"][0], here.body["timestamps"][0].get<std::int64_t>() + 60 * static_cast<std::int64_t>(length));
      ASSERT_TRUE(next.body["has_prev"].get<bool>());
      const auto back = api.window(window_params(next.body["offset"].get<std::size_t>() - length, length));
      EXPECT_EQ(back.body, here.body);
    }
  }
}

TEST(Api, PredictContract) {
  auto api = make_api();
  const auto empty = api.predict(predict_body(0, {}));
  ASSERT_EQ(empty.status, 200);
  EXPECT_TRUE(empty.body["predictions"].is_object());
  EXPECT_TRUE(empty.body["predictions"].empty());

  const auto a = api.predict(predict_body(720, {"kettle"}));
  ASSERT_EQ(a.status, 200) << a.body.dump();
  const auto& k = a.body["predictions"]["kettle"];
  EXPECT_EQ(k["y_hat"].size(), kLength);
  EXPECT_EQ(k["cam_avg"].size(), kLength);
  EXPECT_EQ(k["per_model_probs"].size(), 2u);
  const double p = k["prob_ensemble"];
  EXPECT_EQ(p, std::round(p * 1e6) / 1e6);
  EXPECT_EQ(k["detected"].get<bool>(), p > 0.5);
  EXPECT_EQ(api.predict(predict_body(720, {"kettle"})).body, a.body);

  expect_error(api.predict(predict_body(0, {"toaster"})), 404);
  expect_error(api.predict(predict_body(0, {"microwave"})), 404);
  expect_error(api.predict(predict_body(0, {"kettle"}, 720)), 409);
  expect_error(api.predict(predict_body(kDays * 1440, {"kettle"})), 416);
  expect_error(api.predict(Json::array()), 400);
}

TEST(Api, PredictFindsInjectedKettleEvents) {
  auto api = make_api();
  const auto& house = fixture().houses[2];
  const auto spec = ds::data::default_spec(ds::data::Appliance::kKettle);
  std::size_t positives = 0, detected = 0;
  for (const auto& w : ds::data::labeled_windows(house, spec, kLength, kLength)) {
    if (*w.weak_label != 1) continue;
    ++positives;
    const auto r = api.predict(predict_body(w.start_index, {"kettle"}));
    ASSERT_EQ(r.status, 200);
    const auto& k = r.body["predictions"]["kettle"];
    if (!k["detected"].get<bool>()) continue;
    ++detected;
    const auto y = k["y_hat"].get<std::vector<int>>();
    EXPECT_GT(std::count(y.begin(), y.end(), 1), 0);
  }
  ASSERT_GT(positives, 5u);
  EXPECT_GE(detected * 10, positives * 8);
}

TEST(Api, BenchmarkRowsComeFromTheStore) {
  const auto& f = fixture();
  auto api = make_api();
  const auto store_path = ds::eval::BenchmarkStore::path_for(f.root / "benchmarks", "synth");
  fs::remove(store_path);
  const auto empty = api.benchmark({{"dataset", "synth"}});
  ASSERT_EQ(empty.status, 200);
  EXPECT_TRUE(empty.body["rows"].empty());

  ds::eval::BenchmarkStore store(store_path);
  const auto ens = ds::camal::load_bundle(f.root / "models" / "kettle");
  const std::vector<ds::data::PowerSeries> test = {f.houses[2]};
  store.append(ds::eval::run_benchmark(ens, test, "2026-03-01T00:00:00Z"));
  store.append(ds::eval::run_benchmark(ens, test, "2026-03-02T00:00:00Z"));

  const auto all = api.benchmark({{"dataset", "synth"}});
  ASSERT_EQ(all.body["rows"].size(), 4u);
  std::vector<Json> lines;
  std::ifstream in(store_path);
  for (std::string line; std::getline(in, line);) lines.push_back(Json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(all.body["rows"][i], lines[3 - i]);
  EXPECT_EQ(all.body["rows"][0]["labels_used"], ens.fingerprint.labels_used);

  const auto loc = api.benchmark({{"dataset", "synth"}, {"task", "localization"}});
  ASSERT_EQ(loc.body["rows"].size(), 2u);
  for (const auto& r : loc.body["rows"]) EXPECT_EQ(r["task"], "localization");
  EXPECT_EQ(api.benchmark({{"dataset", "synth"}, {"metric", "mean_iou"}}).body["rows"].size(), 2u);
  expect_error(api.benchmark({{"dataset", "nope"}}), 404);
  expect_error(api.benchmark({{"dataset", "synth"}, {"task", "both"}}), 400);
  fs::remove(store_path);
}

TEST(Api, RequestsDoNotMutateStateAndReloadSwaps) {
  auto api = make_api();
  const auto before = api.snapshot();
  api.window(window_params(0));
  api.predict(predict_body(0, {"kettle"}));
  api.benchmark({{"dataset", "synth"}});
  EXPECT_EQ(api.snapshot(), before);
  const auto r = api.reload();
  ASSERT_EQ(r.status, 200);
  EXPECT_NE(api.snapshot(), before);
  EXPECT_EQ(api.window(window_params(360)).body, Api(before).window(window_params(360)).body);
}

TEST(Server, HttpRoundTrip) {
  auto api = make_api();
  httplib::Server server;
  install_routes(server, api);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto datasets = client.Get("/api/datasets");
  ASSERT_TRUE(datasets);
  EXPECT_EQ(datasets->status, 200);
  EXPECT_EQ(datasets->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(Json::parse(datasets->body), api.datasets().body);

  auto houses = client.Get("/api/datasets/synth/houses");
  ASSERT_TRUE(houses);
  EXPECT_EQ(Json::parse(houses->body), api.houses("synth").body);

  auto window = client.Get("/api/window?dataset=synth&house=house_01&offset=360&length=360");
  ASSERT_TRUE(window);
  EXPECT_EQ(window->status, 200);
  EXPECT_EQ(Json::parse(window->body), api.window(window_params(360)).body);

  auto out_of_range = client.Get("/api/window?dataset=synth&house=house_01&offset=999999&length=360");
  ASSERT_TRUE(out_of_range);
  EXPECT_EQ(out_of_range->status, 416);
  EXPECT_EQ(Json::parse(out_of_range->body)["error"]["code"], "out_of_range");

  auto predict = client.Post("/api/predict", predict_body(0, {"kettle"}).dump(), "application/json");
  ASSERT_TRUE(predict);
  EXPECT_EQ(predict->status, 200);
  EXPECT_EQ(Json::parse(predict->body), api.predict(predict_body(0, {"kettle"})).body);

  auto bad_json = client.Post("/api/predict", "{not json", "application/json");
  ASSERT_TRUE(bad_json);
  EXPECT_EQ(bad_json->status, 400);

  auto bench = client.Get("/api/benchmark?dataset=synth&task=detection");
  ASSERT_TRUE(bench);
  EXPECT_EQ(bench->status, 200);

  auto missing = client.Get("/api/nothing");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(Json::parse(missing->body)["error"]["code"], "not_found");

  server.stop();
  thread.join();
}
