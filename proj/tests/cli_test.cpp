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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "devicescope/service/cli.hpp"

namespace ds = devicescope;
namespace fs = std::filesystem;
using devicescope::service::run_cli;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("devicescope_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::size_t count_with_extension(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST(Cli, SynthWritesHousesAndManifest) {
  const auto dir = scratch("synth");
  const auto r = cli({"synth", "--houses", "6", "--days", "30", "--seed", "7", "--out", (dir / "data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_with_extension(dir / "data", ".csv"), 6u);
  const auto m = ds::data::load_manifest(dir / "data" / "manifest.json");
  EXPECT_EQ(m.houses.size(), 6u);
  EXPECT_EQ(m.house_ids(ds::data::HouseRole::kTest).size(), 1u);
  const auto s = ds::data::load_csv(dir / "data" / "house_01.csv");
  EXPECT_EQ(s.size(), 30u * 1440u);
  EXPECT_TRUE(s.appliances.contains(ds::data::Appliance::kKettle));
  EXPECT_TRUE(s.appliances.contains(ds::data::Appliance::kDishwasher));

  // Same seed, same bytes.
  const auto again = cli({"synth", "--houses", "6", "--days", "30", "--seed", "7", "--out", (dir / "again").string()});
  ASSERT_EQ(again.code, 0);
  std::ifstream a(dir / "data" / "house_04.csv"), b(dir / "again" / "house_04.csv");
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b), {}));
  fs::remove_all(dir);
}

TEST(Cli, TrainEvalPredictLifecycle) {
  const auto dir = scratch("lifecycle");
  const auto data = (dir / "data").string(), bundle = (dir / "models" / "kettle").string();
  ASSERT_EQ(cli({"synth", "--houses", "6", "--days", "30", "--seed", "7", "--out", data}).code, 0);
  const auto manifest = data + "/manifest.json";

  const auto train = cli({"train", "--appliance", "kettle", "--manifest", manifest, "--out", bundle, "--window", "360",
                          "--filters", "4,4", "--epochs", "1", "--quiet"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_EQ(count_with_extension(bundle, ".ckpt"), 4u);
  const auto ens = ds::camal::load_bundle(bundle);
  EXPECT_EQ(ens.models.size(), 4u);
  EXPECT_EQ(ens.window_length, 360u);
  EXPECT_EQ(ens.fingerprint.dataset_id, "synth");
  EXPECT_EQ(ens.fingerprint.train_houses.size(), 5u);
  EXPECT_EQ(ens.fingerprint.labels_used, 5u * 30u * 4u);

  const auto eval = cli({"eval", "--manifest", manifest, "--bundle", bundle, "--created-at", "2026-01-01T00:00:00Z"});
  ASSERT_EQ(eval.code, 0) << eval.err;
  ds::eval::BenchmarkStore store(ds::eval::BenchmarkStore::path_for(dir / "data" / "benchmarks", "synth"));
  const auto rows = store.read_all();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].labels_used, 600u);
  EXPECT_EQ(rows[0].windows_evaluated, 120u);

  const auto predict = cli({"predict", "--manifest", manifest, "--bundle", bundle, "--house", "house_06", "--offset", "720"});
  ASSERT_EQ(predict.code, 0) << predict.err;
  const auto j = nlohmann::json::parse(predict.out);
  EXPECT_EQ(j["y_hat"].size(), 360u);
  EXPECT_EQ(j["appliance"], "kettle");

  const auto bad_house = cli({"predict", "--manifest", manifest, "--bundle", bundle, "--house", "house_99"});
  EXPECT_NE(bad_house.code, 0);
  EXPECT_NE(bad_house.err.find("house_99"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, IngestResamplesToOneMinute) {
  const auto dir = scratch("ingest");
  fs::create_directories(dir);
  {
    std::ofstream raw(dir / "flat_a.csv");
    raw << "timestamp,aggregate,kettle\n";
    for (int t = 0; t < 600; t += 6) raw << t << ',' << 100 + t % 12 << ",0\n";
  }
  const auto r = cli({"ingest", (dir / "flat_a.csv").string(), "--out", (dir / "out").string(), "--dataset", "mine",
                      "--test-houses", "flat_a"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = ds::data::load_manifest(dir / "out" / "manifest.json");
  ASSERT_EQ(m.houses.size(), 1u);
  EXPECT_EQ(m.houses[0].role, ds::data::HouseRole::kTest);
  const auto s = ds::data::load_csv(dir / "out" / "flat_a.csv");
  EXPECT_EQ(s.sample_period, 60);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_DOUBLE_EQ(s.aggregate[0], 103.0);
  fs::remove_all(dir);
}

TEST(Cli, UsageErrors) {
  const auto unknown = cli({"frobnicate"});
  EXPECT_NE(unknown.code, 0);
  EXPECT_NE(unknown.err.find("unknown subcommand"), std::string::npos);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"synth"}).code, 0);  // --out is required
  EXPECT_NE(cli({"synth", "--out", "x", "--houses", "zero"}).code, 0);
  EXPECT_NE(cli({"train", "--appliance", "kettle"}).code, 0);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = DEVICESCOPE_CLI_PATH;
  EXPECT_NE(std::system((bin + " frobnicate > /dev/null 2>&1").c_str()), 0);
  EXPECT_EQ(std::system((bin + " --help > /dev/null 2>&1").c_str()), 0);
}
