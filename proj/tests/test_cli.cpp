// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "svt/cli.hpp"

using svt::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "svt");
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = svt::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

// A tiny pretraining setup: gen-data output plus a config pointing at it.
fs::path make_run(const TempDir& dir, int per_class = 1, const std::string& extra = "") {
  REQUIRE(cli({"gen-data", "--out", (dir / "data").string(), "--per-class", std::to_string(per_class), "--frames", "16"}).code == 0);
  const fs::path cfg = dir / "run.cfg";
  write_file(cfg, "data = data\n" + svt::testing::desk_config_text() +
                      "steps_per_epoch = 2\n"
                      "checkpoint_every = 5\n"
                      "probe_epochs = 20\n" +
                      extra);
  return cfg;
}

}  // namespace

TEST_CASE("gen-data writes counted, deterministic datasets") {
  TempDir dir("cli");
  const auto a = dir / "a";
  const auto b = dir / "b";
  REQUIRE(cli({"gen-data", "--out", a.string(), "--per-class", "10", "--classes", "4"}).code == 0);
  REQUIRE(cli({"gen-data", "--out", b.string(), "--per-class", "10", "--classes", "4"}).code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() == ".svtvid") {
      ++files;
      CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
  }
  CHECK(files == 40);
  const auto rows = lines_of(a / "labels.tsv");
  CHECK(rows.size() == 40u);
  CHECK(slurp(a / "labels.tsv") == slurp(b / "labels.tsv"));
  CHECK(slurp(a / "config_digest.txt") == slurp(b / "config_digest.txt"));
  const auto data = svt::load_dataset(a);
  CHECK(data.n_classes() == 4);
  CHECK(data.videos[0].frames == 32u);
  CHECK(data.videos[0].height == 32u);
}

TEST_CASE("gen-data rejects clips shorter than a global view") {
  TempDir dir("cli");
  const auto r = cli({"gen-data", "--out", (dir / "x").string(), "--frames", "8"});
  CHECK(r.code == svt::kExitUsage);
  CHECK(r.err.find("16-frame global view") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(cli({}).code == svt::kExitUsage);
  CHECK(cli({"bogus"}).code == svt::kExitUsage);
  CHECK(cli({"gen-data"}).code == svt::kExitUsage);
  CHECK(cli({"gen-data", "--help"}).code == svt::kExitOk);
  TempDir dir("cli");
  const auto r = cli({"probe", "--ckpt", (dir / "none.ckpt").string(), "--data", dir.path().string(), "--out",
                      (dir / "o").string()});
  CHECK(r.code == svt::kExitRuntime);
  CHECK(r.err.find("cannot open") != std::string::npos);
}

TEST_CASE("pretrain reports unknown config keys by name") {
  TempDir dir("cli");
  write_file(dir / "bad.cfg", "data = .\nlearning_rate = 1\n");
  const auto r = cli({"pretrain", "--config", (dir / "bad.cfg").string(), "--out", (dir / "o").string()});
  CHECK(r.code == svt::kExitUsage);
  CHECK(r.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("pretrain smoke run and bitwise resume") {
  TempDir dir("cli");
  const auto cfg = make_run(dir);
  const auto full = dir / "full";
  const auto t0 = std::chrono::steady_clock::now();
  auto r = cli({"pretrain", "--config", cfg.string(), "--out", full.string(), "--max-steps", "10"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(60));
  const auto metrics = lines_of(full / "metrics.jsonl");
  REQUIRE(metrics.size() == 10u);
  CHECK(fs::exists(full / "step_5.ckpt"));
  CHECK(fs::exists(full / "step_10.ckpt"));
  CHECK(fs::exists(full / "checkpoint.ckpt"));
  CHECK(fs::exists(full / "checkpoint.ckpt.f32"));
  CHECK(fs::exists(full / "config.txt"));
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto rec = svt::MetricsRecord::from_json(metrics[i]);
    CHECK(rec.step == static_cast<long>(i + 1));
    CHECK(std::isfinite(rec.total));
  }

  {
    const auto part = dir / "part";
    REQUIRE(cli({"pretrain", "--config", cfg.string(), "--out", part.string(), "--max-steps", "5"}).code == 0);
    r = cli({"pretrain", "--config", cfg.string(), "--out", part.string(), "--max-steps", "10", "--resume",
             (part / "step_5.ckpt").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto resumed = lines_of(part / "metrics.jsonl");
    REQUIRE(resumed.size() == metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      CHECK(svt::MetricsRecord::from_json(resumed[i]).same_trajectory(svt::MetricsRecord::from_json(metrics[i])));
    }
    const auto changed = cli({"pretrain", "--config", cfg.string(), "--out", (dir / "c").string(), "--set",
                              "embed_dim=64", "--resume", (part / "step_5.ckpt").string()});
    CHECK(changed.code == svt::kExitUsage);
    CHECK(changed.err.find("digest mismatch") != std::string::npos);
  }
}

TEST_CASE("probe on a split dataset, its determinism and the random baseline") {
  TempDir dir("cli");
  const auto cfg = make_run(dir, 5);
  REQUIRE(cli({"pretrain", "--config", cfg.string(), "--out", (dir / "run").string(), "--max-steps", "2"}).code == 0);
  const auto ckpt = (dir / "run" / "checkpoint.ckpt").string();
  const auto data = (dir / "data").string();
  auto r = cli({"probe", "--ckpt", ckpt, "--data", data, "--out", (dir / "p1").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  REQUIRE(cli({"probe", "--ckpt", ckpt, "--data", data, "--out", (dir / "p2").string()}).code == 0);
  CHECK(slurp(dir / "p1" / "probe.json") == slurp(dir / "p2" / "probe.json"));
  CHECK(slurp(dir / "p1" / "predictions.jsonl") == slurp(dir / "p2" / "predictions.jsonl"));
  const auto summary = nlohmann::json::parse(slurp(dir / "p1" / "probe.json"));
  CHECK(summary["n_train"] == 16);
  CHECK(summary["n_test"] == 4);
  CHECK(summary["weights"] == "teacher");
  const auto preds = lines_of(dir / "p1" / "predictions.jsonl");
  REQUIRE(preds.size() == 4u);
  for (const auto& line : preds) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["scores"].size() == 4u);
    CHECK(j.contains("video"));
    CHECK(j.contains("label"));
    CHECK(j.contains("prediction"));
  }
  REQUIRE(cli({"probe", "--ckpt", ckpt, "--data", data, "--out", (dir / "rb").string(), "--random-baseline"}).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "rb" / "probe.json"))["weights"] == "random-init");
  const auto bad = cli({"probe", "--ckpt", ckpt, "--data", data, "--out", (dir / "x").string(), "--weights", "both"});
  CHECK(bad.code == svt::kExitUsage);
}

TEST_CASE("attention map export") {
  TempDir dir("cli");
  const auto cfg = make_run(dir);
  REQUIRE(cli({"pretrain", "--config", cfg.string(), "--out", (dir / "run").string(), "--max-steps", "1"}).code == 0);
  const auto video = dir / "data" / "move-right_0000.svtvid";
  REQUIRE(fs::exists(video));
  const auto out = dir / "attn";
  const auto r = cli({"attn-map", "--ckpt", (dir / "run" / "checkpoint.ckpt").string(), "--video", video.string(),
                      "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  int csv = 0;
  int pgm = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    csv += e.path().extension() == ".csv" ? 1 : 0;
    pgm += e.path().extension() == ".pgm" ? 1 : 0;
  }
  CHECK(csv == 4);
  CHECK(pgm == 4);
  for (int t = 0; t < 4; ++t) {
    const auto rows = lines_of(out / ("attn_frame" + std::to_string(t) + ".csv"));
    REQUIRE(rows.size() == 1u);
    std::stringstream ss(rows[0]);
    std::string cell;
    double sum = 0.0;
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      sum += std::stod(cell);
      ++n;
    }
    CHECK(n == 16);
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    const std::string img = slurp(out / ("attn_frame" + std::to_string(t) + ".pgm"));
    std::istringstream is(img);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    CHECK(magic == "P5");
    CHECK(w == 32);
    CHECK(h == 32);
    CHECK(maxval == 255);
    CHECK(img.size() == img.find("255\n") + 4 + 32u * 32u);
  }
  CHECK(lines_of(out / "frames.txt") == std::vector<std::string>{"0,5,10,15"});
}
