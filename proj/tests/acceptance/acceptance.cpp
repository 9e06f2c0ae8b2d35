// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "support.hpp"
#include "svt/cli.hpp"
#include "svt/config.hpp"
#include "svt/eval.hpp"

namespace fs = std::filesystem;
using svt::testing::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path config_dir() { return fs::path(SVT_SOURCE_DIR) / "configs"; }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "svt");
  std::ostringstream out;
  std::ostringstream err;
  const int code = svt::run_cli(args, out, err);
  if (code != 0) std::cerr << "  svt " << args[1] << " failed: " << err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::string> metric_lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

svt::View random_view(int t, int size, svt::Rng& rng) {
  svt::View v;
  v.frames = svt::Clip(t, size, size);
  for (auto& x : v.frames.data) x = static_cast<float>(rng.uniform());
  return v;
}

// 1 -------------------------------------------------------------------------
Outcome gradient_oracle() {
  svt::BackboneConfig c;
  c.embed_dim = 8;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.patch_size = 8;
  c.max_image_size = 32;
  c.max_frames = 2;
  c.proj_dim = 16;
  auto student = svt::ModelParams<double>::init(c, 1);
  svt::Rng rng(2);
  for (auto& v : student.values) v += 0.2 * rng.normal();
  auto state = svt::DistillState<double>::from_student(student);
  for (auto& v : state.teacher.values) v += 0.05 * rng.normal();
  for (auto& v : state.center) v = 0.1 * rng.normal();

  svt::ViewSet views;
  views.globals[0] = random_view(2, 32, rng);
  views.globals[1] = random_view(2, 32, rng);
  for (int i = 0; i < 8; ++i) views.locals.push_back(random_view(2, 16, rng));

  std::vector<double> grads(student.values.size(), 0.0);
  svt::route_and_match<double>(views, student, state, grads);
  auto loss = [&] { return svt::route_and_match<double>(views, student, state).loss.total; };

  double worst = 0.0;
  std::string worst_name;
  for (const auto& t : student.layout->tensors()) {
    for (std::size_t i = t.offset; i < t.offset + t.size; ++i) {
      const double fd = svt::testing::central_difference(loss, student.values[i], 1e-5);
      const double e = svt::testing::relative_error(grads[i], fd, 1e-4);
      if (e > worst) {
        worst = e;
        worst_name = t.name;
      }
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " (" + worst_name + ") over " +
                            std::to_string(student.layout->tensors().size()) + " tensors, " +
                            std::to_string(student.values.size()) + " parameters"};
}

// 2 -------------------------------------------------------------------------
Outcome loss_identities() {
  svt::Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = static_cast<int>(rng.uniform_int(2, 64));
    std::vector<double> p(static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto& x : p) s += (x = -std::log(1.0 - rng.uniform()));
    for (auto& x : p) x /= s;
    long double h = 0.0L;
    for (double x : p) h -= static_cast<long double>(x) * std::log(static_cast<long double>(x));
    worst = std::max(worst, std::abs(svt::loss_gg<double>(p, p) - static_cast<double>(h)));
  }

  svt::TrainConfig cfg = svt::parse_config("global_size = 32\nlocal_size = 16\npatch_size = 8\n");
  const auto video = svt::testing::synthetic_dataset(1, 32, 32, 4).videos[0];
  const auto params = svt::ModelParams<float>::init(cfg.backbone, 4);
  auto state = svt::DistillState<float>::from_student(params);
  bool exact = true;
  bool nonneg = true;
  std::size_t pairs = 0;
  for (int trial = 0; trial < 5; ++trial) {
    svt::Rng vr(static_cast<std::uint64_t>(10 + trial));
    const auto views = svt::sample_view_set(video, vr, cfg.views);
    const auto out = svt::route_and_match<float>(views, params, state);
    exact = exact && out.loss.total == out.loss.l_gg + out.loss.l_lg;
    for (const auto& pl : out.loss.per_pair) nonneg = nonneg && pl.value >= 0.0;
    pairs = out.loss.per_pair.size();
  }
  const bool pass = worst <= 1e-10 && exact && nonneg && pairs == 18;
  return {pass, "max |loss(p,p) - H(p)| " + fmt("%.2e", worst) + ", total exact " + (exact ? "yes" : "no") +
                    ", pairs " + std::to_string(pairs) + ", all non-negative " + (nonneg ? "yes" : "no")};
}

// 3 -------------------------------------------------------------------------
Outcome softmax_properties() {
  svt::Rng rng(5);
  double worst_sum = 0.0;
  double worst_shift = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = static_cast<int>(rng.uniform_int(2, 256));
    const double temp = rng.uniform(0.02, 2.0);
    std::vector<double> f(static_cast<std::size_t>(k));
    std::vector<double> center(static_cast<std::size_t>(k));
    for (auto& x : f) x = 3.0 * rng.normal();
    for (auto& x : center) x = rng.normal();
    const auto p = svt::normalize<double>(f, temp, center);
    std::vector<float> ff(f.begin(), f.end());
    const auto pf = svt::normalize<float>(ff, temp);
    double s = 0.0;
    double sf = 0.0;
    for (double x : p) s += x;
    for (float x : pf) sf += x;
    worst_sum = std::max({worst_sum, std::abs(s - 1.0), std::abs(sf - 1.0)});
    const double shift = 10.0 * rng.normal();
    auto g = f;
    for (auto& x : g) x += shift;
    const auto q = svt::normalize<double>(g, temp, center);
    for (std::size_t i = 0; i < p.size(); ++i) worst_shift = std::max(worst_shift, std::abs(p[i] - q[i]));
  }
  return {worst_sum <= 1e-6 && worst_shift <= 1e-10,
          "max |sum - 1| " + fmt("%.2e", worst_sum) + ", max shift deviation " + fmt("%.2e", worst_shift)};
}

// 4 -------------------------------------------------------------------------
Outcome ema_contract() {
  svt::TrainConfig cfg = svt::parse_config("global_size = 32\nlocal_size = 16\npatch_size = 8\n");
  const auto data = svt::testing::synthetic_dataset(1, 16, 32, 6, 1.0);
  auto student = svt::ModelParams<float>::init(cfg.backbone, 6);
  auto state = svt::DistillState<float>::from_student(student);
  svt::Rng rng(7);
  for (auto& v : state.teacher.values) v += static_cast<float>(0.01 * rng.normal());
  svt::AdamState adam;
  svt::StepSettings s;
  s.lr = 1e-3;
  s.weight_decay = 0.04;
  s.ema_momentum = 0.996;
  s.views = cfg.views;
  std::vector<const svt::RawVideo*> batch{&data.videos[0], &data.videos[1]};

  const auto teacher_old = state.teacher.values;
  const auto student_old = student.values;
  svt::train_step(student, state, adam, batch, s);
  double worst = 0.0;
  for (std::size_t i = 0; i < teacher_old.size(); ++i) {
    const double want = s.ema_momentum * static_cast<double>(teacher_old[i]) +
                        (1.0 - s.ema_momentum) * static_cast<double>(student.values[i]);
    worst = std::max(worst, std::abs(static_cast<double>(state.teacher.values[i]) -
                                     static_cast<double>(static_cast<float>(want))));
  }
  const bool moved = student.values != student_old;

  // Double precision parameters against a long double reference.
  auto sd = svt::ModelParams<double>::init(cfg.backbone, 8);
  auto td = sd;
  for (auto& v : td.values) v += 0.01 * rng.normal();
  const auto td_old = td.values;
  svt::ema_update(td, sd, 0.996);
  double worst_double = 0.0;
  for (std::size_t i = 0; i < td_old.size(); ++i) {
    const long double want = 0.996L * td_old[i] + (1.0L - 0.996L) * sd.values[i];
    worst_double = std::max(worst_double, static_cast<double>(std::abs(td.values[i] - want)));
  }

  // With momentum 1 the gradient update is the only thing that could touch the teacher.
  const auto frozen = state.teacher.values;
  s.ema_momentum = 1.0;
  s.step = 1;
  svt::train_step(student, state, adam, batch, s);
  const bool untouched = std::memcmp(frozen.data(), state.teacher.values.data(), frozen.size() * sizeof(float)) == 0;
  return {worst <= 1e-12 && worst_double <= 1e-12 && untouched && moved,
          "max EMA deviation " + fmt("%.2e", worst) + " (float), " + fmt("%.2e", worst_double) +
              " (double); teacher bit-unchanged by the update: " + (untouched ? "yes" : "no")};
}

// 5 -------------------------------------------------------------------------
Outcome positional_interpolation() {
  svt::Rng rng(9);
  std::vector<double> temporal(16 * 8);
  std::vector<double> spatial(14 * 14 * 8);
  for (auto& x : temporal) x = rng.normal();
  for (auto& x : spatial) x = rng.normal();
  const bool identity = svt::interpolate_positional<double>(temporal, 16, 8, 16) == temporal &&
                        svt::interpolate_positional<double>(spatial, 14, 14, 8, 14, 14) == spatial;

  double worst = 0.0;
  const std::vector<double> ab{0.7, -1.3};
  const auto line = svt::interpolate_positional<double>(ab, 2, 1, 3);
  const std::vector<double> line_want{0.7, (0.7 - 1.3) / 2.0, -1.3};
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(line[i] - line_want[i]));
  const double a = 1.25, b = -0.5, c = 2.0, d = 0.125;
  const auto grid = svt::interpolate_positional<double>(std::vector<double>{a, b, c, d}, 2, 2, 1, 3, 3);
  const std::vector<double> grid_want{a,           (a + b) / 2,         b, (a + c) / 2, (a + b + c + d) / 4,
                                      (b + d) / 2, c,                   (c + d) / 2, d};
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(grid[i] - grid_want[i]));

  const auto params = svt::ModelParams<float>::init(svt::parse_config("").backbone, 9);
  const auto r = svt::forward(params, svt::testing::random_clip(64, 96, 96, 10));
  bool finite = r.projected.size() == static_cast<std::size_t>(params.config.proj_dim);
  for (float v : r.projected) finite = finite && std::isfinite(v);
  return {identity && worst <= 1e-12 && finite,
          std::string("identity bit-exact: ") + (identity ? "yes" : "no") + ", closed-form deviation " +
              fmt("%.2e", worst) + ", T=64 forward: " + (finite ? "ok" : "failed")};
}

// 6 -------------------------------------------------------------------------
Outcome shape_contract() {
  const auto params = svt::ModelParams<float>::init(svt::parse_config("").backbone, 11);
  const std::vector<std::array<int, 2>> shapes{{2, 96},  {4, 96},  {8, 96},  {16, 96},
                                               {8, 224}, {16, 224}, {8, 224}, {64, 96}};
  int ok = 0;
  for (const auto& [t, s] : shapes) {
    const auto r = svt::forward(params, svt::testing::random_clip(t, s, s, static_cast<std::uint64_t>(t * s)));
    bool good = r.projected.size() == static_cast<std::size_t>(params.config.proj_dim);
    for (float v : r.projected) good = good && std::isfinite(v);
    ok += good ? 1 : 0;
  }
  return {ok == static_cast<int>(shapes.size()),
          std::to_string(ok) + "/" + std::to_string(shapes.size()) + " shapes give a " +
              std::to_string(params.config.proj_dim) + "-vector"};
}

// 7 -------------------------------------------------------------------------
Outcome view_statistics() {
  svt::TrainConfig cfg = svt::parse_config("global_size = 32\nlocal_size = 16\npatch_size = 8\n");
  const auto video = svt::testing::random_video(64, 96, 96, 12);
  svt::Rng rng(13);
  double area = 0.0;
  int n = 0;
  int violations = 0;
  const std::set<int> choices(cfg.views.local_frame_choices.begin(), cfg.views.local_frame_choices.end());
  while (n < 10000) {
    const auto set = svt::sample_view_set(video, rng, cfg.views);
    for (const auto& v : set.locals) {
      area += svt::crop_area_fraction(v, video);
      ++n;
      const auto& idx = v.source_indices;
      const int count = static_cast<int>(idx.size());
      bool bad = count != v.frame_count() || choices.count(count) == 0;
      bad = bad || !std::is_sorted(idx.begin(), idx.end()) || idx.front() < 0 ||
            idx.back() >= static_cast<int>(video.frames);
      bad = bad || idx.back() - idx.front() + 1 > svt::local_window_length(static_cast<int>(video.frames), count);
      const auto& w = v.window;
      bad = bad || w.top < 0 || w.left < 0 || w.top + w.height > static_cast<int>(video.height) ||
            w.left + w.width > static_cast<int>(video.width);
      violations += bad ? 1 : 0;
    }
  }
  const double mean = area / n;
  return {mean >= 0.38 && mean <= 0.42 && violations == 0,
          std::to_string(n) + " local views, mean area " + fmt("%.4f", mean) + ", " + std::to_string(violations) +
              " violations"};
}

// 8 -------------------------------------------------------------------------
Outcome overfit() {
  TempDir dir("acc_overfit");
  if (cli({"gen-data", "--out", (dir / "data").string(), "--classes", "2", "--per-class", "1", "--frames", "16"}) != 0) {
    return {false, "gen-data failed"};
  }
  auto cfg = svt::load_config(config_dir() / "overfit.cfg");
  svt::Trainer t(cfg, svt::load_dataset(dir / "data"));
  const auto first = t.step();
  svt::MetricsRecord last = first;
  while (!t.done()) last = t.step();
  return {last.step == 50 && last.total < first.total,
          "loss at step 1 " + fmt("%.4f", first.total) + ", at step " + std::to_string(last.step) + " " +
              fmt("%.4f", last.total)};
}

// 9 -------------------------------------------------------------------------
double probe_accuracy(const fs::path& summary) {
  return nlohmann::json::parse(slurp(summary))["accuracy"].get<double>();
}

Outcome learning_check() {
  TempDir dir("acc_learn");
  const auto cfg = (config_dir() / "learning_check.cfg").string();
  double trained = 0.0;
  double random = 0.0;
  std::string per_seed;
  for (int seed = 0; seed < 3; ++seed) {
    const std::string s = std::to_string(seed);
    const auto train = dir / ("train" + s);
    const auto test = dir / ("test" + s);
    const auto run = dir / ("run" + s);
    if (cli({"gen-data", "--out", train.string(), "--per-class", "50", "--frames", "32", "--size", "32", "--seed",
             std::to_string(100 + seed)}) != 0 ||
        cli({"gen-data", "--out", test.string(), "--per-class", "20", "--frames", "32", "--size", "32", "--seed",
             std::to_string(200 + seed)}) != 0 ||
        cli({"pretrain", "--config", cfg, "--out", run.string(), "--set", "data=" + train.string(), "--set",
             "seed=" + s}) != 0) {
      return {false, "pipeline failed for seed " + s};
    }
    const auto ckpt = (run / "checkpoint.ckpt").string();
    if (cli({"probe", "--ckpt", ckpt, "--data", train.string(), "--test", test.string(), "--out",
             (dir / ("probe" + s)).string()}) != 0 ||
        cli({"probe", "--ckpt", ckpt, "--data", train.string(), "--test", test.string(), "--out",
             (dir / ("random" + s)).string(), "--random-baseline"}) != 0) {
      return {false, "probe failed for seed " + s};
    }
    const double a = probe_accuracy(dir / ("probe" + s) / "probe.json");
    const double r = probe_accuracy(dir / ("random" + s) / "probe.json");
    std::cerr << "  seed " << seed << ": pretrained " << a << ", random init " << r << "\n";
    per_seed += (seed ? " " : "") + fmt("%.3f", a) + "/" + fmt("%.3f", r);
    trained += a / 3.0;
    random += r / 3.0;
  }
  return {trained >= 0.60 && trained - random >= 0.20,
          "mean top-1 " + fmt("%.3f", trained) + " vs random init " + fmt("%.3f", random) + " (per seed " +
              per_seed + ")"};
}

// 10 ------------------------------------------------------------------------
Outcome correspondence_ablations() {
  TempDir dir("acc_ablate");
  if (cli({"gen-data", "--out", (dir / "data").string(), "--classes", "2", "--per-class", "1", "--frames", "16"}) != 0) {
    return {false, "gen-data failed"};
  }
  const std::vector<std::string> names{"lg", "gg", "lg_gg", "lg_gg_ll", "lg_gg_gl", "lg_gg_ll_gl"};
  int done = 0;
  std::string failed;
  for (const auto& name : names) {
    const auto out = dir / name;
    const int code = cli({"pretrain", "--config", (config_dir() / "correspondences" / (name + ".cfg")).string(),
                          "--out", out.string(), "--set", "data=" + (dir / "data").string()});
    const auto metrics = metric_lines(out / "metrics.jsonl");
    bool finite = code == 0 && !metrics.empty() && fs::exists(out / "checkpoint.ckpt");
    for (const auto& m : metrics) finite = finite && std::isfinite(svt::MetricsRecord::from_json(m).total);
    if (finite) {
      ++done;
    } else {
      failed += " " + name;
    }
  }
  return {done == static_cast<int>(names.size()),
          std::to_string(done) + "/" + std::to_string(names.size()) + " configurations completed" +
              (failed.empty() ? "" : "; failed:" + failed)};
}

// 11 ------------------------------------------------------------------------
Outcome checkpoint_determinism() {
  TempDir dir("acc_ckpt");
  if (cli({"gen-data", "--out", (dir / "data").string(), "--classes", "4", "--per-class", "1", "--frames", "16"}) != 0) {
    return {false, "gen-data failed"};
  }
  const auto cfg = (config_dir() / "smoke.cfg").string();
  const std::string data = "data=" + (dir / "data").string();
  const std::vector<std::string> common{"--set", data, "--set", "epochs=6", "--set", "steps_per_epoch=2",
                                        "--set", "checkpoint_every=4"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  if (cli(with({"pretrain", "--config", cfg, "--out", (dir / "full").string()})) != 0) return {false, "full run failed"};
  if (cli(with({"pretrain", "--config", cfg, "--out", (dir / "part").string(), "--max-steps", "4"})) != 0) {
    return {false, "partial run failed"};
  }
  if (cli(with({"pretrain", "--config", cfg, "--out", (dir / "part").string(), "--resume",
                (dir / "part" / "step_4.ckpt").string()})) != 0) {
    return {false, "resume failed"};
  }
  const auto a = metric_lines(dir / "full" / "metrics.jsonl");
  const auto b = metric_lines(dir / "part" / "metrics.jsonl");
  bool same = a.size() == b.size() && a.size() == 12;
  for (std::size_t i = 0; same && i < a.size(); ++i) {
    same = svt::MetricsRecord::from_json(a[i]).same_trajectory(svt::MetricsRecord::from_json(b[i]));
  }
  const auto ca = svt::TensorArchive::read(dir / "full" / "checkpoint.ckpt");
  const auto cb = svt::TensorArchive::read(dir / "part" / "checkpoint.ckpt");
  const bool weights = ca.payload() == cb.payload();
  return {same && weights, std::to_string(b.size()) + " resumed records match bitwise: " + (same ? "yes" : "no") +
                               ", final weights identical: " + (weights ? "yes" : "no")};
}

// 12 ------------------------------------------------------------------------
std::string decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    svt::decode_raw_video(bytes);
  } catch (const svt::DataError& e) {
    return e.what();
  }
  return "";
}

Outcome file_format() {
  TempDir dir("acc_io");
  bool roundtrip = true;
  for (int i = 0; i < 20; ++i) {
    const auto v = svt::testing::random_video(static_cast<std::uint32_t>(1 + i), static_cast<std::uint32_t>(8 + i),
                                              static_cast<std::uint32_t>(5 + 2 * i), static_cast<std::uint64_t>(i));
    const auto path = dir / ("v" + std::to_string(i) + ".svtvid");
    svt::write_raw_video(v, path);
    const auto bytes = slurp(path);
    const auto back = svt::read_raw_video(path);
    svt::write_raw_video(back, dir / "again.svtvid");
    roundtrip = roundtrip && back == v && slurp(dir / "again.svtvid") == bytes;
  }
  const auto good = svt::encode_raw_video(svt::testing::random_video(2, 4, 4, 1));
  auto magic = good;
  magic[0] = 'X';
  auto empty = svt::encode_raw_video(svt::RawVideo(1, 4, 4));
  std::fill(empty.begin() + 8, empty.begin() + 12, 0);
  empty.resize(24);
  auto truncated = good;
  truncated.pop_back();
  const bool errors = decode_error(magic) == "bad magic" && decode_error(empty) == "empty video" &&
                      decode_error(truncated) == "truncated payload";
  return {roundtrip && errors, std::string("roundtrip bit-exact: ") + (roundtrip ? "yes" : "no") +
                                   ", forced errors raised: " + (errors ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double limit_s;  // 0: no time limit
  };
  const std::vector<Criterion> criteria{
      {"gradient oracle", gradient_oracle, 120},
      {"loss identities", loss_identities, 0},
      {"softmax normalization", softmax_properties, 0},
      {"teacher EMA and stop-gradient", ema_contract, 0},
      {"positional interpolation", positional_interpolation, 0},
      {"shape contract", shape_contract, 0},
      {"view sampler statistics", view_statistics, 0},
      {"overfit two videos", overfit, 300},
      {"learning check", learning_check, 1800},
      {"correspondence ablations", correspondence_ablations, 0},
      {"checkpoint determinism", checkpoint_determinism, 0},
      {"file format", file_format, 0},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && only.count(id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criteria[i].limit_s > 0 && secs > criteria[i].limit_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", criteria[i].limit_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].name.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
