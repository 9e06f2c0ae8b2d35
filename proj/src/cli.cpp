// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "svt/eval.hpp"
#include "svt/trainer.hpp"

namespace svt {
namespace {

namespace fs = std::filesystem;

constexpr int kMinPretrainFrames = 16;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

void write_digest(const fs::path& dir, const std::string& digest) { write_text(dir / "config_digest.txt", digest + "\n"); }

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  int classes = kMotionClassCount;
  int per_class = 10;
  int frames = 32;
  int size = 32;
  std::uint64_t seed = 0;
  int object_size = 6;
  std::optional<double> speed;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.classes < 1 || a.classes > kMotionClassCount) {
    throw UsageError("--classes must be between 1 and " + std::to_string(kMotionClassCount));
  }
  if (a.per_class < 1) throw UsageError("--per-class must be at least 1");
  if (a.frames < kMinPretrainFrames) {
    throw UsageError("--frames " + std::to_string(a.frames) + " is too short: pretraining samples a " +
                     std::to_string(kMinPretrainFrames) + "-frame global view, so videos need at least " +
                     std::to_string(kMinPretrainFrames) + " frames");
  }
  if (a.size < a.object_size + 1) throw UsageError("--size must exceed the object size");
  // Default speed: the object travels 60% of the free space over the clip.
  const double speed = a.speed.value_or(0.6 * (a.size - a.object_size) / (a.frames - 1));

  std::ostringstream canon;
  canon << "gen-data classes=" << a.classes << " per_class=" << a.per_class << " frames=" << a.frames
        << " size=" << a.size << " seed=" << a.seed << " object_size=" << a.object_size << " speed=" << fmt_g(speed);
  ensure_dir(a.out);
  Dataset d;
  for (int c = 0; c < a.classes; ++c) {
    for (int i = 0; i < a.per_class; ++i) {
      Rng rng = Rng::derive(a.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i));
      SyntheticSpec spec;
      spec.motion = static_cast<MotionClass>(c);
      spec.n_frames = a.frames;
      spec.height = a.size;
      spec.width = a.size;
      spec.object_size = a.object_size;
      spec.speed = speed;
      spec.background = static_cast<Background>(rng.uniform_int(0, 2));
      spec.seed = rng.next_u64();
      auto lv = generate_synthetic_video(spec);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d.svtvid", std::string(motion_class_name(spec.motion)).c_str(), i);
      d.names.emplace_back(name);
      d.videos.push_back(std::move(lv.video));
      d.labels.push_back(lv.label);
    }
  }
  write_dataset(d, a.out);
  write_digest(a.out, to_hex(fnv1a64(canon.str())));
  out << "wrote " << d.size() << " videos to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
  int max_steps = -1;
};

int cmd_pretrain(const PretrainArgs& a, std::ostream& out) {
  TrainConfig config = load_config(a.config);
  for (const auto& o : a.overrides) apply_override(config, o);
  if (a.max_steps >= 0) config.max_steps = a.max_steps;
  config.finalize();
  if (config.data.empty()) throw UsageError("config does not name a dataset (key 'data')");
  Dataset data = load_dataset(config.data);
  Trainer trainer(config, std::move(data));

  ensure_dir(a.out);
  const fs::path out_dir(a.out);
  write_text(out_dir / "config.txt", canonical_config(trainer.config()));
  write_digest(out_dir, trainer.digest());

  const fs::path metrics_path = out_dir / "metrics.jsonl";
  std::vector<std::string> kept;
  if (!a.resume.empty()) {
    trainer.load_checkpoint(a.resume);
    std::ifstream existing(metrics_path);
    std::string line;
    while (std::getline(existing, line)) {
      if (line.empty()) continue;
      if (MetricsRecord::from_json(line).step <= trainer.steps_done()) kept.push_back(line);
    }
  }
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + metrics_path.string());
  for (const auto& line : kept) metrics << line << '\n';

  MetricsRecord last;
  while (!trainer.done()) {
    last = trainer.step();
    metrics << last.to_json() << '\n';
    metrics.flush();
    if (config.checkpoint_every > 0 && trainer.steps_done() % config.checkpoint_every == 0) {
      trainer.save_checkpoint(out_dir / ("step_" + std::to_string(trainer.steps_done()) + ".ckpt"));
    }
  }
  trainer.save_checkpoint(out_dir / "checkpoint.ckpt");
  out << "trained " << trainer.steps_done() << "/" << trainer.schedule().total_steps << " steps";
  if (last.step > 0) out << ", final loss " << fmt_g(last.total);
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
  std::string ckpt;
  std::string data;
  std::string test;
  std::string out;
  std::string weights = "teacher";
  double test_fraction = 0.2;
  bool random_baseline = false;
};

// Holds out the last `fraction` of every class (in labels.tsv order).
void split_dataset(const Dataset& all, double fraction, Dataset& train, Dataset& test) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < all.size(); ++i) by_class[all.labels[i]].push_back(i);
  std::vector<bool> is_test(all.size(), false);
  for (const auto& [label, idx] : by_class) {
    const auto n_test = static_cast<std::size_t>(fraction * static_cast<double>(idx.size()));
    for (std::size_t k = idx.size() - n_test; k < idx.size(); ++k) is_test[idx[k]] = true;
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    Dataset& d = is_test[i] ? test : train;
    d.names.push_back(all.names[i]);
    d.videos.push_back(all.videos[i]);
    d.labels.push_back(all.labels[i]);
  }
}

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  if (a.weights != "teacher" && a.weights != "student") throw UsageError("--weights must be teacher or student");
  if (!(a.test_fraction > 0.0 && a.test_fraction < 1.0)) throw UsageError("--test-fraction must be in (0, 1)");
  const TensorArchive archive = TensorArchive::read(a.ckpt);
  const TrainConfig config = checkpoint_config(archive);
  const ModelParams<float> params = a.random_baseline ? ModelParams<float>::init(config.backbone, config.seed)
                                                      : checkpoint_params(archive, a.weights == "teacher");
  Dataset train;
  Dataset test;
  if (a.test.empty()) {
    split_dataset(load_dataset(a.data), a.test_fraction, train, test);
  } else {
    train = load_dataset(a.data);
    test = load_dataset(a.test);
  }
  if (test.size() == 0) throw DataError("no held-out videos to evaluate");

  const SlowFastSpec spec = SlowFastSpec::from_config(config);
  std::vector<std::vector<float>> train_x;
  for (const auto& v : train.videos) train_x.push_back(slow_fast_features(params, v, spec));
  std::vector<std::vector<float>> test_center;
  for (const auto& v : test.videos) test_center.push_back(slow_fast_features(params, v, spec));
  ProbeConfig pc = ProbeConfig::from_config(config);
  pc.n_classes = std::max(train.n_classes(), test.n_classes());
  const ProbeResult result = linear_probe(train_x, train.labels, test_center, test.labels, pc);

  ensure_dir(a.out);
  const fs::path out_dir(a.out);
  std::ofstream preds(out_dir / "predictions.jsonl", std::ios::trunc);
  if (!preds) throw DataError("cannot write predictions");
  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto scores = predict_multicrop(params, result.classifier, test.videos[i], spec);
    const int pred = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    correct += pred == test.labels[i] ? 1 : 0;
    nlohmann::ordered_json j;
    j["video"] = test.names[i];
    j["label"] = test.labels[i];
    j["prediction"] = pred;
    j["scores"] = scores;
    preds << j.dump() << '\n';
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
  const std::string digest = config_digest(config);
  nlohmann::ordered_json summary;
  summary["accuracy"] = acc;
  summary["n_train"] = train.size();
  summary["n_test"] = test.size();
  summary["seed"] = config.seed;
  summary["config_digest"] = digest;
  summary["train_accuracy"] = result.train_accuracy;
  summary["center_crop_accuracy"] = result.test_accuracy;
  summary["weights"] = a.random_baseline ? "random-init" : a.weights;
  summary["slow_fast"] = spec.use_fast;
  summary["crops"] = spec.crops;
  write_text(out_dir / "probe.json", summary.dump(2) + "\n");
  write_digest(out_dir, digest);
  out << "probe accuracy " << fmt_g(acc) << " on " << test.size() << " videos\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// attn-map

struct AttnArgs {
  std::string ckpt;
  std::string video;
  std::string out;
  std::string weights = "teacher";
};

constexpr int kAttnFrames = 4;

int cmd_attn_map(const AttnArgs& a, std::ostream& out) {
  if (a.weights != "teacher" && a.weights != "student") throw UsageError("--weights must be teacher or student");
  const TensorArchive archive = TensorArchive::read(a.ckpt);
  const TrainConfig config = checkpoint_config(archive);
  const ModelParams<float> params = checkpoint_params(archive, a.weights == "teacher");
  const RawVideo video = read_raw_video(a.video);
  if (video.channels != 3) throw UsageError("attention maps need 3-channel videos");
  const int h = static_cast<int>(video.height);
  const int w = static_cast<int>(video.width);
  const int size = config.views.global_size;
  const auto indices = spread_indices(static_cast<int>(video.frames), kAttnFrames);
  const Clip clip = extract_clip(video, indices, SpatialWindow{0, 0, h, w}, size, size);
  const auto result = forward<float>(params, clip, nullptr, true);
  const auto& attn = result.attention.back();
  const int S = attn.spatial_tokens;
  const int grid = size / config.backbone.patch_size;
  const int heads = attn.heads;

  ensure_dir(a.out);
  const fs::path out_dir(a.out);
  for (int t = 0; t < kAttnFrames; ++t) {
    // Head-averaged attention of the class token over the patches, renormalized.
    std::vector<double> row(static_cast<std::size_t>(S), 0.0);
    for (int hd = 0; hd < heads; ++hd) {
      const float* p = attn.spatial.data() + (static_cast<std::size_t>(t) * heads + hd) * (S + 1) * (S + 1);
      for (int s = 0; s < S; ++s) row[static_cast<std::size_t>(s)] += p[1 + s];
    }
    double total = 0.0;
    for (double v : row) total += v;
    for (auto& v : row) v /= total;

    std::ostringstream csv;
    for (int s = 0; s < S; ++s) csv << (s ? "," : "") << fmt_g(row[static_cast<std::size_t>(s)]);
    csv << '\n';
    const std::string stem = "attn_frame" + std::to_string(t);
    write_text(out_dir / (stem + ".csv"), csv.str());

    const double peak = *std::max_element(row.begin(), row.end());
    std::vector<unsigned char> pixels(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
      const double gy = h > 1 ? static_cast<double>(y) * (grid - 1) / (h - 1) : 0.0;
      const int y0 = std::min(static_cast<int>(gy), grid - 1);
      const int y1 = std::min(y0 + 1, grid - 1);
      const double fy = gy - y0;
      for (int x = 0; x < w; ++x) {
        const double gx = w > 1 ? static_cast<double>(x) * (grid - 1) / (w - 1) : 0.0;
        const int x0 = std::min(static_cast<int>(gx), grid - 1);
        const int x1 = std::min(x0 + 1, grid - 1);
        const double fx = gx - x0;
        auto at = [&](int yy, int xx) { return row[static_cast<std::size_t>(yy) * grid + xx]; };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        pixels[static_cast<std::size_t>(y) * w + x] =
            static_cast<unsigned char>(std::clamp(std::lround(255.0 * v / peak), 0L, 255L));
      }
    }
    std::ofstream pgm(out_dir / (stem + ".pgm"), std::ios::binary | std::ios::trunc);
    if (!pgm) throw DataError("cannot write " + (out_dir / (stem + ".pgm")).string());
    pgm << "P5\n" << w << ' ' << h << "\n255\n";
    pgm.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  }
  std::ostringstream frames;
  for (std::size_t i = 0; i < indices.size(); ++i) frames << (i ? "," : "") << indices[i];
  write_text(out_dir / "frames.txt", frames.str() + "\n");
  write_digest(out_dir, config_digest(config));
  out << "wrote attention maps for frames " << frames.str() << " to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised video transformer toolkit", "svt"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled synthetic motion dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--classes", gen.classes, "Number of motion classes (1-4)");
  gen_cmd->add_option("--per-class", gen.per_class, "Videos per class");
  gen_cmd->add_option("--frames", gen.frames, "Frames per video (at least 16)");
  gen_cmd->add_option("--size", gen.size, "Frame height and width in pixels");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--object-size", gen.object_size, "Side of the moving square in pixels");
  gen_cmd->add_option("--speed", gen.speed, "Object speed in pixels per frame");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pre_cmd->add_option("--config", pre.config, "Config file")->required();
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();
  pre_cmd->add_option("--resume", pre.resume, "Checkpoint manifest to resume from");
  pre_cmd->add_option("--set", pre.overrides, "Override a config entry (key=value)");
  pre_cmd->add_option("--max-steps", pre.max_steps, "Stop after this many steps");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Linear probe on frozen slow-fast features");
  probe_cmd->add_option("--ckpt", probe.ckpt, "Checkpoint manifest")->required();
  probe_cmd->add_option("--data", probe.data, "Labeled dataset (training split)")->required();
  probe_cmd->add_option("--test", probe.test, "Held-out dataset; default splits --data");
  probe_cmd->add_option("--out", probe.out, "Output directory")->required();
  probe_cmd->add_option("--weights", probe.weights, "teacher or student");
  probe_cmd->add_option("--test-fraction", probe.test_fraction, "Held-out fraction when --test is absent");
  probe_cmd->add_flag("--random-baseline", probe.random_baseline, "Use a randomly initialized backbone");

  AttnArgs attn;
  auto* attn_cmd = app.add_subcommand("attn-map", "Export class-token attention maps");
  attn_cmd->add_option("--ckpt", attn.ckpt, "Checkpoint manifest")->required();
  attn_cmd->add_option("--video", attn.video, ".svtvid file")->required();
  attn_cmd->add_option("--out", attn.out, "Output directory")->required();
  attn_cmd->add_option("--weights", attn.weights, "teacher or student");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (pre_cmd->parsed()) return cmd_pretrain(pre, out);
    if (probe_cmd->parsed()) return cmd_probe(probe, out);
    if (attn_cmd->parsed()) return cmd_attn_map(attn, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace svt
