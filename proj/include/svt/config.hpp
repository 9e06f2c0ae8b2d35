// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "svt/backbone.hpp"
#include "svt/distill.hpp"
#include "svt/views.hpp"

namespace svt {

struct DistillOptions {
  double student_temp = 0.1;
  double teacher_temp_start = 0.04;
  double teacher_temp_end = 0.07;
  double teacher_temp_warmup = 0.3;  // fraction of the epochs
  double center_momentum = 0.9;
  bool centering = true;
  double ema_start = 0.996;
  double ema_end = 1.0;
  Correspondences correspondences;
};

struct EvalOptions {
  bool slow_fast = true;
  int slow_frames = 8;
  int fast_frames = kMaxInferenceFrames;
  int crops = 3;
  int probe_epochs = 100;
  int probe_batch_size = 16;
  double probe_lr = 8e-3;
  double probe_momentum = 0.9;
  double probe_weight_decay = 0.0;
};

/// Everything a pretraining run depends on. The backbone's max_image_size and
/// max_frames are derived from the view settings.
struct TrainConfig {
  std::string data;
  std::uint64_t seed = 0;
  int batch_size = 8;
  int epochs = 20;
  int steps_per_epoch = 0;  // 0: ceil(dataset size / batch_size)
  double base_lr = 5e-4;
  double warmup_epochs = 5.0;
  double weight_decay_start = 0.04;
  double weight_decay_end = 0.1;
  double grad_clip = 3.0;  // 0 disables clipping
  int checkpoint_every = 0;
  // Stop early after this many steps without changing the schedules; 0 runs to the end.
  int max_steps = 0;
  BackboneConfig backbone;
  ViewConfig views;
  DistillOptions distill;
  EvalOptions eval;

  /// Copies view sizes into the backbone and checks every constraint.
  void finalize();
};

/// Parses `key = value` lines. `#` starts a comment. Unknown or repeated keys
/// raise UsageError naming the key.
TrainConfig parse_config(const std::string& text, const std::string& origin = "config");
TrainConfig load_config(const std::filesystem::path& path);
/// Applies one `key=value` override.
void apply_override(TrainConfig& config, const std::string& assignment);

/// Every key in a fixed order, one `key = value` per line.
std::string canonical_config(const TrainConfig& config);
/// Digest over the keys that determine the training trajectory; output-only
/// keys (checkpoint_every, max_steps) are excluded.
std::string config_digest(const TrainConfig& config);

std::vector<std::string> config_keys();

}  // namespace svt
