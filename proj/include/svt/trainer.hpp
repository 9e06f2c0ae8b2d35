// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svt/archive.hpp"
#include "svt/config.hpp"
#include "svt/distill.hpp"
#include "svt/videoio.hpp"

namespace svt {

/// Videos of a directory listed in its labels.tsv (filename TAB class index).
struct Dataset {
  std::vector<std::string> names;
  std::vector<RawVideo> videos;
  std::vector<int> labels;

  std::size_t size() const { return videos.size(); }
  int n_classes() const;
};

Dataset load_dataset(const std::filesystem::path& dir);
/// Writes the videos and labels.tsv into `dir` (created if missing).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

struct Schedule {
  long total_steps = 1;
  long warmup_steps = 0;
  long steps_per_epoch = 1;
  int epochs = 1;
  double base_lr = 5e-4;
  double weight_decay_start = 0.04;
  double weight_decay_end = 0.1;
};

Schedule make_schedule(const TrainConfig& config, std::size_t dataset_size);

/// Linear warmup 0 -> base_lr, then cosine decay to 0 at total_steps.
double lr_at(long step, const Schedule& schedule);
/// Cosine ramp from weight_decay_start at step 0 to weight_decay_end at total_steps.
double wd_at(long step, const Schedule& schedule);

struct MetricsRecord {
  long step = 0;  // steps completed, starting at 1
  int epoch = 0;
  double lr = 0.0;
  double weight_decay = 0.0;
  double ema_momentum = 0.0;
  double l_gg = 0.0;
  double l_lg = 0.0;
  double total = 0.0;
  double teacher_std = 0.0;
  double wall_ms = 0.0;

  std::string to_json() const;
  static MetricsRecord from_json(const std::string& line);
  /// Bitwise comparison of every field except wall_ms.
  bool same_trajectory(const MetricsRecord& other) const;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  long t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

/// Everything one step needs besides the parameters.
struct StepSettings {
  double lr = 0.0;
  double weight_decay = 0.0;
  double ema_momentum = 0.996;
  double teacher_temp = 0.04;
  double grad_clip = 3.0;
  std::uint64_t seed = 0;
  long step = 0;  // zero-based index of this step
  int epoch = 0;
  ViewConfig views;
  Correspondences correspondences;
};

/// One optimization step: view sampling per video, loss and gradient, AdamW
/// update of the student, then EMA teacher and center updates.
MetricsRecord train_step(ModelParams<float>& student, DistillState<float>& state, AdamState& adam,
                         const std::vector<const RawVideo*>& batch, const StepSettings& settings);

/// Standard deviation of each probability coordinate across `probs`, averaged
/// over coordinates.
double batch_std(const std::vector<std::vector<float>>& probs);

class Trainer {
 public:
  Trainer(TrainConfig config, Dataset data);

  /// Runs the next step and returns its metrics.
  MetricsRecord step();
  bool done() const;
  long steps_done() const { return steps_done_; }
  const Schedule& schedule() const { return schedule_; }
  const TrainConfig& config() const { return config_; }
  const std::string& digest() const { return digest_; }

  const ModelParams<float>& student() const { return student_; }
  const DistillState<float>& distill_state() const { return state_; }
  const AdamState& adam() const { return adam_; }
  const Rng& rng() const { return rng_; }

  /// Indices of the videos used by the next step; advances the batch stream.
  std::vector<std::size_t> next_batch();

  TensorArchive checkpoint() const;
  void save_checkpoint(const std::filesystem::path& manifest) const;
  /// Restores a checkpoint written with the same config digest.
  void load_checkpoint(const std::filesystem::path& manifest);
  void restore(const TensorArchive& archive);

 private:
  TrainConfig config_;
  Dataset data_;
  Schedule schedule_;
  std::string digest_;
  ModelParams<float> student_;
  DistillState<float> state_;
  AdamState adam_;
  Rng rng_;
  long steps_done_ = 0;
};

/// Rebuilds the config stored in a checkpoint.
TrainConfig checkpoint_config(const TensorArchive& archive);
/// Loads the teacher (or student) weights of a checkpoint.
ModelParams<float> checkpoint_params(const TensorArchive& archive, bool teacher = true);

}  // namespace svt
