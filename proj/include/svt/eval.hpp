// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svt/backbone.hpp"
#include "svt/config.hpp"
#include "svt/videoio.hpp"

namespace svt {

struct ClipShape {
  int frames = 8;
  int size = 224;
};

struct SlowFastSpec {
  ClipShape slow{8, 224};
  ClipShape fast{kMaxInferenceFrames, 96};
  int crops = 3;
  bool use_fast = true;

  /// Slow clip at the global view size, fast clip at the local view size.
  static SlowFastSpec from_config(const TrainConfig& config);
};

/// Backbone classification token (the projection head is not applied).
template <typename Real>
std::vector<Real> extract_feature(const ModelParams<Real>& params, const Clip& clip);

/// Window of square crop `index` (0, 1, 2 = start, center, end of the longer
/// axis) out of `count` crops. A square frame yields the full frame.
SpatialWindow square_crop(int height, int width, int index, int count);

/// `frames` indices spread uniformly over the whole video; short videos repeat frames.
std::vector<int> spread_indices(int n_frames, int frames);

/// elementwise a + b
std::vector<float> fuse(const std::vector<float>& a, const std::vector<float>& b);

/// Slow and fast clips cropped with `window`, features fused by summation.
std::vector<float> slow_fast_features(const ModelParams<float>& params, const RawVideo& video,
                                      const SlowFastSpec& spec, const SpatialWindow& window);
/// Center-crop variant.
std::vector<float> slow_fast_features(const ModelParams<float>& params, const RawVideo& video,
                                      const SlowFastSpec& spec);

/// Linear classifier over standardized features.
struct LinearClassifier {
  int dim = 0;
  int n_classes = 0;
  std::vector<double> weight;  // [dim x n_classes]
  std::vector<double> bias;
  std::vector<double> mean;
  std::vector<double> inv_std;

  std::vector<double> scores(const std::vector<float>& feature) const;  // softmax probabilities
  int predict(const std::vector<float>& feature) const;
};

struct ProbeConfig {
  double lr = 8e-3;
  double momentum = 0.9;
  int epochs = 100;
  int batch_size = 16;
  double weight_decay = 0.0;
  int n_classes = 0;  // 0: inferred from the labels
  std::uint64_t seed = 0;

  static ProbeConfig from_config(const TrainConfig& config);
};

struct ProbeResult {
  LinearClassifier classifier;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Momentum SGD on softmax cross-entropy with a cosine-decayed learning rate.
/// Accuracy is measured on the held-out set when it is non-empty.
ProbeResult linear_probe(const std::vector<std::vector<float>>& train_x, const std::vector<int>& train_y,
                         const std::vector<std::vector<float>>& test_x, const std::vector<int>& test_y,
                         const ProbeConfig& config);

double accuracy(const LinearClassifier& classifier, const std::vector<std::vector<float>>& x,
                const std::vector<int>& y);

/// Averages the classifier scores over the spatial crops of the fused slow-fast clips.
std::vector<double> predict_multicrop(const ModelParams<float>& params, const LinearClassifier& classifier,
                                      const RawVideo& video, const SlowFastSpec& spec);

/// Scores for each crop feature averaged in order.
std::vector<double> average_scores(const LinearClassifier& classifier,
                                   const std::vector<std::vector<float>>& crop_features);

/// Step schedule of the fine-tuning protocol (1-based epochs 1..15).
double finetune_lr(int epoch);
inline constexpr double kFinetuneMomentum = 0.9;
inline constexpr double kFinetuneWeightDecay = 1e-4;

}  // namespace svt
