// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include "svt/views.hpp"

namespace svt {

SlowFastSpec SlowFastSpec::from_config(const TrainConfig& config) {
  SlowFastSpec s;
  s.slow = {config.eval.slow_frames, config.views.global_size};
  s.fast = {config.eval.fast_frames, config.views.local_size};
  s.crops = config.eval.crops;
  s.use_fast = config.eval.slow_fast;
  return s;
}

ProbeConfig ProbeConfig::from_config(const TrainConfig& config) {
  ProbeConfig p;
  p.lr = config.eval.probe_lr;
  p.momentum = config.eval.probe_momentum;
  p.epochs = config.eval.probe_epochs;
  p.batch_size = config.eval.probe_batch_size;
  p.weight_decay = config.eval.probe_weight_decay;
  p.seed = config.seed;
  return p;
}

template <typename Real>
std::vector<Real> extract_feature(const ModelParams<Real>& params, const Clip& clip) {
  return forward(params, clip).cls_backbone;
}

template std::vector<float> extract_feature<float>(const ModelParams<float>&, const Clip&);
template std::vector<double> extract_feature<double>(const ModelParams<double>&, const Clip&);

SpatialWindow square_crop(int height, int width, int index, int count) {
  if (count < 1 || index < 0 || index >= count) throw UsageError("crop index out of range");
  const int side = std::min(height, width);
  const int slack = std::max(height, width) - side;
  const int offset = count == 1 ? slack / 2
                                : static_cast<int>(std::lround(static_cast<double>(index) * slack / (count - 1)));
  SpatialWindow w;
  w.height = side;
  w.width = side;
  if (width >= height) w.left = offset;
  else w.top = offset;
  return w;
}

std::vector<int> spread_indices(int n_frames, int frames) {
  if (n_frames < 1 || frames < 1) throw UsageError("cannot sample frames from an empty video");
  return uniform_indices(0, n_frames, frames);
}

std::vector<float> fuse(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw UsageError("cannot fuse features of different lengths");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

std::vector<float> slow_fast_features(const ModelParams<float>& params, const RawVideo& video,
                                      const SlowFastSpec& spec, const SpatialWindow& window) {
  const int n = static_cast<int>(video.frames);
  if (n < spec.slow.frames) {
    throw UsageError("video has " + std::to_string(n) + " frames; the slow clip needs at least " +
                     std::to_string(spec.slow.frames));
  }
  const Clip slow = extract_clip(video, spread_indices(n, spec.slow.frames), window, spec.slow.size, spec.slow.size);
  auto feature = extract_feature(params, slow);
  if (!spec.use_fast) return feature;
  const Clip fast = extract_clip(video, spread_indices(n, spec.fast.frames), window, spec.fast.size, spec.fast.size);
  return fuse(feature, extract_feature(params, fast));
}

std::vector<float> slow_fast_features(const ModelParams<float>& params, const RawVideo& video,
                                      const SlowFastSpec& spec) {
  const int h = static_cast<int>(video.height);
  const int w = static_cast<int>(video.width);
  return slow_fast_features(params, video, spec, square_crop(h, w, 0, 1));
}

std::vector<double> LinearClassifier::scores(const std::vector<float>& feature) const {
  if (static_cast<int>(feature.size()) != dim) throw UsageError("feature length does not match the classifier");
  std::vector<double> z(bias);
  for (int i = 0; i < dim; ++i) {
    const double x = (feature[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)]) *
                     inv_std[static_cast<std::size_t>(i)];
    const double* row = weight.data() + static_cast<std::size_t>(i) * n_classes;
    for (int c = 0; c < n_classes; ++c) z[static_cast<std::size_t>(c)] += x * row[c];
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

int LinearClassifier::predict(const std::vector<float>& feature) const {
  const auto s = scores(feature);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

double accuracy(const LinearClassifier& classifier, const std::vector<std::vector<float>>& x,
                const std::vector<int>& y) {
  if (x.empty()) return 0.0;
  int correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += classifier.predict(x[i]) == y[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

ProbeResult linear_probe(const std::vector<std::vector<float>>& train_x, const std::vector<int>& train_y,
                         const std::vector<std::vector<float>>& test_x, const std::vector<int>& test_y,
                         const ProbeConfig& config) {
  if (train_x.empty() || train_x.size() != train_y.size()) throw UsageError("probe needs labeled training features");
  if (test_x.size() != test_y.size()) throw UsageError("test features and labels differ in count");
  if (!(config.lr > 0.0) || config.epochs < 1 || config.batch_size < 1) throw UsageError("invalid probe config");
  const std::set<int> classes(train_y.begin(), train_y.end());
  if (classes.size() < 2) throw UsageError("degenerate probe training set: only one class present");
  if (*classes.begin() < 0) throw UsageError("negative class label");
  int n_classes = std::max(config.n_classes, *classes.rbegin() + 1);
  for (int y : test_y) n_classes = std::max(n_classes, y + 1);

  const std::size_t n = train_x.size();
  const int dim = static_cast<int>(train_x.front().size());
  LinearClassifier clf;
  clf.dim = dim;
  clf.n_classes = n_classes;
  clf.weight.assign(static_cast<std::size_t>(dim) * n_classes, 0.0);
  clf.bias.assign(static_cast<std::size_t>(n_classes), 0.0);
  clf.mean.assign(static_cast<std::size_t>(dim), 0.0);
  clf.inv_std.assign(static_cast<std::size_t>(dim), 0.0);
  for (const auto& f : train_x) {
    if (static_cast<int>(f.size()) != dim) throw UsageError("training features differ in length");
    for (int i = 0; i < dim; ++i) clf.mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
  }
  for (auto& m : clf.mean) m /= static_cast<double>(n);
  for (int i = 0; i < dim; ++i) {
    double var = 0.0;
    for (const auto& f : train_x) {
      const double d = f[static_cast<std::size_t>(i)] - clf.mean[static_cast<std::size_t>(i)];
      var += d * d;
    }
    clf.inv_std[static_cast<std::size_t>(i)] = 1.0 / (std::sqrt(var / static_cast<double>(n)) + 1e-6);
  }
  std::vector<std::vector<double>> xs(n, std::vector<double>(static_cast<std::size_t>(dim)));
  for (std::size_t s = 0; s < n; ++s) {
    for (int i = 0; i < dim; ++i) {
      xs[s][static_cast<std::size_t>(i)] =
          (train_x[s][static_cast<std::size_t>(i)] - clf.mean[static_cast<std::size_t>(i)]) * clf.inv_std[static_cast<std::size_t>(i)];
    }
  }

  const std::size_t batch = std::min(n, static_cast<std::size_t>(config.batch_size));
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total = steps_per_epoch * static_cast<std::size_t>(config.epochs);
  std::vector<double> vel_w(clf.weight.size(), 0.0);
  std::vector<double> vel_b(clf.bias.size(), 0.0);
  std::vector<double> grad_w(clf.weight.size());
  std::vector<double> grad_b(clf.bias.size());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(config.seed, 0x70726f6265ull);
  std::vector<double> z(static_cast<std::size_t>(n_classes));
  std::size_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < n; start += batch, ++t) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& x = xs[order[k]];
        const int y = train_y[order[k]];
        z = clf.bias;
        for (int i = 0; i < dim; ++i) {
          const double* row = clf.weight.data() + static_cast<std::size_t>(i) * n_classes;
          for (int c = 0; c < n_classes; ++c) z[static_cast<std::size_t>(c)] += x[static_cast<std::size_t>(i)] * row[c];
        }
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (auto& v : z) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (int c = 0; c < n_classes; ++c) {
          double d = z[static_cast<std::size_t>(c)] / sum - (c == y ? 1.0 : 0.0);
          grad_b[static_cast<std::size_t>(c)] += d;
          for (int i = 0; i < dim; ++i) {
            grad_w[static_cast<std::size_t>(i) * n_classes + c] += d * x[static_cast<std::size_t>(i)];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      const double lr = config.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total))) / 2.0;
      for (std::size_t i = 0; i < clf.weight.size(); ++i) {
        const double g = grad_w[i] * inv + config.weight_decay * clf.weight[i];
        vel_w[i] = config.momentum * vel_w[i] + g;
        clf.weight[i] -= lr * vel_w[i];
      }
      for (std::size_t c = 0; c < clf.bias.size(); ++c) {
        vel_b[c] = config.momentum * vel_b[c] + grad_b[c] * inv;
        clf.bias[c] -= lr * vel_b[c];
      }
    }
  }

  ProbeResult r;
  r.classifier = std::move(clf);
  r.train_accuracy = accuracy(r.classifier, train_x, train_y);
  r.test_accuracy = accuracy(r.classifier, test_x, test_y);
  return r;
}

std::vector<double> average_scores(const LinearClassifier& classifier,
                                   const std::vector<std::vector<float>>& crop_features) {
  if (crop_features.empty()) throw UsageError("no crop features to average");
  const auto n_classes = static_cast<std::size_t>(classifier.n_classes);
  std::vector<std::vector<double>> per_class(n_classes);
  for (const auto& f : crop_features) {
    const auto s = classifier.scores(f);
    for (std::size_t c = 0; c < n_classes; ++c) per_class[c].push_back(s[c]);
  }
  // Summing in sorted order makes the mean independent of the crop order.
  std::vector<double> mean(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& v = per_class[c];
    std::sort(v.begin(), v.end());
    if (v.front() == v.back()) {
      mean[c] = v.front();
      continue;
    }
    for (double x : v) mean[c] += x;
    mean[c] /= static_cast<double>(v.size());
  }
  return mean;
}

std::vector<double> predict_multicrop(const ModelParams<float>& params, const LinearClassifier& classifier,
                                      const RawVideo& video, const SlowFastSpec& spec) {
  const int h = static_cast<int>(video.height);
  const int w = static_cast<int>(video.width);
  std::vector<std::vector<float>> features;
  std::map<std::tuple<int, int, int, int>, std::size_t> seen;
  for (int c = 0; c < spec.crops; ++c) {
    const SpatialWindow win = square_crop(h, w, c, spec.crops);
    const auto key = std::make_tuple(win.top, win.left, win.height, win.width);
    const auto it = seen.find(key);
    if (it != seen.end()) {
      features.push_back(features[it->second]);
      continue;
    }
    seen[key] = features.size();
    features.push_back(slow_fast_features(params, video, spec, win));
  }
  return average_scores(classifier, features);
}

double finetune_lr(int epoch) {
  if (epoch < 1 || epoch > 15) throw UsageError("fine-tuning epochs run from 1 to 15");
  if (epoch <= 10) return 5e-3;
  if (epoch <= 13) return 5e-4;
  return 5e-5;
}

}  // namespace svt
