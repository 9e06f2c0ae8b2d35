// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "svt/backbone.hpp"
#include "svt/distill.hpp"
#include "svt/trainer.hpp"
#include "svt/videoio.hpp"

namespace svt::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("svt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline RawVideo random_video(std::uint32_t n, std::uint32_t h, std::uint32_t w, std::uint64_t seed) {
  RawVideo v(n, h, w, 3);
  Rng rng(seed);
  for (auto& b : v.data) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return v;
}

inline Clip random_clip(int t, int h, int w, std::uint64_t seed) {
  Clip c(t, h, w, 3);
  Rng rng(seed);
  for (auto& x : c.data) x = static_cast<float>(rng.uniform());
  return c;
}

/// Brute-force centroid of every pixel brighter than `threshold` in channel-mean intensity.
inline std::pair<double, double> bright_centroid(const RawVideo& v, std::uint32_t t, double threshold = 120.0) {
  double sx = 0.0;
  double sy = 0.0;
  double n = 0.0;
  for (std::uint32_t y = 0; y < v.height; ++y) {
    for (std::uint32_t x = 0; x < v.width; ++x) {
      double m = 0.0;
      for (std::uint32_t c = 0; c < v.channels; ++c) m += v.at(t, y, x, c);
      m /= v.channels;
      if (m > threshold) {
        sx += x;
        sy += y;
        n += 1.0;
      }
    }
  }
  return {n > 0 ? sx / n : -1.0, n > 0 ? sy / n : -1.0};
}

/// Synthetic labeled dataset, `per_class` videos per motion class.
inline Dataset synthetic_dataset(int per_class, int frames, int size, std::uint64_t seed, double speed = 0.5) {
  Dataset d;
  for (int c = 0; c < kMotionClassCount; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i));
      SyntheticSpec s;
      s.motion = static_cast<MotionClass>(c);
      s.n_frames = frames;
      s.height = size;
      s.width = size;
      s.speed = speed;
      s.background = static_cast<Background>(rng.uniform_int(0, 2));
      s.seed = rng.next_u64();
      auto lv = generate_synthetic_video(s);
      d.names.push_back("c" + std::to_string(c) + "_" + std::to_string(i) + ".svtvid");
      d.videos.push_back(std::move(lv.video));
      d.labels.push_back(lv.label);
    }
  }
  return d;
}

/// Small, fast training configuration at 32/16 pixel views.
inline std::string desk_config_text() {
  return "global_size = 32\n"
         "local_size = 16\n"
         "patch_size = 8\n"
         "embed_dim = 32\n"
         "n_blocks = 2\n"
         "n_heads = 4\n"
         "proj_dim = 32\n"
         "batch_size = 2\n"
         "epochs = 10\n"
         "warmup_epochs = 1\n"
         "n_locals = 4\n";
}

/// Central difference of f around x[i] with step h.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double old = x;
  x = old + h;
  const double fp = f();
  x = old - h;
  const double fm = f();
  x = old;
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace svt::testing
