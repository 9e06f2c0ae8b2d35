// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/views.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace svt {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

void require_frames(const RawVideo& video, int frame_count, const char* what) {
  if (video.frames == 0) throw DataError("empty video");
  if (frame_count <= 0) throw UsageError(std::string(what) + ": frame count must be positive");
  if (static_cast<int>(video.frames) < frame_count) {
    throw DataError(std::string(what) + ": video has " + std::to_string(video.frames) +
                    " frames, needs at least " + std::to_string(frame_count));
  }
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

SpatialWindow full_frame(const RawVideo& video) {
  return {0, 0, static_cast<int>(video.height), static_cast<int>(video.width)};
}

View make_view(const RawVideo& video, std::vector<int> indices, const SpatialWindow& window,
               ViewRole role, int out_size, const ViewConfig& config) {
  View v;
  const int oh = config.resize ? out_size : window.height;
  const int ow = config.resize ? out_size : window.width;
  v.frames = extract_clip(video, indices, window, oh, ow);
  v.source_indices = std::move(indices);
  v.role = role;
  v.window = window;
  return v;
}

SpatialWindow random_crop(const RawVideo& video, Rng& rng, const ViewConfig& config) {
  const double h = video.height;
  const double w = video.width;
  const double area = rng.uniform(config.local_area_min, config.local_area_max) * h * w;
  const double aspect = rng.uniform(config.aspect_min, config.aspect_max);
  const int cw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1,
                            static_cast<int>(video.width));
  const int ch = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1,
                            static_cast<int>(video.height));
  SpatialWindow win;
  win.height = ch;
  win.width = cw;
  win.top = static_cast<int>(rng.uniform_int(0, static_cast<int>(video.height) - ch));
  win.left = static_cast<int>(rng.uniform_int(0, static_cast<int>(video.width) - cw));
  return win;
}

// Separable Gaussian blur of one frame, edges clamped.
void blur_frame(Clip& clip, int t, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double k = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = k;
    total += k;
  }
  for (auto& k : kernel) k /= total;
  const int h = clip.height;
  const int w = clip.width;
  const int c = clip.channels;
  std::vector<double> tmp(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          s += kernel[static_cast<std::size_t>(i + radius)] * clip.at(t, y, xx, ch);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = s;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          s += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[(static_cast<std::size_t>(yy) * w + x) * c + ch];
        }
        clip.at(t, y, x, ch) = clamp01(s);
      }
    }
  }
}

}  // namespace

std::vector<int> uniform_indices(int start, int length, int count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = start;
    return out;
  }
  for (int i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] =
        start + static_cast<int>((static_cast<long long>(i) * (length - 1)) / (count - 1));
  }
  return out;
}

int global_window_length(int n_frames, int frame_count) {
  const int ninety = (9 * n_frames + 9) / 10;
  return std::min(n_frames, std::max(ninety, frame_count));
}

int local_window_length(int n_frames, int frame_count) {
  const int eighth = (n_frames + 7) / 8;
  return std::min(n_frames, std::max(eighth, frame_count));
}

Clip resize_clip(const Clip& clip, int out_h, int out_w) {
  Clip out(clip.frames, out_h, out_w, clip.channels);
  const double sy = out_h > 1 ? static_cast<double>(clip.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(clip.width - 1) / (out_w - 1) : 0.0;
  const double cy = out_h > 1 ? 0.0 : (clip.height - 1) / 2.0;
  const double cx = out_w > 1 ? 0.0 : (clip.width - 1) / 2.0;
  for (int t = 0; t < clip.frames; ++t) {
    for (int y = 0; y < out_h; ++y) {
      const double fy = cy + y * sy;
      const int y0 = std::min(static_cast<int>(fy), clip.height - 1);
      const int y1 = std::min(y0 + 1, clip.height - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double fx = cx + x * sx;
        const int x0 = std::min(static_cast<int>(fx), clip.width - 1);
        const int x1 = std::min(x0 + 1, clip.width - 1);
        const double wx = fx - x0;
        for (int c = 0; c < clip.channels; ++c) {
          const double top = (1.0 - wx) * clip.at(t, y0, x0, c) + wx * clip.at(t, y0, x1, c);
          const double bot = (1.0 - wx) * clip.at(t, y1, x0, c) + wx * clip.at(t, y1, x1, c);
          out.at(t, y, x, c) = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
      }
    }
  }
  return out;
}

Clip extract_clip(const RawVideo& video, const std::vector<int>& indices,
                  const SpatialWindow& window, int out_h, int out_w) {
  if (window.top < 0 || window.left < 0 || window.height <= 0 || window.width <= 0 ||
      window.top + window.height > static_cast<int>(video.height) ||
      window.left + window.width > static_cast<int>(video.width)) {
    throw UsageError("spatial window outside the frame");
  }
  const int c = static_cast<int>(video.channels);
  Clip crop(static_cast<int>(indices.size()), window.height, window.width, c);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const int src = indices[t];
    if (src < 0 || src >= static_cast<int>(video.frames)) throw UsageError("frame index out of range");
    for (int y = 0; y < window.height; ++y) {
      for (int x = 0; x < window.width; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          crop.at(static_cast<int>(t), y, x, ch) =
              static_cast<float>(video.at(static_cast<std::uint32_t>(src),
                                          static_cast<std::uint32_t>(window.top + y),
                                          static_cast<std::uint32_t>(window.left + x),
                                          static_cast<std::uint32_t>(ch))) /
              255.0f;
        }
      }
    }
  }
  if (out_h == window.height && out_w == window.width) return crop;
  return resize_clip(crop, out_h, out_w);
}

View sample_global_view(const RawVideo& video, int frame_count, Rng& rng,
                        const ViewConfig& config) {
  require_frames(video, frame_count, "global view");
  const int n = static_cast<int>(video.frames);
  const int length = global_window_length(n, frame_count);
  const int offset = static_cast<int>(rng.uniform_int(0, n - length));
  return make_view(video, uniform_indices(offset, length, frame_count), full_frame(video),
                   ViewRole::kGlobal, config.global_size, config);
}

View sample_local_view(const RawVideo& video, int frame_count, Rng& rng,
                       const ViewConfig& config) {
  require_frames(video, frame_count, "local view");
  const int n = static_cast<int>(video.frames);
  const int length = config.temporal_variation ? local_window_length(n, frame_count)
                                               : global_window_length(n, frame_count);
  const int offset = static_cast<int>(rng.uniform_int(0, n - length));
  const SpatialWindow window =
      config.spatial_variation ? random_crop(video, rng, config) : full_frame(video);
  return make_view(video, uniform_indices(offset, length, frame_count), window, ViewRole::kLocal,
                   config.local_size, config);
}

View sample_tis_view(const RawVideo& video, int frame_count, Rng& rng, const ViewConfig& config) {
  require_frames(video, frame_count, "interval view");
  if (frame_count < 2) throw UsageError("interval view needs at least 2 frames");
  const int n = static_cast<int>(video.frames);
  const int first_count = frame_count / 2;
  const int second_count = frame_count - first_count;
  const int span = std::max(second_count, n / 4);
  const int max_gap = n - 2 * span;
  // Truncated geometric over [0, max_gap] by inverse CDF.
  const double q = 1.0 - config.tis_geometric_p;
  const double mass = 1.0 - std::pow(q, max_gap + 1);
  const double u = rng.uniform();
  int gap = static_cast<int>(std::floor(std::log(1.0 - u * mass) / std::log(q)));
  gap = std::clamp(gap, 0, max_gap);
  const int start = static_cast<int>(rng.uniform_int(0, n - 2 * span - gap));
  std::vector<int> indices = uniform_indices(start, span, first_count);
  const auto second = uniform_indices(start + span + gap, span, second_count);
  indices.insert(indices.end(), second.begin(), second.end());
  return make_view(video, std::move(indices), full_frame(video), ViewRole::kGlobal,
                   config.global_size, config);
}

ViewSet sample_view_set(const RawVideo& video, Rng& rng, const ViewConfig& config) {
  require_frames(video, config.global_high_frames, "view set");
  if (config.local_frame_choices.empty()) throw UsageError("no local frame counts configured");
  ViewSet set;
  const std::array<int, 2> global_frames{config.global_low_frames, config.global_high_frames};
  for (std::size_t g = 0; g < 2; ++g) {
    View v = config.sampler == TemporalSampler::kInterval
                 ? sample_tis_view(video, global_frames[g], rng, config)
                 : sample_global_view(video, global_frames[g], rng, config);
    set.globals[g] = config.aug.enabled ? apply_augmentations(v, rng, config.flip_allowed, config.aug)
                                        : std::move(v);
  }
  set.locals.reserve(static_cast<std::size_t>(config.n_locals));
  const auto n_choices = static_cast<std::int64_t>(config.local_frame_choices.size());
  for (int i = 0; i < config.n_locals; ++i) {
    const int t = config.local_frame_choices[static_cast<std::size_t>(rng.uniform_int(0, n_choices - 1))];
    View v = sample_local_view(video, t, rng, config);
    set.locals.push_back(config.aug.enabled
                             ? apply_augmentations(v, rng, config.flip_allowed, config.aug)
                             : std::move(v));
  }
  return set;
}

AugRecord draw_aug_record(Rng& rng, ViewRole role, bool flip_allowed,
                          const AugmentConfig& config) {
  AugRecord r;
  r.flip = flip_allowed && rng.bernoulli(config.p_flip);
  r.jitter = rng.bernoulli(config.p_jitter);
  if (r.jitter) {
    r.brightness = rng.uniform(1.0 - config.brightness, 1.0 + config.brightness);
    r.contrast = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast);
    r.saturation = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation);
    r.hue = rng.uniform(-config.hue, config.hue);
  }
  r.grayscale = rng.bernoulli(config.p_grayscale);
  if (role == ViewRole::kGlobal) {
    r.blur = rng.bernoulli(config.p_blur);
    if (r.blur) r.blur_sigma = rng.uniform(config.blur_sigma_min, config.blur_sigma_max);
    r.solarize = rng.bernoulli(config.p_solarize);
    r.solarize_threshold = config.solarize_threshold;
  }
  return r;
}

void apply_aug_record(Clip& clip, int t, const AugRecord& r) {
  const int h = clip.height;
  const int w = clip.width;
  if (clip.channels != 3) throw UsageError("augmentations expect 3 channels");
  if (r.flip) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w / 2; ++x) {
        for (int c = 0; c < 3; ++c) std::swap(clip.at(t, y, x, c), clip.at(t, y, w - 1 - x, c));
      }
    }
  }
  if (r.jitter) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) clip.at(t, y, x, c) = clamp01(clip.at(t, y, x, c) * r.brightness);
      }
    }
    double mean = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        mean += kLumaR * clip.at(t, y, x, 0) + kLumaG * clip.at(t, y, x, 1) + kLumaB * clip.at(t, y, x, 2);
      }
    }
    mean /= static_cast<double>(h) * w;
    const double cos_h = std::cos(6.283185307179586 * r.hue);
    const double sin_h = std::sin(6.283185307179586 * r.hue);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double px[3];
        for (int c = 0; c < 3; ++c) px[c] = std::clamp(mean + r.contrast * (clip.at(t, y, x, c) - mean), 0.0, 1.0);
        const double gray = kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2];
        for (double& v : px) v = std::clamp(gray + r.saturation * (v - gray), 0.0, 1.0);
        // Hue rotation in YIQ space.
        const double yy = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        const double ii = 0.596 * px[0] - 0.274 * px[1] - 0.322 * px[2];
        const double qq = 0.211 * px[0] - 0.523 * px[1] + 0.312 * px[2];
        const double i2 = ii * cos_h - qq * sin_h;
        const double q2 = ii * sin_h + qq * cos_h;
        clip.at(t, y, x, 0) = clamp01(yy + 0.956 * i2 + 0.621 * q2);
        clip.at(t, y, x, 1) = clamp01(yy - 0.272 * i2 - 0.647 * q2);
        clip.at(t, y, x, 2) = clamp01(yy - 1.106 * i2 + 1.703 * q2);
      }
    }
  }
  if (r.grayscale) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float g = clamp01(kLumaR * clip.at(t, y, x, 0) + kLumaG * clip.at(t, y, x, 1) +
                                kLumaB * clip.at(t, y, x, 2));
        for (int c = 0; c < 3; ++c) clip.at(t, y, x, c) = g;
      }
    }
  }
  if (r.blur) blur_frame(clip, t, r.blur_sigma);
  if (r.solarize) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          float& v = clip.at(t, y, x, c);
          if (v >= r.solarize_threshold) v = 1.0f - v;
        }
      }
    }
  }
}

View apply_augmentations(const View& view, Rng& rng, bool flip_allowed,
                         const AugmentConfig& config) {
  View out = view;
  out.frame_aug.clear();
  if (config.temporally_consistent) {
    out.aug = draw_aug_record(rng, view.role, flip_allowed, config);
    for (int t = 0; t < out.frames.frames; ++t) apply_aug_record(out.frames, t, out.aug);
  } else {
    out.aug = AugRecord{};
    for (int t = 0; t < out.frames.frames; ++t) {
      out.frame_aug.push_back(draw_aug_record(rng, view.role, flip_allowed, config));
      apply_aug_record(out.frames, t, out.frame_aug.back());
    }
  }
  return out;
}

double crop_area_fraction(const View& view, const RawVideo& video) {
  return static_cast<double>(view.window.height) * view.window.width /
         (static_cast<double>(video.height) * video.width);
}

}  // namespace svt
