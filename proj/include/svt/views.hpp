// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "svt/common.hpp"
#include "svt/videoio.hpp"

namespace svt {

enum class ViewRole { kGlobal, kLocal };

/// Parameters of one draw of the spatial augmentations. A view carries one
/// record, and every frame of the view is transformed with it.
struct AugRecord {
  bool flip = false;
  bool jitter = false;
  double brightness = 1.0;  // multiplicative factors
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  // fraction of a full turn
  bool grayscale = false;
  bool blur = false;
  double blur_sigma = 0.0;  // in output pixels
  bool solarize = false;
  double solarize_threshold = 0.5;

  bool operator==(const AugRecord&) const = default;
};

struct SpatialWindow {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  bool operator==(const SpatialWindow&) const = default;
};

struct View {
  Clip frames;
  std::vector<int> source_indices;
  ViewRole role = ViewRole::kGlobal;
  SpatialWindow window;
  AugRecord aug;
  // Only populated when temporally consistent augmentation is disabled; then
  // frame t was transformed with frame_aug[t] instead of `aug`.
  std::vector<AugRecord> frame_aug;

  int frame_count() const { return frames.frames; }
  bool operator==(const View&) const = default;
};

struct ViewSet {
  std::array<View, 2> globals;  // globals[0]: low frame rate, globals[1]: high
  std::vector<View> locals;
};

struct AugmentConfig {
  double p_jitter = 0.8;
  double p_grayscale = 0.2;
  double p_blur = 0.1;
  double p_solarize = 0.2;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.2;
  double hue = 0.1;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double solarize_threshold = 0.5;
  double p_flip = 0.5;
  bool temporally_consistent = true;
  bool enabled = true;
};

enum class TemporalSampler { kMotion, kInterval };

struct ViewConfig {
  int global_size = 224;
  int local_size = 96;
  int global_low_frames = 8;
  int global_high_frames = 16;
  std::vector<int> local_frame_choices{2, 4, 8, 16};
  int n_locals = 8;
  double local_area_min = 0.3;
  double local_area_max = 0.5;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  // With resize disabled, views keep their source crop resolution.
  bool resize = true;
  // Ablation toggles: local views differ from globals spatially / temporally.
  bool spatial_variation = true;
  bool temporal_variation = true;
  TemporalSampler sampler = TemporalSampler::kMotion;
  double tis_geometric_p = 0.05;
  bool flip_allowed = false;
  AugmentConfig aug;
};

/// floor(linspace(start, start + length - 1, count)), computed in integers.
std::vector<int> uniform_indices(int start, int length, int count);

/// Window length used by global views: ceil(0.9 * n), at least `frame_count`.
int global_window_length(int n_frames, int frame_count);
/// Window length used by local views: ceil(n / 8), at least `frame_count`.
int local_window_length(int n_frames, int frame_count);

/// Crops `window` from the selected frames and resizes it to out_h x out_w with
/// corner-aligned bilinear interpolation. Intensities are scaled to [0, 1].
Clip extract_clip(const RawVideo& video, const std::vector<int>& indices,
                  const SpatialWindow& window, int out_h, int out_w);

/// Corner-aligned bilinear resize of every frame of `clip`.
Clip resize_clip(const Clip& clip, int out_h, int out_w);

View sample_global_view(const RawVideo& video, int frame_count, Rng& rng,
                        const ViewConfig& config = {});
View sample_local_view(const RawVideo& video, int frame_count, Rng& rng,
                       const ViewConfig& config = {});
/// Two sub-clips separated by a gap drawn from a truncated geometric law.
View sample_tis_view(const RawVideo& video, int frame_count, Rng& rng,
                     const ViewConfig& config = {});
ViewSet sample_view_set(const RawVideo& video, Rng& rng, const ViewConfig& config = {});

/// Draws one AugRecord (or one per frame when temporal consistency is off) and
/// applies it. Blur and solarization only apply to global views.
View apply_augmentations(const View& view, Rng& rng, bool flip_allowed,
                         const AugmentConfig& config = {});

AugRecord draw_aug_record(Rng& rng, ViewRole role, bool flip_allowed, const AugmentConfig& config);

/// Applies a recorded augmentation to frame `t` of `clip` in place.
void apply_aug_record(Clip& clip, int t, const AugRecord& record);

/// Area of the source crop relative to the full frame.
double crop_area_fraction(const View& view, const RawVideo& video);

}  // namespace svt
