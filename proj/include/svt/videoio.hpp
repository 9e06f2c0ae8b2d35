// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace svt {

/// Uncompressed 8-bit video, frames stored in (frame, row, column, channel) order.
struct RawVideo {
  std::uint32_t frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 3;
  std::vector<std::uint8_t> data;

  RawVideo() = default;
  RawVideo(std::uint32_t n, std::uint32_t h, std::uint32_t w, std::uint32_t c = 3)
      : frames(n), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(n) * h * w * c, 0) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * channels; }
  std::uint8_t& at(std::uint32_t t, std::uint32_t y, std::uint32_t x, std::uint32_t c) {
    return data[t * frame_size() + (static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(std::uint32_t t, std::uint32_t y, std::uint32_t x, std::uint32_t c) const {
    return data[t * frame_size() + (static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const RawVideo&) const = default;
};

inline constexpr std::size_t kSvtvidHeaderBytes = 24;
inline constexpr std::uint16_t kSvtvidVersion = 1;

/// Writes the `.svtvid` container. Throws DataError on I/O failure or when
/// `video.data` does not match the declared dimensions.
void write_raw_video(const RawVideo& video, const std::filesystem::path& path);

/// Reads a `.svtvid` file. Throws DataError with "bad magic", "empty video",
/// "zero dimension" or "truncated payload".
RawVideo read_raw_video(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_raw_video(const RawVideo& video);
RawVideo decode_raw_video(const std::vector<std::uint8_t>& bytes);

enum class MotionClass : int { kRight = 0, kLeft = 1, kDown = 2, kUp = 3 };
enum class Background : int { kSolid = 0, kNoise = 1, kGradient = 2 };

inline constexpr int kMotionClassCount = 4;

std::string_view motion_class_name(MotionClass c);

struct SyntheticSpec {
  MotionClass motion = MotionClass::kRight;
  int n_frames = 16;
  int height = 32;
  int width = 32;
  int object_size = 6;
  double speed = 1.0;  // pixels per frame
  Background background = Background::kSolid;
  std::uint64_t seed = 0;
};

struct LabeledVideo {
  RawVideo video;
  int label = 0;
};

/// Renders a filled square moving in a straight line. The result is a pure
/// function of `spec`; motion classes sharing a seed share every random draw,
/// so opposite directions are exact mirror images of each other.
/// Throws UsageError if the trajectory cannot fit inside the frame.
LabeledVideo generate_synthetic_video(const SyntheticSpec& spec);

}  // namespace svt
