// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/videoio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "svt/common.hpp"

namespace svt {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'S', 'V', 'T', 'V'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::vector<std::uint8_t> encode_raw_video(const RawVideo& video) {
  const std::size_t payload =
      static_cast<std::size_t>(video.frames) * video.height * video.width * video.channels;
  if (video.data.size() != payload) {
    throw DataError("frame data size " + std::to_string(video.data.size()) +
                    " does not match header dimensions (" + std::to_string(payload) + ")");
  }
  std::vector<std::uint8_t> header;
  header.insert(header.end(), kMagic.begin(), kMagic.end());
  put_u16(header, kSvtvidVersion);
  put_u16(header, 0);
  put_u32(header, video.frames);
  put_u32(header, video.height);
  put_u32(header, video.width);
  put_u32(header, video.channels);
  std::vector<std::uint8_t> out(kSvtvidHeaderBytes + payload);
  std::copy(header.begin(), header.end(), out.begin());
  std::copy(video.data.begin(), video.data.end(), out.begin() + kSvtvidHeaderBytes);
  return out;
}

RawVideo decode_raw_video(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kSvtvidHeaderBytes) throw DataError("truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw DataError("bad magic");
  const std::uint16_t version = get_u16(bytes.data() + 4);
  if (version != kSvtvidVersion) {
    throw DataError("unsupported format version " + std::to_string(version));
  }
  RawVideo v;
  v.frames = get_u32(bytes.data() + 8);
  v.height = get_u32(bytes.data() + 12);
  v.width = get_u32(bytes.data() + 16);
  v.channels = get_u32(bytes.data() + 20);
  if (v.frames == 0) throw DataError("empty video");
  if (v.height == 0 || v.width == 0 || v.channels == 0) throw DataError("zero dimension");
  const std::size_t payload = static_cast<std::size_t>(v.frames) * v.height * v.width * v.channels;
  if (bytes.size() - kSvtvidHeaderBytes < payload) throw DataError("truncated payload");
  if (bytes.size() - kSvtvidHeaderBytes > payload) throw DataError("trailing bytes after payload");
  v.data.assign(bytes.begin() + kSvtvidHeaderBytes, bytes.end());
  return v;
}

void write_raw_video(const RawVideo& video, const std::filesystem::path& path) {
  const auto bytes = encode_raw_video(video);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

RawVideo read_raw_video(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_raw_video(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string_view motion_class_name(MotionClass c) {
  switch (c) {
    case MotionClass::kRight: return "move-right";
    case MotionClass::kLeft: return "move-left";
    case MotionClass::kDown: return "move-down";
    case MotionClass::kUp: return "move-up";
  }
  return "unknown";
}

LabeledVideo generate_synthetic_video(const SyntheticSpec& spec) {
  if (spec.n_frames <= 0 || spec.height <= 0 || spec.width <= 0 || spec.object_size <= 0) {
    throw UsageError("synthetic video dimensions must be positive");
  }
  if (spec.speed < 0.0) throw UsageError("speed must be non-negative");
  const bool horizontal = spec.motion == MotionClass::kRight || spec.motion == MotionClass::kLeft;
  const bool negative = spec.motion == MotionClass::kLeft || spec.motion == MotionClass::kUp;
  const int along_extent = horizontal ? spec.width : spec.height;
  const int cross_extent = horizontal ? spec.height : spec.width;
  const int travel = static_cast<int>(std::lround(spec.speed * (spec.n_frames - 1)));
  const int slack = along_extent - spec.object_size - travel;
  if (slack < 0 || cross_extent < spec.object_size) {
    throw UsageError("trajectory of " + std::to_string(travel) + " px with object size " +
                     std::to_string(spec.object_size) + " does not fit in the frame");
  }

  // Every draw happens in the same order regardless of the motion class.
  Rng rng(spec.seed);
  const int along_start = static_cast<int>(rng.uniform_int(0, slack));
  const int cross_pos = static_cast<int>(rng.uniform_int(0, cross_extent - spec.object_size));
  std::array<double, 3> object{};
  for (auto& c : object) c = rng.uniform(150.0, 255.0);
  std::array<double, 3> bg0{};
  std::array<double, 3> bg1{};
  for (auto& c : bg0) c = rng.uniform(0.0, 100.0);
  for (auto& c : bg1) c = rng.uniform(0.0, 100.0);
  const std::uint64_t noise_seed = rng.next_u64();

  RawVideo v(static_cast<std::uint32_t>(spec.n_frames), static_cast<std::uint32_t>(spec.height),
             static_cast<std::uint32_t>(spec.width), 3);
  std::vector<std::uint8_t> background(v.frame_size());
  Rng noise(noise_seed);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double value = bg0[static_cast<std::size_t>(c)];
        switch (spec.background) {
          case Background::kSolid: break;
          case Background::kNoise: value = noise.uniform(0.0, 100.0); break;
          case Background::kGradient: {
            const double a = spec.width > 1 ? static_cast<double>(x) / (spec.width - 1) : 0.0;
            value = (1.0 - a) * bg0[static_cast<std::size_t>(c)] + a * bg1[static_cast<std::size_t>(c)];
            break;
          }
        }
        background[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c] = clamp_u8(value);
      }
    }
  }

  const int far = along_extent - spec.object_size;
  for (int t = 0; t < spec.n_frames; ++t) {
    int along = along_start + static_cast<int>(std::lround(spec.speed * t));
    if (negative) along = far - along;
    const int ox = horizontal ? along : cross_pos;
    const int oy = horizontal ? cross_pos : along;
    std::uint8_t* frame = v.data.data() + static_cast<std::size_t>(t) * v.frame_size();
    std::copy(background.begin(), background.end(), frame);
    for (int y = oy; y < oy + spec.object_size; ++y) {
      for (int x = ox; x < ox + spec.object_size; ++x) {
        for (int c = 0; c < 3; ++c) {
          frame[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c] =
              clamp_u8(object[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return {std::move(v), static_cast<int>(spec.motion)};
}

}  // namespace svt
