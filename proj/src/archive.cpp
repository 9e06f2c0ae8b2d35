// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace svt {
namespace {

constexpr const char* kManifestMagic = "svt-archive";
constexpr int kManifestVersion = 1;

std::string shape_to_string(const std::vector<int>& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<int> parse_shape(const std::string& text) {
  std::vector<int> shape;
  if (text == "scalar") return shape;
  std::stringstream ss(text);
  std::string dim;
  while (std::getline(ss, dim, 'x')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(dim, &used);
      if (used != dim.size() || v < 0) throw std::invalid_argument(dim);
      shape.push_back(v);
    } catch (const std::exception&) {
      throw DataError("bad tensor shape '" + text + "'");
    }
  }
  return shape;
}

std::size_t shape_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void encode_f32(float v, unsigned char* out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
}

float decode_f32(const unsigned char* in) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::filesystem::path payload_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".f32";
  return p;
}

void TensorArchive::add(const std::string& name, std::vector<int> shape, std::span<const float> values) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw UsageError("invalid tensor name '" + name + "'");
  }
  if (index_.count(name)) throw UsageError("duplicate tensor '" + name + "'");
  if (shape_count(shape) != values.size()) {
    throw UsageError("tensor '" + name + "' has " + std::to_string(values.size()) +
                     " values but shape " + shape_to_string(shape));
  }
  ArchiveEntry e;
  e.name = name;
  e.shape = std::move(shape);
  e.offset = payload_.size() * sizeof(float);
  e.count = values.size();
  payload_.insert(payload_.end(), values.begin(), values.end());
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
}

bool TensorArchive::contains(const std::string& name) const { return index_.count(name) != 0; }

const ArchiveEntry& TensorArchive::entry(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw DataError("archive has no tensor '" + name + "'");
  return entries_[it->second];
}

std::span<const float> TensorArchive::get(const std::string& name) const {
  const auto& e = entry(name);
  return std::span<const float>(payload_).subspan(e.offset / sizeof(float), e.count);
}

void TensorArchive::set_meta(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of(" \t\n") != std::string::npos) {
    throw UsageError("invalid metadata key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw UsageError("metadata value for '" + key + "' spans lines");
  meta_[key] = value;
}

const std::string& TensorArchive::meta(const std::string& key) const {
  const auto it = meta_.find(key);
  if (it == meta_.end()) throw DataError("archive has no metadata '" + key + "'");
  return it->second;
}

void TensorArchive::write(const std::filesystem::path& manifest) const {
  const auto payload_file = payload_path_for(manifest);
  std::vector<unsigned char> bytes(payload_.size() * 4);
  for (std::size_t i = 0; i < payload_.size(); ++i) encode_f32(payload_[i], bytes.data() + 4 * i);
  {
    std::ofstream os(payload_file, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + payload_file.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed: " + payload_file.string());
  }
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw DataError("cannot open " + manifest.string() + " for writing");
  os << kManifestMagic << ' ' << kManifestVersion << '\n';
  os << "payload " << payload_file.filename().string() << '\n';
  os << "payload_bytes " << bytes.size() << '\n';
  for (const auto& [k, v] : meta_) os << "meta " << k << ' ' << v << '\n';
  for (const auto& e : entries_) {
    os << "tensor " << e.name << ' ' << shape_to_string(e.shape) << ' ' << e.offset << '\n';
  }
  if (!os) throw DataError("write failed: " + manifest.string());
}

TensorArchive TensorArchive::read(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw DataError("cannot open checkpoint manifest " + manifest.string());
  const std::string where = manifest.string() + ": ";
  std::string line;
  if (!std::getline(is, line)) throw DataError(where + "empty manifest");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kManifestMagic) throw DataError(where + "not a checkpoint manifest");
    if (version != kManifestVersion) {
      throw DataError(where + "unsupported manifest version " + std::to_string(version));
    }
  }
  TensorArchive out;
  std::string payload_name;
  std::size_t payload_bytes = 0;
  bool have_bytes = false;
  struct Pending {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Pending> pending;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "payload") {
      ls >> payload_name;
    } else if (kind == "payload_bytes") {
      ls >> payload_bytes;
      if (!ls) throw DataError(where + "bad payload_bytes line");
      have_bytes = true;
    } else if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      out.meta_[key] = value;
    } else if (kind == "tensor") {
      Pending p;
      std::string shape;
      ls >> p.name >> shape >> p.offset;
      if (!ls) throw DataError(where + "bad tensor line '" + line + "'");
      p.shape = parse_shape(shape);
      pending.push_back(std::move(p));
    } else {
      throw DataError(where + "unknown manifest entry '" + kind + "'");
    }
  }
  if (payload_name.empty() || !have_bytes) throw DataError(where + "manifest lacks payload description");
  if (payload_bytes % 4 != 0) throw DataError(where + "payload length is not a multiple of 4");

  const auto payload_file = manifest.parent_path() / payload_name;
  std::ifstream ps(payload_file, std::ios::binary);
  if (!ps) throw DataError("cannot open checkpoint payload " + payload_file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(ps)), std::istreambuf_iterator<char>());
  if (bytes.size() != payload_bytes) {
    throw DataError(payload_file.string() + ": corrupted payload: expected " + std::to_string(payload_bytes) +
                    " bytes, found " + std::to_string(bytes.size()));
  }
  out.payload_.resize(payload_bytes / 4);
  for (std::size_t i = 0; i < out.payload_.size(); ++i) out.payload_[i] = decode_f32(bytes.data() + 4 * i);

  for (auto& p : pending) {
    const std::size_t count = shape_count(p.shape);
    if (p.offset % 4 != 0 || p.offset + count * 4 > payload_bytes) {
      throw DataError(where + "tensor '" + p.name + "' lies outside the payload");
    }
    if (out.index_.count(p.name)) throw DataError(where + "duplicate tensor '" + p.name + "'");
    out.index_[p.name] = out.entries_.size();
    out.entries_.push_back({p.name, std::move(p.shape), p.offset, count});
  }
  return out;
}

bool TensorArchive::operator==(const TensorArchive& other) const {
  if (meta_ != other.meta_ || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) return false;
  }
  return payload_.size() == other.payload_.size() &&
         std::memcmp(payload_.data(), other.payload_.data(), payload_.size() * sizeof(float)) == 0;
}

void add_params(TensorArchive& archive, const std::string& prefix, const ModelParams<float>& params) {
  for (const auto& t : params.layout->tensors()) {
    archive.add(prefix + t.name, t.shape, std::span<const float>(params.values).subspan(t.offset, t.size));
  }
}

void load_params(const TensorArchive& archive, const std::string& prefix, ModelParams<float>& params) {
  for (const auto& t : params.layout->tensors()) {
    const auto& e = archive.entry(prefix + t.name);
    if (e.shape != t.shape) {
      throw DataError("tensor '" + prefix + t.name + "' has shape " + shape_to_string(e.shape) +
                      ", expected " + shape_to_string(t.shape));
    }
    const auto values = archive.get(prefix + t.name);
    std::copy(values.begin(), values.end(), params.values.begin() + static_cast<std::ptrdiff_t>(t.offset));
  }
}

}  // namespace svt
