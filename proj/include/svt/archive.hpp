// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svt/backbone.hpp"

namespace svt {

struct ArchiveEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // in bytes from the start of the payload
  std::size_t count = 0;   // number of f32 values
};

/// Named f32 tensors plus string metadata. On disk this is a text manifest
/// and a contiguous little-endian f32 payload stored next to it.
class TensorArchive {
 public:
  void add(const std::string& name, std::vector<int> shape, std::span<const float> values);
  bool contains(const std::string& name) const;
  /// Throws DataError if the tensor is absent.
  std::span<const float> get(const std::string& name) const;
  const ArchiveEntry& entry(const std::string& name) const;
  const std::vector<ArchiveEntry>& entries() const { return entries_; }

  void set_meta(const std::string& key, const std::string& value);
  /// Throws DataError if the key is absent.
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  const std::map<std::string, std::string>& all_meta() const { return meta_; }

  const std::vector<float>& payload() const { return payload_; }

  /// Writes `manifest` and `<manifest>.f32`.
  void write(const std::filesystem::path& manifest) const;
  static TensorArchive read(const std::filesystem::path& manifest);

  bool operator==(const TensorArchive& other) const;

 private:
  std::vector<ArchiveEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> meta_;
  std::vector<float> payload_;
};

std::filesystem::path payload_path_for(const std::filesystem::path& manifest);

/// Stores every parameter tensor as `<prefix><name>`.
void add_params(TensorArchive& archive, const std::string& prefix, const ModelParams<float>& params);
/// Fills `params` (already shaped) from `<prefix><name>` tensors; shapes must match.
void load_params(const TensorArchive& archive, const std::string& prefix, ModelParams<float>& params);

}  // namespace svt
