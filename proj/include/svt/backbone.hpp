// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svt/common.hpp"

namespace svt {

/// Longest clip accepted by forward(); training views use at most max_frames.
inline constexpr int kMaxInferenceFrames = 64;

struct BackboneConfig {
  int embed_dim = 64;
  int n_blocks = 4;
  int n_heads = 4;
  int patch_size = 16;
  // Side of the largest (global) view. The learned spatial table is
  // (max_image_size / patch_size)^2 tokens, 14 x 14 at the defaults.
  int max_image_size = 224;
  int max_frames = 16;
  int proj_dim = 32;
  int mlp_ratio = 4;
  int head_hidden_mult = 4;
  // Width of the L2-normalized bottleneck before the last head layer; 0 uses embed_dim.
  int head_bottleneck = 0;
  double init_std = 0.02;
  double norm_eps = 1e-6;

  int spatial_grid() const { return max_image_size / patch_size; }
  int max_spatial_tokens() const { return spatial_grid() * spatial_grid(); }
  int max_temporal_tokens() const { return max_frames; }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int head_dim() const { return embed_dim / n_heads; }
  int head_hidden() const { return head_hidden_mult * embed_dim; }
  int bottleneck() const { return head_bottleneck > 0 ? head_bottleneck : embed_dim; }

  /// Throws UsageError on inconsistent values.
  void validate() const;
  /// Canonical text used in checkpoint digests.
  std::string canonical() const;
  bool operator==(const BackboneConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool weight_decay = true;
};

struct LinearSlot {
  std::size_t weight = 0;  // [in x out], row-major
  std::size_t bias = 0;
  int in = 0;
  int out = 0;
};

struct NormSlot {
  std::size_t scale = 0;
  std::size_t shift = 0;
  int dim = 0;
};

struct BlockSlots {
  NormSlot temporal_norm;
  LinearSlot temporal_qkv;
  LinearSlot temporal_proj;
  NormSlot spatial_norm;
  LinearSlot spatial_qkv;
  LinearSlot spatial_proj;
  NormSlot mlp_norm;
  LinearSlot fc1;
  LinearSlot fc2;
};

/// Placement of every named tensor inside one flat parameter buffer.
class ParamLayout {
 public:
  explicit ParamLayout(const BackboneConfig& config);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::size_t size() const { return size_; }
  const TensorInfo* find(std::string_view name) const;

  LinearSlot patch;
  std::size_t pos_spatial = 0;
  std::size_t pos_temporal = 0;
  std::size_t cls = 0;
  std::vector<BlockSlots> blocks;
  NormSlot final_norm;
  std::array<LinearSlot, 3> head;
  // Weight-normalized last layer [bottleneck x proj_dim], no bias.
  std::size_t head_last = 0;

 private:
  std::size_t add(std::string name, std::vector<int> shape, bool decay);
  LinearSlot add_linear(const std::string& name, int in, int out);
  NormSlot add_norm(const std::string& name, int dim);

  std::vector<TensorInfo> tensors_;
  std::size_t size_ = 0;
};

template <typename Real>
struct ModelParams {
  BackboneConfig config;
  std::shared_ptr<const ParamLayout> layout;
  std::vector<Real> values;

  /// Truncated-normal weights (sigma = init_std, cut at 2 sigma), zero biases,
  /// unit normalization scales.
  static ModelParams init(const BackboneConfig& config, std::uint64_t seed);
  static ModelParams zeros(const BackboneConfig& config);

  std::span<Real> tensor(std::string_view name);
  std::span<const Real> tensor(std::string_view name) const;
  bool all_finite() const;

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.config = config;
    out.layout = layout;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

/// Interpolation taps for one target position.
struct InterpTap {
  int source = 0;
  double weight = 0.0;
};
using InterpPlan = std::vector<std::vector<InterpTap>>;

/// Corner-aligned linear interpolation from src_len to dst_len positions.
InterpPlan linear_plan(int src_len, int dst_len);
/// Corner-aligned bilinear interpolation between row-major grids.
InterpPlan bilinear_plan(int src_h, int src_w, int dst_h, int dst_w);

/// Resizes a [len x dim] temporal table.
template <typename Real>
std::vector<Real> interpolate_positional(std::span<const Real> table, int src_len, int dim,
                                         int target_len);
/// Resizes a [h x w x dim] spatial table.
template <typename Real>
std::vector<Real> interpolate_positional(std::span<const Real> table, int src_h, int src_w,
                                         int dim, int target_h, int target_w);

/// Attention probabilities of one block.
template <typename Real>
struct BlockAttention {
  int frames = 0;
  int spatial_tokens = 0;
  int heads = 0;
  std::vector<Real> temporal;  // [S][heads][T][T]
  std::vector<Real> spatial;   // [T][heads][S+1][S+1], index 0 is the class token
};

/// Activations retained by forward() for the backward pass.
template <typename Real>
struct ForwardTape {
  struct Norm {
    std::vector<Real> out;
    std::vector<Real> xhat;
    std::vector<Real> rstd;
  };
  struct Block {
    Norm temporal_norm;
    std::vector<Real> temporal_qkv;
    std::vector<Real> temporal_ctx;
    Norm spatial_norm;
    std::vector<Real> spatial_qkv;
    std::vector<Real> spatial_ctx;
    Norm mlp_norm;
    std::vector<Real> fc1_pre;
    std::vector<Real> fc1_act;
    BlockAttention<Real> attention;
  };

  int frames = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<Real> patches;  // [T*S x patch_dim]
  InterpPlan spatial_plan;
  InterpPlan temporal_plan;
  std::vector<Block> blocks;
  Norm final_norm;
  std::vector<Real> head_pre0;
  std::vector<Real> head_act0;
  std::vector<Real> head_pre1;
  std::vector<Real> head_act1;
  std::vector<Real> head_unit;  // L2-normalized bottleneck
  Real head_norm = 0;

  int spatial_tokens() const { return grid_h * grid_w; }
};

template <typename Real>
struct ForwardResult {
  std::vector<Real> projected;     // length proj_dim
  std::vector<Real> cls_backbone;  // length embed_dim
  std::vector<BlockAttention<Real>> attention;
};

/// Splits each frame into patch_size x patch_size x 3 patches and projects
/// them. Returns [T x S x embed_dim] without positional terms.
template <typename Real>
std::vector<Real> tokenize(const ModelParams<Real>& params, const Clip& clip);

/// Throws UsageError if the clip shape cannot be processed.
void check_clip_shape(const BackboneConfig& config, const Clip& clip);

template <typename Real>
ForwardResult<Real> forward(const ModelParams<Real>& params, const Clip& clip,
                            ForwardTape<Real>* tape = nullptr, bool keep_attention = false);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(projected).
template <typename Real>
void backward(const ModelParams<Real>& params, const ForwardTape<Real>& tape,
              std::span<const Real> grad_projected, std::span<Real> grads);

/// Convenience: forward + backward from scratch, returning fresh gradients.
template <typename Real>
std::vector<Real> backward(const ModelParams<Real>& params, const Clip& clip,
                           std::span<const Real> grad_projected);

}  // namespace svt
