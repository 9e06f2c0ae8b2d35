// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "svt/kernels.hpp"

namespace svt {

void BackboneConfig::validate() const {
  if (embed_dim <= 0 || n_blocks <= 0 || n_heads <= 0 || patch_size <= 0 || proj_dim <= 0 ||
      max_frames <= 0 || mlp_ratio <= 0 || head_hidden_mult <= 0 || head_bottleneck < 0) {
    throw UsageError("backbone dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) throw UsageError("embed_dim must be divisible by n_heads");
  if (max_image_size % patch_size != 0) {
    throw UsageError("max_image_size must be divisible by patch_size");
  }
  if (!(init_std > 0.0) || !(norm_eps > 0.0)) throw UsageError("init_std and norm_eps must be positive");
}

std::string BackboneConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "embed_dim=" << embed_dim << ";n_blocks=" << n_blocks << ";n_heads=" << n_heads
     << ";patch_size=" << patch_size << ";max_image_size=" << max_image_size
     << ";max_frames=" << max_frames << ";proj_dim=" << proj_dim << ";mlp_ratio=" << mlp_ratio
     << ";head_hidden_mult=" << head_hidden_mult << ";head_bottleneck=" << head_bottleneck << ";init_std=" << init_std
     << ";norm_eps=" << norm_eps;
  return os.str();
}

// ---------------------------------------------------------------------------
// Layout

std::size_t ParamLayout::add(std::string name, std::vector<int> shape, bool decay) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  TensorInfo info{std::move(name), std::move(shape), size_, n, decay};
  tensors_.push_back(std::move(info));
  size_ += n;
  return tensors_.back().offset;
}

LinearSlot ParamLayout::add_linear(const std::string& name, int in, int out) {
  LinearSlot s;
  s.in = in;
  s.out = out;
  s.weight = add(name + ".weight", {in, out}, true);
  s.bias = add(name + ".bias", {out}, true);
  return s;
}

NormSlot ParamLayout::add_norm(const std::string& name, int dim) {
  NormSlot s;
  s.dim = dim;
  s.scale = add(name + ".scale", {dim}, false);
  s.shift = add(name + ".shift", {dim}, false);
  return s;
}

ParamLayout::ParamLayout(const BackboneConfig& c) {
  c.validate();
  const int d = c.embed_dim;
  patch = add_linear("patch_embed", c.patch_dim(), d);
  pos_spatial = add("pos_spatial", {c.spatial_grid(), c.spatial_grid(), d}, true);
  pos_temporal = add("pos_temporal", {c.max_frames, d}, true);
  cls = add("cls_token", {d}, false);
  for (int b = 0; b < c.n_blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    BlockSlots s;
    s.temporal_norm = add_norm(p + "temporal_norm", d);
    s.temporal_qkv = add_linear(p + "temporal_attn.qkv", d, 3 * d);
    s.temporal_proj = add_linear(p + "temporal_attn.proj", d, d);
    s.spatial_norm = add_norm(p + "spatial_norm", d);
    s.spatial_qkv = add_linear(p + "spatial_attn.qkv", d, 3 * d);
    s.spatial_proj = add_linear(p + "spatial_attn.proj", d, d);
    s.mlp_norm = add_norm(p + "mlp_norm", d);
    s.fc1 = add_linear(p + "mlp.fc1", d, c.mlp_ratio * d);
    s.fc2 = add_linear(p + "mlp.fc2", c.mlp_ratio * d, d);
    blocks.push_back(s);
  }
  final_norm = add_norm("final_norm", d);
  head[0] = add_linear("head.0", d, c.head_hidden());
  head[1] = add_linear("head.1", c.head_hidden(), c.head_hidden());
  head[2] = add_linear("head.2", c.head_hidden(), c.bottleneck());
  head_last = add("head.last.weight", {c.bottleneck(), c.proj_dim}, true);
}

const TensorInfo* ParamLayout::find(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::zeros(const BackboneConfig& config) {
  ModelParams p;
  p.config = config;
  p.layout = std::make_shared<const ParamLayout>(config);
  p.values.assign(p.layout->size(), Real(0));
  return p;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::init(const BackboneConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  Rng rng(seed);
  auto trunc_normal = [&]() {
    for (;;) {
      const double z = rng.normal();
      if (std::abs(z) <= 2.0) return static_cast<Real>(z * config.init_std);
    }
  };
  for (const auto& t : p.layout->tensors()) {
    auto* data = p.values.data() + t.offset;
    const bool is_scale = t.name.size() > 6 && t.name.ends_with(".scale");
    const bool is_zero = t.name.ends_with(".bias") || t.name.ends_with(".shift");
    for (std::size_t i = 0; i < t.size; ++i) {
      data[i] = is_scale ? Real(1) : (is_zero ? Real(0) : trunc_normal());
    }
  }
  return p;
}

template <typename Real>
std::span<Real> ModelParams<Real>::tensor(std::string_view name) {
  const TensorInfo* t = layout->find(name);
  if (!t) throw UsageError("unknown parameter tensor " + std::string(name));
  return {values.data() + t->offset, t->size};
}

template <typename Real>
std::span<const Real> ModelParams<Real>::tensor(std::string_view name) const {
  const TensorInfo* t = layout->find(name);
  if (!t) throw UsageError("unknown parameter tensor " + std::string(name));
  return {values.data() + t->offset, t->size};
}

template <typename Real>
bool ModelParams<Real>::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](Real v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Positional interpolation

InterpPlan linear_plan(int src_len, int dst_len) {
  InterpPlan plan(static_cast<std::size_t>(dst_len));
  for (int i = 0; i < dst_len; ++i) {
    const double pos = dst_len > 1 ? static_cast<double>(i) * (src_len - 1) / (dst_len - 1) : 0.0;
    const int lo = std::min(static_cast<int>(pos), src_len - 1);
    const double frac = pos - lo;
    auto& taps = plan[static_cast<std::size_t>(i)];
    taps.push_back({lo, 1.0 - frac});
    if (frac > 0.0 && lo + 1 < src_len) taps.push_back({lo + 1, frac});
  }
  return plan;
}

InterpPlan bilinear_plan(int src_h, int src_w, int dst_h, int dst_w) {
  const InterpPlan rows = linear_plan(src_h, dst_h);
  const InterpPlan cols = linear_plan(src_w, dst_w);
  InterpPlan plan(static_cast<std::size_t>(dst_h) * dst_w);
  for (int y = 0; y < dst_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      auto& taps = plan[static_cast<std::size_t>(y) * dst_w + x];
      for (const auto& ry : rows[static_cast<std::size_t>(y)]) {
        for (const auto& cx : cols[static_cast<std::size_t>(x)]) {
          taps.push_back({ry.source * src_w + cx.source, ry.weight * cx.weight});
        }
      }
    }
  }
  return plan;
}

namespace {

template <typename Real>
std::vector<Real> apply_plan(const InterpPlan& plan, const Real* table, int dim) {
  std::vector<Real> out(plan.size() * static_cast<std::size_t>(dim), Real(0));
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Real* dst = out.data() + i * static_cast<std::size_t>(dim);
    const auto& taps = plan[i];
    if (taps.size() == 1 && taps[0].weight == 1.0) {
      std::copy_n(table + static_cast<std::size_t>(taps[0].source) * dim, dim, dst);
      continue;
    }
    for (const auto& tap : taps) {
      const Real w = static_cast<Real>(tap.weight);
      const Real* src = table + static_cast<std::size_t>(tap.source) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

template <typename Real>
void apply_plan_transpose(const InterpPlan& plan, const Real* grad_out, int dim, Real* grad_table) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Real* g = grad_out + i * static_cast<std::size_t>(dim);
    for (const auto& tap : plan[i]) {
      const Real w = static_cast<Real>(tap.weight);
      Real* dst = grad_table + static_cast<std::size_t>(tap.source) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += w * g[j];
    }
  }
}

}  // namespace

template <typename Real>
std::vector<Real> interpolate_positional(std::span<const Real> table, int src_len, int dim,
                                         int target_len) {
  if (src_len < 1 || target_len < 1 || dim < 1) throw UsageError("interpolation sizes must be >= 1");
  if (table.size() != static_cast<std::size_t>(src_len) * dim) throw UsageError("table size mismatch");
  return apply_plan(linear_plan(src_len, target_len), table.data(), dim);
}

template <typename Real>
std::vector<Real> interpolate_positional(std::span<const Real> table, int src_h, int src_w,
                                         int dim, int target_h, int target_w) {
  if (src_h < 1 || src_w < 1 || target_h < 1 || target_w < 1 || dim < 1) {
    throw UsageError("interpolation sizes must be >= 1");
  }
  if (table.size() != static_cast<std::size_t>(src_h) * src_w * dim) {
    throw UsageError("table size mismatch");
  }
  return apply_plan(bilinear_plan(src_h, src_w, target_h, target_w), table.data(), dim);
}

// ---------------------------------------------------------------------------
// Layer primitives

namespace {

template <typename Real>
void linear_forward(const Real* params, const LinearSlot& s, const Real* x, int rows, Real* y) {
  const Real* w = params + s.weight;
  const Real* b = params + s.bias;
  for (int r = 0; r < rows; ++r) std::copy_n(b, s.out, y + static_cast<std::size_t>(r) * s.out);
  kernels::gemm_nn(rows, s.out, s.in, x, s.in, w, s.out, y, s.out);
}

// dx may be null when the input gradient is not needed.
template <typename Real>
void linear_backward(const Real* params, const LinearSlot& s, const Real* x, const Real* dy,
                     int rows, Real* dx, Real* grads) {
  Real* db = grads + s.bias;
  for (int r = 0; r < rows; ++r) {
    const Real* g = dy + static_cast<std::size_t>(r) * s.out;
    for (int j = 0; j < s.out; ++j) db[j] += g[j];
  }
  kernels::gemm_tn(s.in, s.out, rows, x, s.in, dy, s.out, grads + s.weight, s.out);
  if (dx) kernels::gemm_nt(rows, s.in, s.out, dy, s.out, params + s.weight, s.out, dx, s.in);
}

template <typename Real>
void norm_forward(const Real* params, const NormSlot& s, const Real* x, int rows, double eps,
                  typename ForwardTape<Real>::Norm& cache) {
  const int d = s.dim;
  const std::size_t n = static_cast<std::size_t>(rows) * d;
  cache.out.resize(n);
  cache.xhat.resize(n);
  cache.rstd.resize(static_cast<std::size_t>(rows));
  const Real* gamma = params + s.scale;
  const Real* beta = params + s.shift;
  for (int r = 0; r < rows; ++r) {
    const Real* xr = x + static_cast<std::size_t>(r) * d;
    Real mean = 0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<Real>(d);
    const Real rstd = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    cache.rstd[static_cast<std::size_t>(r)] = rstd;
    Real* xh = cache.xhat.data() + static_cast<std::size_t>(r) * d;
    Real* yr = cache.out.data() + static_cast<std::size_t>(r) * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      yr[j] = xh[j] * gamma[j] + beta[j];
    }
  }
}

// Accumulates into dx.
template <typename Real>
void norm_backward(const Real* params, const NormSlot& s, const typename ForwardTape<Real>::Norm& cache,
                   const Real* dy, int rows, Real* dx, Real* grads) {
  const int d = s.dim;
  const Real* gamma = params + s.scale;
  Real* dgamma = grads + s.scale;
  Real* dbeta = grads + s.shift;
  std::vector<Real> dxhat(static_cast<std::size_t>(d));
  for (int r = 0; r < rows; ++r) {
    const Real* g = dy + static_cast<std::size_t>(r) * d;
    const Real* xh = cache.xhat.data() + static_cast<std::size_t>(r) * d;
    Real mean_dxhat = 0;
    Real mean_dxhat_xhat = 0;
    for (int j = 0; j < d; ++j) {
      dgamma[j] += g[j] * xh[j];
      dbeta[j] += g[j];
      dxhat[static_cast<std::size_t>(j)] = g[j] * gamma[j];
      mean_dxhat += dxhat[static_cast<std::size_t>(j)];
      mean_dxhat_xhat += dxhat[static_cast<std::size_t>(j)] * xh[j];
    }
    mean_dxhat /= static_cast<Real>(d);
    mean_dxhat_xhat /= static_cast<Real>(d);
    const Real rstd = cache.rstd[static_cast<std::size_t>(r)];
    Real* dxr = dx + static_cast<std::size_t>(r) * d;
    for (int j = 0; j < d; ++j) {
      dxr[j] += rstd * (dxhat[static_cast<std::size_t>(j)] - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
  }
}

template <typename Real>
Real gelu(Real x) {
  return Real(0.5) * x * (Real(1) + std::erf(x * Real(0.70710678118654752440)));
}

template <typename Real>
Real gelu_grad(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(0.70710678118654752440)));
  const Real pdf = Real(0.39894228040143267794) * std::exp(Real(-0.5) * x * x);
  return cdf + x * pdf;
}

constexpr double kHeadNormEps = 1e-12;

// Euclidean norm of each column of a [rows x cols] matrix.
template <typename Real>
std::vector<Real> column_norms(const Real* w, int rows, int cols) {
  std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < cols; ++k) {
      const double v = w[static_cast<std::size_t>(i) * cols + k];
      acc[static_cast<std::size_t>(k)] += v * v;
    }
  }
  std::vector<Real> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<Real>(std::max(std::sqrt(acc[k]), kHeadNormEps));
  return out;
}

// A batch of equal-length sequences inside a [rows x 3D] qkv buffer. Sequence
// q's element i lives at row (base(q) + i * row_stride).
struct SequenceSet {
  int count = 0;
  int length = 0;
  int row_stride = 1;
  int base_step = 0;  // base(q) = q * base_step
};

template <typename Real>
void attention_forward(const Real* qkv, int dim, int heads, const SequenceSet& seq, Real* ctx,
                       std::vector<Real>& probs) {
  const int dh = dim / heads;
  const int len = seq.length;
  const std::size_t l2 = static_cast<std::size_t>(len) * len;
  probs.assign(static_cast<std::size_t>(seq.count) * heads * l2, Real(0));
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const int ld_qkv = seq.row_stride * 3 * dim;
  const int ld_ctx = seq.row_stride * dim;
  for (int q = 0; q < seq.count; ++q) {
    const std::size_t base = static_cast<std::size_t>(q) * seq.base_step;
    for (int h = 0; h < heads; ++h) {
      const Real* qp = qkv + base * 3 * dim + static_cast<std::size_t>(h) * dh;
      const Real* kp = qp + dim;
      const Real* vp = qp + 2 * dim;
      Real* p = probs.data() + (static_cast<std::size_t>(q) * heads + h) * l2;
      kernels::gemm_nt(len, len, dh, qp, ld_qkv, kp, ld_qkv, p, len);
      for (int i = 0; i < len; ++i) {
        Real* row = p + static_cast<std::size_t>(i) * len;
        Real mx = row[0] * scale;
        for (int j = 0; j < len; ++j) {
          row[j] *= scale;
          mx = std::max(mx, row[j]);
        }
        Real sum = 0;
        for (int j = 0; j < len; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        const Real inv = Real(1) / sum;
        for (int j = 0; j < len; ++j) row[j] *= inv;
      }
      Real* cp = ctx + base * dim + static_cast<std::size_t>(h) * dh;
      kernels::gemm_nn(len, dh, len, p, len, vp, ld_qkv, cp, ld_ctx);
    }
  }
}

// Accumulates into dqkv.
template <typename Real>
void attention_backward(const Real* qkv, int dim, int heads, const SequenceSet& seq,
                        const std::vector<Real>& probs, const Real* dctx, Real* dqkv) {
  const int dh = dim / heads;
  const int len = seq.length;
  const std::size_t l2 = static_cast<std::size_t>(len) * len;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const int ld_qkv = seq.row_stride * 3 * dim;
  const int ld_ctx = seq.row_stride * dim;
  std::vector<Real> dp(l2);
  for (int q = 0; q < seq.count; ++q) {
    const std::size_t base = static_cast<std::size_t>(q) * seq.base_step;
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = base * 3 * dim + static_cast<std::size_t>(h) * dh;
      const Real* qp = qkv + off;
      const Real* kp = qp + dim;
      const Real* vp = qp + 2 * dim;
      Real* dq = dqkv + off;
      Real* dk = dq + dim;
      Real* dv = dq + 2 * dim;
      const Real* p = probs.data() + (static_cast<std::size_t>(q) * heads + h) * l2;
      const Real* dc = dctx + base * dim + static_cast<std::size_t>(h) * dh;
      std::fill(dp.begin(), dp.end(), Real(0));
      kernels::gemm_nt(len, len, dh, dc, ld_ctx, vp, ld_qkv, dp.data(), len);
      kernels::gemm_tn(len, dh, len, p, len, dc, ld_ctx, dv, ld_qkv);
      for (int i = 0; i < len; ++i) {
        const Real* pr = p + static_cast<std::size_t>(i) * len;
        Real* dr = dp.data() + static_cast<std::size_t>(i) * len;
        Real dot = 0;
        for (int j = 0; j < len; ++j) dot += pr[j] * dr[j];
        for (int j = 0; j < len; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
      }
      kernels::gemm_nn(len, dh, len, dp.data(), len, kp, ld_qkv, dq, ld_qkv);
      kernels::gemm_tn(len, dh, len, dp.data(), len, qp, ld_qkv, dk, ld_qkv);
    }
  }
}

template <typename Real>
void extract_patches(const Clip& clip, int patch, std::vector<Real>& out) {
  const int gh = clip.height / patch;
  const int gw = clip.width / patch;
  const int pd = patch * patch * clip.channels;
  out.resize(static_cast<std::size_t>(clip.frames) * gh * gw * pd);
  std::size_t idx = 0;
  for (int t = 0; t < clip.frames; ++t) {
    for (int py = 0; py < gh; ++py) {
      for (int px = 0; px < gw; ++px) {
        for (int iy = 0; iy < patch; ++iy) {
          for (int ix = 0; ix < patch; ++ix) {
            for (int c = 0; c < clip.channels; ++c) {
              out[idx++] = static_cast<Real>(clip.at(t, py * patch + iy, px * patch + ix, c));
            }
          }
        }
      }
    }
  }
}

}  // namespace

void check_clip_shape(const BackboneConfig& config, const Clip& clip) {
  if (clip.channels != 3) throw UsageError("clips must have 3 channels");
  if (clip.frames < 1 || clip.frames > kMaxInferenceFrames) {
    throw UsageError("clip has " + std::to_string(clip.frames) + " frames; supported range is 1.." +
                     std::to_string(kMaxInferenceFrames));
  }
  if (clip.height < config.patch_size || clip.width < config.patch_size ||
      clip.height % config.patch_size != 0 || clip.width % config.patch_size != 0) {
    throw UsageError("clip size " + std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                     " is not divisible by patch size " + std::to_string(config.patch_size));
  }
  if (clip.data.size() != static_cast<std::size_t>(clip.frames) * clip.frame_stride()) {
    throw UsageError("clip data size does not match its shape");
  }
}

template <typename Real>
std::vector<Real> tokenize(const ModelParams<Real>& params, const Clip& clip) {
  check_clip_shape(params.config, clip);
  std::vector<Real> patches;
  extract_patches(clip, params.config.patch_size, patches);
  const int rows = static_cast<int>(patches.size() / static_cast<std::size_t>(params.config.patch_dim()));
  std::vector<Real> tokens(static_cast<std::size_t>(rows) * params.config.embed_dim);
  linear_forward(params.values.data(), params.layout->patch, patches.data(), rows, tokens.data());
  return tokens;
}

// ---------------------------------------------------------------------------
// Forward

template <typename Real>
ForwardResult<Real> forward(const ModelParams<Real>& params, const Clip& clip,
                            ForwardTape<Real>* tape_out, bool keep_attention) {
  const BackboneConfig& c = params.config;
  const ParamLayout& L = *params.layout;
  check_clip_shape(c, clip);
  const Real* P = params.values.data();

  ForwardTape<Real> local_tape;
  ForwardTape<Real>& tape = tape_out ? *tape_out : local_tape;
  tape = ForwardTape<Real>{};

  const int d = c.embed_dim;
  const int heads = c.n_heads;
  const int T = clip.frames;
  tape.frames = T;
  tape.grid_h = clip.height / c.patch_size;
  tape.grid_w = clip.width / c.patch_size;
  const int S = tape.spatial_tokens();
  const int N = T * S;
  const std::size_t ud = static_cast<std::size_t>(d);

  extract_patches(clip, c.patch_size, tape.patches);

  // Token matrix: rows [0, N) are (t, s) tokens in t-major order, row N is class.
  std::vector<Real> x(static_cast<std::size_t>(N + 1) * ud);
  linear_forward(P, L.patch, tape.patches.data(), N, x.data());

  tape.spatial_plan = bilinear_plan(c.spatial_grid(), c.spatial_grid(), tape.grid_h, tape.grid_w);
  tape.temporal_plan = linear_plan(c.max_frames, T);
  const auto pos_s = apply_plan(tape.spatial_plan, P + L.pos_spatial, d);
  const auto pos_t = apply_plan(tape.temporal_plan, P + L.pos_temporal, d);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      Real* row = x.data() + (static_cast<std::size_t>(t) * S + s) * ud;
      const Real* ps = pos_s.data() + static_cast<std::size_t>(s) * ud;
      const Real* pt = pos_t.data() + static_cast<std::size_t>(t) * ud;
      for (int j = 0; j < d; ++j) row[j] += ps[j] + pt[j];
    }
  }
  std::copy_n(P + L.cls, d, x.data() + static_cast<std::size_t>(N) * ud);

  const int zrows = T * (S + 1);
  std::vector<Real> y;
  std::vector<Real> z(static_cast<std::size_t>(zrows) * ud);
  tape.blocks.resize(L.blocks.size());
  for (std::size_t b = 0; b < L.blocks.size(); ++b) {
    const BlockSlots& bs = L.blocks[b];
    auto& bt = tape.blocks[b];
    bt.attention.frames = T;
    bt.attention.spatial_tokens = S;
    bt.attention.heads = heads;

    // Temporal attention across frames at each spatial location.
    norm_forward(P, bs.temporal_norm, x.data(), N, c.norm_eps, bt.temporal_norm);
    bt.temporal_qkv.resize(static_cast<std::size_t>(N) * 3 * ud);
    linear_forward(P, bs.temporal_qkv, bt.temporal_norm.out.data(), N, bt.temporal_qkv.data());
    bt.temporal_ctx.assign(static_cast<std::size_t>(N) * ud, Real(0));
    attention_forward(bt.temporal_qkv.data(), d, heads, SequenceSet{S, T, S, 1},
                      bt.temporal_ctx.data(), bt.attention.temporal);
    y.resize(static_cast<std::size_t>(N) * ud);
    linear_forward(P, bs.temporal_proj, bt.temporal_ctx.data(), N, y.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(N) * ud; ++i) x[i] += y[i];

    // Spatial attention within each frame; the class token joins every frame.
    for (int t = 0; t < T; ++t) {
      Real* zt = z.data() + static_cast<std::size_t>(t) * (S + 1) * ud;
      std::copy_n(x.data() + static_cast<std::size_t>(N) * ud, d, zt);
      std::copy_n(x.data() + static_cast<std::size_t>(t) * S * ud, static_cast<std::size_t>(S) * ud, zt + ud);
    }
    norm_forward(P, bs.spatial_norm, z.data(), zrows, c.norm_eps, bt.spatial_norm);
    bt.spatial_qkv.resize(static_cast<std::size_t>(zrows) * 3 * ud);
    linear_forward(P, bs.spatial_qkv, bt.spatial_norm.out.data(), zrows, bt.spatial_qkv.data());
    bt.spatial_ctx.assign(static_cast<std::size_t>(zrows) * ud, Real(0));
    attention_forward(bt.spatial_qkv.data(), d, heads, SequenceSet{T, S + 1, 1, S + 1},
                      bt.spatial_ctx.data(), bt.attention.spatial);
    y.resize(static_cast<std::size_t>(zrows) * ud);
    linear_forward(P, bs.spatial_proj, bt.spatial_ctx.data(), zrows, y.data());
    Real* cls_row = x.data() + static_cast<std::size_t>(N) * ud;
    const Real inv_t = Real(1) / static_cast<Real>(T);
    for (int t = 0; t < T; ++t) {
      const Real* yt = y.data() + static_cast<std::size_t>(t) * (S + 1) * ud;
      for (int j = 0; j < d; ++j) cls_row[j] += inv_t * yt[j];
      Real* xt = x.data() + static_cast<std::size_t>(t) * S * ud;
      for (std::size_t i = 0; i < static_cast<std::size_t>(S) * ud; ++i) xt[i] += yt[ud + i];
    }

    // Feed-forward on every token including the class token.
    const int rows = N + 1;
    const int hidden = bs.fc1.out;
    norm_forward(P, bs.mlp_norm, x.data(), rows, c.norm_eps, bt.mlp_norm);
    bt.fc1_pre.resize(static_cast<std::size_t>(rows) * hidden);
    linear_forward(P, bs.fc1, bt.mlp_norm.out.data(), rows, bt.fc1_pre.data());
    bt.fc1_act.resize(bt.fc1_pre.size());
    for (std::size_t i = 0; i < bt.fc1_pre.size(); ++i) bt.fc1_act[i] = gelu(bt.fc1_pre[i]);
    y.resize(static_cast<std::size_t>(rows) * ud);
    linear_forward(P, bs.fc2, bt.fc1_act.data(), rows, y.data());
    for (std::size_t i = 0; i < y.size(); ++i) x[i] += y[i];
  }

  ForwardResult<Real> result;
  norm_forward(P, L.final_norm, x.data() + static_cast<std::size_t>(N) * ud, 1, c.norm_eps,
               tape.final_norm);
  result.cls_backbone = tape.final_norm.out;

  const int hh = c.head_hidden();
  tape.head_pre0.resize(static_cast<std::size_t>(hh));
  linear_forward(P, L.head[0], tape.final_norm.out.data(), 1, tape.head_pre0.data());
  tape.head_act0.resize(tape.head_pre0.size());
  for (std::size_t i = 0; i < tape.head_pre0.size(); ++i) tape.head_act0[i] = gelu(tape.head_pre0[i]);
  tape.head_pre1.resize(static_cast<std::size_t>(hh));
  linear_forward(P, L.head[1], tape.head_act0.data(), 1, tape.head_pre1.data());
  tape.head_act1.resize(tape.head_pre1.size());
  for (std::size_t i = 0; i < tape.head_pre1.size(); ++i) tape.head_act1[i] = gelu(tape.head_pre1[i]);
  const int nb = c.bottleneck();
  tape.head_unit.resize(static_cast<std::size_t>(nb));
  linear_forward(P, L.head[2], tape.head_act1.data(), 1, tape.head_unit.data());
  double sq = 0.0;
  for (Real v : tape.head_unit) sq += static_cast<double>(v) * v;
  tape.head_norm = static_cast<Real>(std::max(std::sqrt(sq), kHeadNormEps));
  for (auto& v : tape.head_unit) v /= tape.head_norm;
  result.projected.assign(static_cast<std::size_t>(c.proj_dim), Real(0));
  const auto col_norms = column_norms(P + L.head_last, nb, c.proj_dim);
  for (int i = 0; i < nb; ++i) {
    const Real zi = tape.head_unit[static_cast<std::size_t>(i)];
    const Real* row = P + L.head_last + static_cast<std::size_t>(i) * c.proj_dim;
    for (int k = 0; k < c.proj_dim; ++k) result.projected[static_cast<std::size_t>(k)] += zi * row[k];
  }
  for (int k = 0; k < c.proj_dim; ++k) result.projected[static_cast<std::size_t>(k)] /= col_norms[static_cast<std::size_t>(k)];

  if (keep_attention) {
    for (const auto& bt : tape.blocks) result.attention.push_back(bt.attention);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Backward

template <typename Real>
void backward(const ModelParams<Real>& params, const ForwardTape<Real>& tape,
              std::span<const Real> grad_projected, std::span<Real> grads_span) {
  const BackboneConfig& c = params.config;
  const ParamLayout& L = *params.layout;
  if (grad_projected.size() != static_cast<std::size_t>(c.proj_dim)) {
    throw UsageError("upstream gradient must have length proj_dim");
  }
  if (grads_span.size() != params.values.size()) throw UsageError("gradient buffer size mismatch");
  if (tape.blocks.size() != L.blocks.size()) throw UsageError("tape does not match the model");
  const Real* P = params.values.data();
  Real* G = grads_span.data();

  const int d = c.embed_dim;
  const int heads = c.n_heads;
  const int T = tape.frames;
  const int S = tape.spatial_tokens();
  const int N = T * S;
  const std::size_t ud = static_cast<std::size_t>(d);
  const int hh = c.head_hidden();

  // Projection head. projected_k = z . v_k / |v_k| with z = b / |b|.
  const int nb = c.bottleneck();
  const int np = c.proj_dim;
  const auto col_norms = column_norms(P + L.head_last, nb, np);
  std::vector<Real> projected(static_cast<std::size_t>(np), Real(0));
  for (int i = 0; i < nb; ++i) {
    const Real* row = P + L.head_last + static_cast<std::size_t>(i) * np;
    for (int k = 0; k < np; ++k) projected[static_cast<std::size_t>(k)] += tape.head_unit[static_cast<std::size_t>(i)] * row[k];
  }
  for (int k = 0; k < np; ++k) projected[static_cast<std::size_t>(k)] /= col_norms[static_cast<std::size_t>(k)];
  std::vector<Real> dunit(static_cast<std::size_t>(nb), Real(0));
  for (int i = 0; i < nb; ++i) {
    const Real zi = tape.head_unit[static_cast<std::size_t>(i)];
    const Real* row = P + L.head_last + static_cast<std::size_t>(i) * np;
    Real* grow = G + L.head_last + static_cast<std::size_t>(i) * np;
    Real acc = 0;
    for (int k = 0; k < np; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const Real u = row[k] / col_norms[uk];
      grow[k] += grad_projected[uk] * (zi - u * projected[uk]) / col_norms[uk];
      acc += u * grad_projected[uk];
    }
    dunit[static_cast<std::size_t>(i)] = acc;
  }
  Real zdot = 0;
  for (int i = 0; i < nb; ++i) zdot += tape.head_unit[static_cast<std::size_t>(i)] * dunit[static_cast<std::size_t>(i)];
  std::vector<Real> dbottleneck(static_cast<std::size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    dbottleneck[ui] = (dunit[ui] - tape.head_unit[ui] * zdot) / tape.head_norm;
  }
  std::vector<Real> dact(static_cast<std::size_t>(hh), Real(0));
  linear_backward(P, L.head[2], tape.head_act1.data(), dbottleneck.data(), 1, dact.data(), G);
  std::vector<Real> dpre(static_cast<std::size_t>(hh));
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] = dact[i] * gelu_grad(tape.head_pre1[i]);
  std::fill(dact.begin(), dact.end(), Real(0));
  linear_backward(P, L.head[1], tape.head_act0.data(), dpre.data(), 1, dact.data(), G);
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] = dact[i] * gelu_grad(tape.head_pre0[i]);
  std::vector<Real> dcls_norm(ud, Real(0));
  linear_backward(P, L.head[0], tape.final_norm.out.data(), dpre.data(), 1, dcls_norm.data(), G);

  std::vector<Real> dx(static_cast<std::size_t>(N + 1) * ud, Real(0));
  norm_backward(P, L.final_norm, tape.final_norm, dcls_norm.data(), 1,
                dx.data() + static_cast<std::size_t>(N) * ud, G);

  const int zrows = T * (S + 1);
  std::vector<Real> dy;
  std::vector<Real> dctx;
  std::vector<Real> dqkv;
  std::vector<Real> dnorm;
  for (std::size_t bi = L.blocks.size(); bi-- > 0;) {
    const BlockSlots& bs = L.blocks[bi];
    const auto& bt = tape.blocks[bi];

    // Feed-forward.
    {
      const int rows = N + 1;
      const int hidden = bs.fc1.out;
      std::vector<Real> dh(static_cast<std::size_t>(rows) * hidden, Real(0));
      linear_backward(P, bs.fc2, bt.fc1_act.data(), dx.data(), rows, dh.data(), G);
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= gelu_grad(bt.fc1_pre[i]);
      dnorm.assign(static_cast<std::size_t>(rows) * ud, Real(0));
      linear_backward(P, bs.fc1, bt.mlp_norm.out.data(), dh.data(), rows, dnorm.data(), G);
      norm_backward(P, bs.mlp_norm, bt.mlp_norm, dnorm.data(), rows, dx.data(), G);
    }

    // Spatial attention.
    {
      dy.assign(static_cast<std::size_t>(zrows) * ud, Real(0));
      const Real* dcls = dx.data() + static_cast<std::size_t>(N) * ud;
      const Real inv_t = Real(1) / static_cast<Real>(T);
      for (int t = 0; t < T; ++t) {
        Real* dyt = dy.data() + static_cast<std::size_t>(t) * (S + 1) * ud;
        for (int j = 0; j < d; ++j) dyt[j] = inv_t * dcls[j];
        std::copy_n(dx.data() + static_cast<std::size_t>(t) * S * ud, static_cast<std::size_t>(S) * ud,
                    dyt + ud);
      }
      dctx.assign(static_cast<std::size_t>(zrows) * ud, Real(0));
      linear_backward(P, bs.spatial_proj, bt.spatial_ctx.data(), dy.data(), zrows, dctx.data(), G);
      dqkv.assign(static_cast<std::size_t>(zrows) * 3 * ud, Real(0));
      attention_backward(bt.spatial_qkv.data(), d, heads, SequenceSet{T, S + 1, 1, S + 1},
                         bt.attention.spatial, dctx.data(), dqkv.data());
      dnorm.assign(static_cast<std::size_t>(zrows) * ud, Real(0));
      linear_backward(P, bs.spatial_qkv, bt.spatial_norm.out.data(), dqkv.data(), zrows, dnorm.data(), G);
      std::vector<Real> dz(static_cast<std::size_t>(zrows) * ud, Real(0));
      norm_backward(P, bs.spatial_norm, bt.spatial_norm, dnorm.data(), zrows, dz.data(), G);
      Real* dcls_mut = dx.data() + static_cast<std::size_t>(N) * ud;
      for (int t = 0; t < T; ++t) {
        const Real* dzt = dz.data() + static_cast<std::size_t>(t) * (S + 1) * ud;
        for (int j = 0; j < d; ++j) dcls_mut[j] += dzt[j];
        Real* dxt = dx.data() + static_cast<std::size_t>(t) * S * ud;
        for (std::size_t i = 0; i < static_cast<std::size_t>(S) * ud; ++i) dxt[i] += dzt[ud + i];
      }
    }

    // Temporal attention.
    {
      dctx.assign(static_cast<std::size_t>(N) * ud, Real(0));
      linear_backward(P, bs.temporal_proj, bt.temporal_ctx.data(), dx.data(), N, dctx.data(), G);
      dqkv.assign(static_cast<std::size_t>(N) * 3 * ud, Real(0));
      attention_backward(bt.temporal_qkv.data(), d, heads, SequenceSet{S, T, S, 1},
                         bt.attention.temporal, dctx.data(), dqkv.data());
      dnorm.assign(static_cast<std::size_t>(N) * ud, Real(0));
      linear_backward(P, bs.temporal_qkv, bt.temporal_norm.out.data(), dqkv.data(), N, dnorm.data(), G);
      norm_backward(P, bs.temporal_norm, bt.temporal_norm, dnorm.data(), N, dx.data(), G);
    }
  }

  // Embedding: class token, patch projection, positional tables.
  const Real* dcls = dx.data() + static_cast<std::size_t>(N) * ud;
  for (int j = 0; j < d; ++j) G[L.cls + static_cast<std::size_t>(j)] += dcls[j];
  linear_backward<Real>(P, L.patch, tape.patches.data(), dx.data(), N, nullptr, G);
  std::vector<Real> dpos_s(static_cast<std::size_t>(S) * ud, Real(0));
  std::vector<Real> dpos_t(static_cast<std::size_t>(T) * ud, Real(0));
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const Real* g = dx.data() + (static_cast<std::size_t>(t) * S + s) * ud;
      Real* gs = dpos_s.data() + static_cast<std::size_t>(s) * ud;
      Real* gt = dpos_t.data() + static_cast<std::size_t>(t) * ud;
      for (int j = 0; j < d; ++j) {
        gs[j] += g[j];
        gt[j] += g[j];
      }
    }
  }
  apply_plan_transpose(tape.spatial_plan, dpos_s.data(), d, G + L.pos_spatial);
  apply_plan_transpose(tape.temporal_plan, dpos_t.data(), d, G + L.pos_temporal);
}

template <typename Real>
std::vector<Real> backward(const ModelParams<Real>& params, const Clip& clip,
                           std::span<const Real> grad_projected) {
  ForwardTape<Real> tape;
  forward(params, clip, &tape);
  std::vector<Real> grads(params.values.size(), Real(0));
  backward<Real>(params, tape, grad_projected, grads);
  return grads;
}

#define SVT_INSTANTIATE_BACKBONE(Real)                                                         \
  template struct ModelParams<Real>;                                                           \
  template std::vector<Real> interpolate_positional<Real>(std::span<const Real>, int, int, int); \
  template std::vector<Real> interpolate_positional<Real>(std::span<const Real>, int, int, int, \
                                                          int, int);                          \
  template std::vector<Real> tokenize<Real>(const ModelParams<Real>&, const Clip&);            \
  template ForwardResult<Real> forward<Real>(const ModelParams<Real>&, const Clip&,            \
                                             ForwardTape<Real>*, bool);                        \
  template void backward<Real>(const ModelParams<Real>&, const ForwardTape<Real>&,             \
                               std::span<const Real>, std::span<Real>);                        \
  template std::vector<Real> backward<Real>(const ModelParams<Real>&, const Clip&,             \
                                            std::span<const Real>);

SVT_INSTANTIATE_BACKBONE(float)
SVT_INSTANTIATE_BACKBONE(double)

#undef SVT_INSTANTIATE_BACKBONE

}  // namespace svt
