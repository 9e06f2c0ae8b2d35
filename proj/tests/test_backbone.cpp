// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "support.hpp"
#include "svt/backbone.hpp"

namespace {

svt::BackboneConfig tiny_config() {
  svt::BackboneConfig c;
  c.embed_dim = 8;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.patch_size = 8;
  c.max_image_size = 32;
  c.max_frames = 2;
  c.proj_dim = 6;
  return c;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  svt::Rng rng(seed);
  for (auto& x : v) x = rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("token counts follow the grid") {
  svt::BackboneConfig c;
  const auto params = svt::ModelParams<float>::init(c, 1);
  CHECK(c.max_spatial_tokens() == 196);
  CHECK(c.max_temporal_tokens() == 16);
  const auto big = svt::tokenize(params, svt::testing::random_clip(1, 224, 224, 1));
  CHECK(big.size() == 196u * 64u);
  const auto small = svt::tokenize(params, svt::testing::random_clip(2, 96, 96, 2));
  CHECK(small.size() == 2u * 36u * 64u);
}

TEST_CASE("zero patches embed to zero tokens") {
  const auto params = svt::ModelParams<double>::init(tiny_config(), 1);
  const auto tokens = svt::tokenize(params, svt::Clip(2, 32, 32, 3));
  for (double v : tokens) CHECK(v == 0.0);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), svt::UsageError);
  c = tiny_config();
  c.max_image_size = 30;
  CHECK_THROWS_AS(c.validate(), svt::UsageError);
  c = tiny_config();
  c.embed_dim = 0;
  CHECK_THROWS_AS(c.validate(), svt::UsageError);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("initialization") {
  svt::BackboneConfig c;
  const auto p = svt::ModelParams<double>::init(c, 7);
  const auto w = p.tensor("blocks.0.mlp.fc1.weight");
  double sum = 0.0;
  double sq = 0.0;
  for (double v : w) {
    CHECK(std::abs(v) <= 0.04 + 1e-12);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / static_cast<double>(w.size());
  CHECK(std::abs(mean) < 1e-3);
  // A normal truncated at two sigma keeps about 77% of its variance.
  CHECK(std::sqrt(sq / static_cast<double>(w.size())) == doctest::Approx(0.02 * std::sqrt(0.774)).epsilon(0.03));
  for (double v : p.tensor("blocks.0.mlp.fc1.bias")) CHECK(v == 0.0);
  for (double v : p.tensor("final_norm.scale")) CHECK(v == 1.0);
  for (double v : p.tensor("final_norm.shift")) CHECK(v == 0.0);
  CHECK(svt::ModelParams<double>::init(c, 7).values == p.values);
  CHECK(svt::ModelParams<double>::init(c, 8).values != p.values);
  CHECK_THROWS_AS(p.tensor("nope"), svt::UsageError);
  const auto* cls = p.layout->find("cls_token");
  REQUIRE(cls != nullptr);
  CHECK_FALSE(cls->weight_decay);
  CHECK_FALSE(p.layout->find("final_norm.scale")->weight_decay);
  CHECK(p.layout->find("head.0.weight")->weight_decay);
}

TEST_CASE("positional interpolation at native size is the identity") {
  const auto t = random_vector(16 * 5, 1);
  CHECK(svt::interpolate_positional<double>(t, 16, 5, 16) == t);
  const auto s = random_vector(14 * 14 * 3, 2);
  CHECK(svt::interpolate_positional<double>(s, 14, 14, 3, 14, 14) == s);
}

TEST_CASE("positional interpolation closed forms") {
  const std::vector<double> t{1.5, -2.0, 4.0, 0.25};
  const auto r = svt::interpolate_positional<double>(t, 2, 2, 3);
  REQUIRE(r.size() == 6u);
  CHECK(std::abs(r[0] - 1.5) <= 1e-12);
  CHECK(std::abs(r[2] - (1.5 + 4.0) / 2) <= 1e-12);
  CHECK(std::abs(r[3] - (-2.0 + 0.25) / 2) <= 1e-12);
  CHECK(std::abs(r[5] - 0.25) <= 1e-12);
  const std::vector<double> g{1.0, 2.0, 3.0, 5.0};
  const auto q = svt::interpolate_positional<double>(g, 2, 2, 1, 3, 3);
  REQUIRE(q.size() == 9u);
  CHECK(std::abs(q[4] - (1.0 + 2.0 + 3.0 + 5.0) / 4) <= 1e-12);
  CHECK(std::abs(q[1] - 1.5) <= 1e-12);
  CHECK(std::abs(q[8] - 5.0) <= 1e-12);
  CHECK_THROWS_AS(svt::interpolate_positional<double>(g, 3, 1, 2), svt::UsageError);
}

TEST_CASE("interpolation plans have unit weight") {
  for (const auto& taps : svt::bilinear_plan(14, 14, 6, 6)) {
    double s = 0.0;
    for (const auto& tap : taps) s += tap.weight;
    CHECK(s == doctest::Approx(1.0));
  }
  const auto up = svt::linear_plan(16, 64);
  CHECK(up.size() == 64u);
}

TEST_CASE("output length is fixed across view shapes") {
  svt::BackboneConfig c;
  c.embed_dim = 16;
  c.n_blocks = 1;
  c.n_heads = 2;
  const auto p = svt::ModelParams<float>::init(c, 1);
  const std::vector<std::array<int, 2>> shapes{{2, 96}, {4, 96}, {8, 96}, {16, 96}, {8, 224}, {16, 224}, {64, 96}};
  for (const auto& [t, s] : shapes) {
    const auto r = svt::forward(p, svt::testing::random_clip(t, s, s, static_cast<std::uint64_t>(t + s)));
    CHECK(r.projected.size() == 32u);
    CHECK(r.cls_backbone.size() == 16u);
    for (float v : r.projected) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(svt::forward(p, svt::testing::random_clip(65, 16, 16, 1)), svt::UsageError);
  CHECK_THROWS_AS(svt::forward(p, svt::testing::random_clip(2, 20, 20, 1)), svt::UsageError);
}

TEST_CASE("attention rows are distributions") {
  svt::BackboneConfig c = tiny_config();
  c.n_blocks = 2;
  c.max_frames = 4;
  const auto p = svt::ModelParams<double>::init(c, 3);
  const auto r = svt::forward<double>(p, svt::testing::random_clip(3, 32, 24, 4), nullptr, true);
  REQUIRE(r.attention.size() == 2u);
  for (const auto& a : r.attention) {
    CHECK(a.frames == 3);
    CHECK(a.spatial_tokens == 12);
    const int T = a.frames;
    const int S = a.spatial_tokens;
    REQUIRE(a.temporal.size() == static_cast<std::size_t>(S) * a.heads * T * T);
    for (std::size_t row = 0; row < a.temporal.size() / T; ++row) {
      double s = 0.0;
      for (int j = 0; j < T; ++j) s += a.temporal[row * T + j];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    const int n = S + 1;
    REQUIRE(a.spatial.size() == static_cast<std::size_t>(T) * a.heads * n * n);
    for (std::size_t row = 0; row < a.spatial.size() / n; ++row) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a.spatial[row * n + j];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("forward is deterministic") {
  const auto p = svt::ModelParams<float>::init(tiny_config(), 3);
  const auto clip = svt::testing::random_clip(2, 32, 32, 4);
  CHECK(svt::forward(p, clip).projected == svt::forward(p, clip).projected);
}

TEST_CASE("duplicated frames move the class token less than random extra frames") {
  svt::BackboneConfig c;
  c.embed_dim = 32;
  c.n_blocks = 2;
  c.patch_size = 8;
  c.max_image_size = 32;
  const auto p = svt::ModelParams<double>::init(c, 11);
  const auto base = svt::testing::random_clip(8, 32, 32, 1);
  const auto noise = svt::testing::random_clip(8, 32, 32, 2);
  svt::Clip dup(16, 32, 32, 3);
  svt::Clip mixed(16, 32, 32, 3);
  const std::size_t stride = base.frame_stride();
  for (int t = 0; t < 16; ++t) {
    const auto src = base.data.begin() + static_cast<std::ptrdiff_t>((t / 2) * stride);
    std::copy(src, src + static_cast<std::ptrdiff_t>(stride), dup.data.begin() + static_cast<std::ptrdiff_t>(t * stride));
    const auto& from = t % 2 == 0 ? base : noise;
    const auto msrc = from.data.begin() + static_cast<std::ptrdiff_t>((t / 2) * stride);
    std::copy(msrc, msrc + static_cast<std::ptrdiff_t>(stride), mixed.data.begin() + static_cast<std::ptrdiff_t>(t * stride));
  }
  const auto ref = svt::forward(p, base).cls_backbone;
  auto dist = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - ref[i]) * (v[i] - ref[i]);
    return std::sqrt(s);
  };
  const double d_dup = dist(svt::forward(p, dup).cls_backbone);
  const double d_mixed = dist(svt::forward(p, mixed).cls_backbone);
  CHECK(d_dup < d_mixed);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const auto p = svt::ModelParams<double>::init(tiny_config(), 3);
  const std::vector<double> zero(6, 0.0);
  for (double g : svt::backward<double>(p, svt::testing::random_clip(2, 32, 32, 4), zero)) CHECK(g == 0.0);
}

TEST_CASE("head bias gradient follows the chain rule through the normalized last layer") {
  const auto p = svt::ModelParams<double>::init(tiny_config(), 5);
  const auto clip = svt::testing::random_clip(2, 32, 32, 6);
  const auto up = random_vector(6, 7);
  svt::ForwardTape<double> tape;
  svt::forward(p, clip, &tape);
  const auto grads = svt::backward<double>(p, clip, up);
  const auto& cfg = p.config;
  const int nb = cfg.bottleneck();
  const int np = cfg.proj_dim;
  const auto v = p.tensor("head.last.weight");
  std::vector<double> dz(static_cast<std::size_t>(nb), 0.0);
  for (int k = 0; k < np; ++k) {
    double n2 = 0.0;
    for (int i = 0; i < nb; ++i) n2 += v[static_cast<std::size_t>(i * np + k)] * v[static_cast<std::size_t>(i * np + k)];
    for (int i = 0; i < nb; ++i) dz[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i * np + k)] / std::sqrt(n2) * up[static_cast<std::size_t>(k)];
  }
  const double uz = dot(tape.head_unit, dz);
  const auto* bias = p.layout->find("head.2.bias");
  REQUIRE(bias != nullptr);
  for (int i = 0; i < nb; ++i) {
    const double want = (dz[static_cast<std::size_t>(i)] - tape.head_unit[static_cast<std::size_t>(i)] * uz) / tape.head_norm;
    CHECK(grads[bias->offset + static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients match central differences in every tensor") {
  auto p = svt::ModelParams<double>::init(tiny_config(), 9);
  // Larger weights than the default initialization make every path visible.
  svt::Rng rng(4);
  for (const auto& t : p.layout->tensors()) {
    for (std::size_t i = 0; i < t.size; ++i) p.values[t.offset + i] += 0.2 * rng.normal();
  }
  const auto clip = svt::testing::random_clip(2, 32, 32, 10);
  const auto up = random_vector(6, 11);
  const auto grads = svt::backward<double>(p, clip, up);
  auto loss = [&] {
    const auto r = svt::forward(p, clip);
    return dot(r.projected, up);
  };
  for (const auto& t : p.layout->tensors()) {
    double worst = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, t.size / 40);
    for (std::size_t i = 0; i < t.size; i += stride) {
      const double fd = svt::testing::central_difference(loss, p.values[t.offset + i], 1e-5);
      worst = std::max(worst, svt::testing::relative_error(grads[t.offset + i], fd, 1e-4));
    }
    INFO(t.name);
    CHECK(worst < 1e-4);
  }
}
