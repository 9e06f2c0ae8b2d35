// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/distill.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

namespace svt {

Correspondences Correspondences::parse(const std::string& text) {
  Correspondences c{false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }),
               item.end());
    if (item.empty()) continue;
    if (item == "lg") c.local_to_global = true;
    else if (item == "gg") c.global_to_global = true;
    else if (item == "ll") c.local_to_local = true;
    else if (item == "gl") c.global_to_local = true;
    else throw UsageError("unknown correspondence '" + item + "' (expected lg, gg, ll, gl)");
    any = true;
  }
  if (!any) throw UsageError("at least one correspondence is required");
  return c;
}

std::string Correspondences::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(local_to_global, "lg");
  add(global_to_global, "gg");
  add(local_to_local, "ll");
  add(global_to_local, "gl");
  return out;
}

template <typename Real>
DistillState<Real> DistillState<Real>::from_student(const ModelParams<Real>& student) {
  DistillState s;
  s.teacher = student;
  s.center.assign(static_cast<std::size_t>(student.config.proj_dim), Real(0));
  return s;
}

template <typename Real>
std::vector<Real> normalize(std::span<const Real> f, double temp, std::span<const Real> center) {
  if (!(temp > 0.0)) throw UsageError("temperature must be positive");
  if (!center.empty() && center.size() != f.size()) throw UsageError("center length mismatch");
  if (f.empty()) throw UsageError("cannot normalize an empty vector");
  std::vector<double> z(f.size());
  const double inv = 1.0 / temp;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) throw DataError("non-finite feature value");
    const double centered = center.empty() ? static_cast<double>(f[i])
                                           : static_cast<double>(f[i]) - static_cast<double>(center[i]);
    z[i] = centered * inv;
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  std::vector<Real> p(f.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<Real>(z[i] / sum);
  return p;
}

template <typename Real>
Real loss_gg(std::span<const Real> teacher_prob, std::span<const Real> student_prob) {
  if (teacher_prob.size() != student_prob.size()) throw UsageError("probability length mismatch");
  Real loss = 0;
  for (std::size_t i = 0; i < teacher_prob.size(); ++i) {
    loss -= teacher_prob[i] * std::log(std::max(student_prob[i], static_cast<Real>(kLogClamp)));
  }
  return loss;
}

template <typename Real>
Real loss_lg(std::span<const Real> teacher_prob, const std::vector<std::vector<Real>>& local_student_probs) {
  if (local_student_probs.empty()) throw UsageError("loss_lg needs at least one local view");
  Real total = 0;
  for (const auto& p : local_student_probs) total += loss_gg<Real>(teacher_prob, p);
  return total;
}

namespace {

// d/dz of -sum_i t_i log(max(softmax(z)_i, clamp)), accumulated into dz.
template <typename Real>
void accumulate_ce_grad(std::span<const Real> teacher, std::span<const Real> student, std::vector<Real>& dz) {
  Real active_mass = 0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (student[i] > static_cast<Real>(kLogClamp)) active_mass += teacher[i];
  }
  for (std::size_t j = 0; j < teacher.size(); ++j) {
    dz[j] += student[j] * active_mass - (student[j] > static_cast<Real>(kLogClamp) ? teacher[j] : Real(0));
  }
}

}  // namespace

template <typename Real>
RouteOutput<Real> route_and_match(const ViewSet& views, const ModelParams<Real>& student,
                                  const DistillState<Real>& state, std::span<Real> grads,
                                  const Correspondences& corr) {
  const bool want_grads = !grads.empty();
  if (want_grads && grads.size() != student.values.size()) throw UsageError("gradient buffer size mismatch");
  if (state.teacher.values.size() != student.values.size()) {
    throw UsageError("teacher and student shapes differ");
  }
  const int k = static_cast<int>(views.locals.size());
  const std::span<const Real> center =
      state.centering ? std::span<const Real>(state.center) : std::span<const Real>{};

  RouteOutput<Real> out;
  std::vector<std::vector<Real>> teacher_local_probs;
  for (const auto& g : views.globals) {
    auto r = forward(state.teacher, g.frames);
    out.teacher_probs.push_back(normalize<Real>(r.projected, state.teacher_temp, center));
    out.teacher_raw.push_back(std::move(r.projected));
  }
  if (corr.needs_teacher_locals()) {
    for (const auto& l : views.locals) {
      auto r = forward(state.teacher, l.frames);
      teacher_local_probs.push_back(normalize<Real>(r.projected, state.teacher_temp, center));
    }
  }

  LossBreakdown& loss = out.loss;
  ForwardTape<Real> tape;
  const int n_student = 2 + k;
  for (int v = 0; v < n_student; ++v) {
    const bool is_global = v < 2;
    const View& view = is_global ? views.globals[static_cast<std::size_t>(v)]
                                 : views.locals[static_cast<std::size_t>(v - 2)];
    struct Target {
      const std::vector<Real>* prob;
      int teacher_view;
      PairKind kind;
    };
    std::vector<Target> targets;
    if (is_global) {
      if (corr.global_to_global) targets.push_back({&out.teacher_probs[static_cast<std::size_t>(1 - v)], 1 - v, PairKind::kGlobalToGlobal});
      if (corr.global_to_local) {
        for (int j = 0; j < k; ++j) {
          targets.push_back({&teacher_local_probs[static_cast<std::size_t>(j)], 2 + j, PairKind::kGlobalToLocal});
        }
      }
    } else {
      const int i = v - 2;
      if (corr.local_to_global) {
        targets.push_back({&out.teacher_probs[0], 0, PairKind::kLocalToGlobal});
        targets.push_back({&out.teacher_probs[1], 1, PairKind::kLocalToGlobal});
      }
      if (corr.local_to_local && k > 1) {
        const int j = (i + 1) % k;
        targets.push_back({&teacher_local_probs[static_cast<std::size_t>(j)], 2 + j, PairKind::kLocalToLocal});
      }
    }
    if (targets.empty()) continue;

    const auto result = forward(student, view.frames, want_grads ? &tape : nullptr);
    const auto s = normalize<Real>(result.projected, state.student_temp);
    std::vector<Real> dz(s.size(), Real(0));
    for (const auto& t : targets) {
      const double value = static_cast<double>(loss_gg<Real>(*t.prob, s));
      loss.per_pair.push_back({v, t.teacher_view, t.kind, value});
      if (want_grads) accumulate_ce_grad<Real>(*t.prob, s, dz);
    }
    if (want_grads) {
      const Real inv_t = static_cast<Real>(1.0 / state.student_temp);
      for (auto& g : dz) g *= inv_t;
      backward<Real>(student, tape, dz, grads);
    }
  }

  for (const auto& p : loss.per_pair) {
    switch (p.kind) {
      case PairKind::kGlobalToGlobal: loss.l_gg += p.value; break;
      case PairKind::kLocalToGlobal: loss.l_lg += p.value; break;
      case PairKind::kLocalToLocal: loss.l_ll += p.value; break;
      case PairKind::kGlobalToLocal: loss.l_gl += p.value; break;
    }
  }
  loss.total = loss.l_gg + loss.l_lg + loss.l_ll + loss.l_gl;
  return out;
}

template <typename Real>
void ema_update(ModelParams<Real>& teacher, const ModelParams<Real>& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw UsageError("EMA momentum must be in [0, 1]");
  if (teacher.values.size() != student.values.size() || !(teacher.config == student.config)) {
    throw UsageError("teacher and student shapes differ");
  }
  // Accumulate in double so the float teacher is the rounded exact average.
  const double b = 1.0 - m;
  for (std::size_t i = 0; i < teacher.values.size(); ++i) {
    teacher.values[i] = static_cast<Real>(m * static_cast<double>(teacher.values[i]) +
                                          b * static_cast<double>(student.values[i]));
  }
}

template <typename Real>
std::vector<Real> center_update(std::span<const Real> center,
                                const std::vector<std::vector<Real>>& teacher_batch_outputs,
                                double center_momentum) {
  if (teacher_batch_outputs.empty()) throw UsageError("center update needs a non-empty batch");
  std::vector<double> mean(center.size(), 0.0);
  for (const auto& f : teacher_batch_outputs) {
    if (f.size() != center.size()) throw UsageError("center length mismatch");
    for (std::size_t i = 0; i < f.size(); ++i) mean[i] += static_cast<double>(f[i]);
  }
  const double inv = 1.0 / static_cast<double>(teacher_batch_outputs.size());
  std::vector<Real> out(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    out[i] = static_cast<Real>(center_momentum * static_cast<double>(center[i]) +
                               (1.0 - center_momentum) * mean[i] * inv);
  }
  return out;
}

double teacher_temperature(int epoch, int total_epochs, double start, double end, double warmup_frac) {
  const int warm = std::max(1, static_cast<int>(std::lround(warmup_frac * total_epochs)));
  if (epoch >= warm) return end;
  return start + (end - start) * static_cast<double>(epoch) / warm;
}

double ema_momentum_at(long step, long total_steps, double start, double end) {
  if (total_steps <= 0) return end;
  const double progress = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return end - (end - start) * (std::cos(std::numbers::pi * progress) + 1.0) / 2.0;
}

#define SVT_INSTANTIATE_DISTILL(Real)                                                            \
  template struct DistillState<Real>;                                                            \
  template std::vector<Real> normalize<Real>(std::span<const Real>, double, std::span<const Real>); \
  template Real loss_gg<Real>(std::span<const Real>, std::span<const Real>);                     \
  template Real loss_lg<Real>(std::span<const Real>, const std::vector<std::vector<Real>>&);     \
  template RouteOutput<Real> route_and_match<Real>(const ViewSet&, const ModelParams<Real>&,     \
                                                   const DistillState<Real>&, std::span<Real>,   \
                                                   const Correspondences&);                      \
  template void ema_update<Real>(ModelParams<Real>&, const ModelParams<Real>&, double);         \
  template std::vector<Real> center_update<Real>(std::span<const Real>,                          \
                                                 const std::vector<std::vector<Real>>&, double);

SVT_INSTANTIATE_DISTILL(float)
SVT_INSTANTIATE_DISTILL(double)

#undef SVT_INSTANTIATE_DISTILL

}  // namespace svt
