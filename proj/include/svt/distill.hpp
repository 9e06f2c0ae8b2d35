// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "svt/backbone.hpp"
#include "svt/views.hpp"

namespace svt {

inline constexpr double kLogClamp = 1e-12;

/// Which student/teacher view pairings contribute to the loss.
struct Correspondences {
  bool local_to_global = true;   // student local  -> teacher globals
  bool global_to_global = true;  // student global -> teacher other global
  bool local_to_local = false;   // student local i -> teacher local (i + 1) mod k
  bool global_to_local = false;  // student global -> every teacher local

  bool needs_teacher_locals() const { return local_to_local || global_to_local; }
  /// Parses e.g. "lg,gg" (any subset of lg, gg, ll, gl).
  static Correspondences parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const Correspondences&) const = default;
};

template <typename Real>
struct DistillState {
  ModelParams<Real> teacher;
  double ema_momentum = 0.996;
  std::vector<Real> center;
  double center_momentum = 0.9;
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  bool centering = true;

  /// Teacher starts as an exact copy of the student; center starts at zero.
  static DistillState from_student(const ModelParams<Real>& student);
};

enum class PairKind { kGlobalToGlobal, kLocalToGlobal, kLocalToLocal, kGlobalToLocal };

/// View ids: 0 and 1 are the globals, 2 + i is local i.
struct PairLoss {
  int student_view = 0;
  int teacher_view = 0;
  PairKind kind = PairKind::kGlobalToGlobal;
  double value = 0.0;
};

struct LossBreakdown {
  double l_gg = 0.0;
  double l_lg = 0.0;
  double l_ll = 0.0;
  double l_gl = 0.0;
  double total = 0.0;
  std::vector<PairLoss> per_pair;
};

template <typename Real>
struct RouteOutput {
  LossBreakdown loss;
  std::vector<std::vector<Real>> teacher_raw;    // raw projections of the teacher globals
  std::vector<std::vector<Real>> teacher_probs;  // centered + sharpened targets
};

/// Temperature softmax, stabilized by max subtraction. `center` may be empty.
template <typename Real>
std::vector<Real> normalize(std::span<const Real> f, double temp, std::span<const Real> center = {});

/// Cross-entropy -sum p_t log p_s with log clamped at kLogClamp.
template <typename Real>
Real loss_gg(std::span<const Real> teacher_prob, std::span<const Real> student_prob);

template <typename Real>
Real loss_lg(std::span<const Real> teacher_prob, const std::vector<std::vector<Real>>& local_student_probs);

/// Runs the teacher on the global views (and locals if required), the student
/// on every view, and sums the pair losses. When `grads` is non-empty the
/// student gradient of the total is accumulated into it. The teacher is read only.
template <typename Real>
RouteOutput<Real> route_and_match(const ViewSet& views, const ModelParams<Real>& student,
                            const DistillState<Real>& state, std::span<Real> grads = {},
                            const Correspondences& corr = {});

/// teacher <- m * teacher + (1 - m) * student, elementwise.
template <typename Real>
void ema_update(ModelParams<Real>& teacher, const ModelParams<Real>& student, double m);

/// center <- momentum * center + (1 - momentum) * mean(batch).
template <typename Real>
std::vector<Real> center_update(std::span<const Real> center,
                                const std::vector<std::vector<Real>>& teacher_batch_outputs,
                                double center_momentum);

/// Linear warmup from `start` to `end` over the first `warmup_frac` of the
/// epochs, then constant.
double teacher_temperature(int epoch, int total_epochs, double start, double end, double warmup_frac);

/// Cosine ramp from `start` at step 0 to `end` at `total_steps`.
double ema_momentum_at(long step, long total_steps, double start, double end);

}  // namespace svt
