// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace svt {
namespace {

constexpr std::uint64_t kBatchStream = 0x62617463685f7273ull;

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

int Dataset::n_classes() const {
  int n = 0;
  for (int l : labels) n = std::max(n, l + 1);
  return n;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto labels_path = dir / "labels.tsv";
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  std::ifstream is(labels_path);
  if (!is) throw DataError("missing labels.tsv in " + dir.string());
  Dataset d;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = labels_path.string() + ":" + std::to_string(line_no) + ": ";
    if (tab == std::string::npos) throw DataError(where + "expected filename<TAB>class index");
    const std::string name = line.substr(0, tab);
    const std::string label_text = line.substr(tab + 1);
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(label_text, &used);
      if (used != label_text.size()) label = -1;
    } catch (const std::exception&) {
      label = -1;
    }
    if (label < 0) throw DataError(where + "invalid class index '" + label_text + "'");
    d.names.push_back(name);
    d.labels.push_back(label);
    d.videos.push_back(read_raw_video(dir / name));
  }
  if (d.videos.empty()) throw DataError(labels_path.string() + " lists no videos");
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream labels(dir / "labels.tsv", std::ios::trunc);
  if (!labels) throw DataError("cannot write " + (dir / "labels.tsv").string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_raw_video(data.videos[i], dir / data.names[i]);
    labels << data.names[i] << '\t' << data.labels[i] << '\n';
  }
  if (!labels) throw DataError("write failed: " + (dir / "labels.tsv").string());
}

// ---------------------------------------------------------------------------
// Schedules

Schedule make_schedule(const TrainConfig& config, std::size_t dataset_size) {
  if (dataset_size == 0) throw DataError("dataset is empty");
  Schedule s;
  const auto per_step = static_cast<std::size_t>(config.batch_size);
  s.steps_per_epoch = config.steps_per_epoch > 0 ? config.steps_per_epoch
                                                  : static_cast<long>((dataset_size + per_step - 1) / per_step);
  s.epochs = config.epochs;
  s.total_steps = s.steps_per_epoch * config.epochs;
  s.warmup_steps = std::lround(config.warmup_epochs * static_cast<double>(s.steps_per_epoch));
  s.base_lr = config.base_lr;
  s.weight_decay_start = config.weight_decay_start;
  s.weight_decay_end = config.weight_decay_end;
  return s;
}

double lr_at(long step, const Schedule& s) {
  if (step < 0 || step > s.total_steps) throw UsageError("step outside the schedule");
  if (step < s.warmup_steps) return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  const long decay = s.total_steps - s.warmup_steps;
  if (decay <= 0) return s.base_lr;
  const double progress = static_cast<double>(step - s.warmup_steps) / static_cast<double>(decay);
  return s.base_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

double wd_at(long step, const Schedule& s) {
  if (step < 0 || step > s.total_steps) throw UsageError("step outside the schedule");
  const double progress = static_cast<double>(step) / static_cast<double>(s.total_steps);
  return s.weight_decay_end -
         (s.weight_decay_end - s.weight_decay_start) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

// ---------------------------------------------------------------------------
// Metrics

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["ema_momentum"] = ema_momentum;
  j["l_gg"] = l_gg;
  j["l_lg"] = l_lg;
  j["total"] = total;
  j["teacher_std"] = teacher_std;
  j["wall_ms"] = wall_ms;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.step = j.at("step").get<long>();
    r.epoch = j.at("epoch").get<int>();
    r.lr = j.at("lr").get<double>();
    r.weight_decay = j.at("weight_decay").get<double>();
    r.ema_momentum = j.at("ema_momentum").get<double>();
    r.l_gg = j.at("l_gg").get<double>();
    r.l_lg = j.at("l_lg").get<double>();
    r.total = j.at("total").get<double>();
    r.teacher_std = j.at("teacher_std").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad metrics record: ") + e.what());
  }
}

bool MetricsRecord::same_trajectory(const MetricsRecord& o) const {
  return step == o.step && epoch == o.epoch && same_bits(lr, o.lr) && same_bits(weight_decay, o.weight_decay) &&
         same_bits(ema_momentum, o.ema_momentum) && same_bits(l_gg, o.l_gg) && same_bits(l_lg, o.l_lg) &&
         same_bits(total, o.total) && same_bits(teacher_std, o.teacher_std);
}

double batch_std(const std::vector<std::vector<float>>& probs) {
  if (probs.size() < 2) return 0.0;
  const std::size_t dim = probs.front().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double mean = 0.0;
    for (const auto& p : probs) mean += p[i];
    mean /= static_cast<double>(probs.size());
    double var = 0.0;
    for (const auto& p : probs) var += (p[i] - mean) * (p[i] - mean);
    acc += std::sqrt(var / static_cast<double>(probs.size()));
  }
  return acc / static_cast<double>(dim);
}

// ---------------------------------------------------------------------------
// Step

MetricsRecord train_step(ModelParams<float>& student, DistillState<float>& state, AdamState& adam,
                         const std::vector<const RawVideo*>& batch, const StepSettings& settings) {
  if (batch.empty()) throw UsageError("train_step needs a non-empty batch");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_params = student.values.size();
  if (adam.m.size() != n_params || adam.v.size() != n_params) {
    adam.m.assign(n_params, 0.0f);
    adam.v.assign(n_params, 0.0f);
  }
  state.teacher_temp = settings.teacher_temp;

  std::vector<float> grads(n_params, 0.0f);
  std::vector<std::vector<float>> teacher_raw;
  std::vector<std::vector<float>> teacher_probs;
  double l_gg = 0.0;
  double l_lg = 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng = Rng::derive(settings.seed, static_cast<std::uint64_t>(settings.step), b);
    const ViewSet views = sample_view_set(*batch[b], rng, settings.views);
    auto out = route_and_match<float>(views, student, state, grads, settings.correspondences);
    if (!std::isfinite(out.loss.total)) {
      throw DataError("non-finite loss at step " + std::to_string(settings.step + 1) + " (video " +
                      std::to_string(b) + " in batch)");
    }
    l_gg += out.loss.l_gg;
    l_lg += out.loss.l_lg;
    total += out.loss.total;
    for (auto& r : out.teacher_raw) teacher_raw.push_back(std::move(r));
    for (auto& p : out.teacher_probs) teacher_probs.push_back(std::move(p));
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  double norm_sq = 0.0;
  for (auto& g : grads) {
    g = static_cast<float>(g * inv_b);
    norm_sq += static_cast<double>(g) * g;
  }
  if (!std::isfinite(norm_sq)) throw DataError("non-finite gradient at step " + std::to_string(settings.step + 1));
  const double norm = std::sqrt(norm_sq);
  const double clip_scale = (settings.grad_clip > 0.0 && norm > settings.grad_clip) ? settings.grad_clip / (norm + 1e-6) : 1.0;

  adam.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(adam.t));
  for (const auto& info : student.layout->tensors()) {
    const double decay = info.weight_decay ? settings.weight_decay : 0.0;
    for (std::size_t i = info.offset; i < info.offset + info.size; ++i) {
      const double g = static_cast<double>(grads[i]) * clip_scale;
      const double m = AdamState::kBeta1 * adam.m[i] + (1.0 - AdamState::kBeta1) * g;
      const double v = AdamState::kBeta2 * adam.v[i] + (1.0 - AdamState::kBeta2) * g * g;
      adam.m[i] = static_cast<float>(m);
      adam.v[i] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + AdamState::kEps);
      const double p = student.values[i];
      student.values[i] = static_cast<float>(p - settings.lr * (update + decay * p));
    }
  }
  if (!student.all_finite()) throw DataError("non-finite parameters after step " + std::to_string(settings.step + 1));

  ema_update(state.teacher, student, settings.ema_momentum);
  state.ema_momentum = settings.ema_momentum;
  if (state.centering) state.center = center_update<float>(state.center, teacher_raw, state.center_momentum);

  MetricsRecord r;
  r.step = settings.step + 1;
  r.epoch = settings.epoch;
  r.lr = settings.lr;
  r.weight_decay = settings.weight_decay;
  r.ema_momentum = settings.ema_momentum;
  r.l_gg = l_gg * inv_b;
  r.l_lg = l_lg * inv_b;
  r.total = total * inv_b;
  r.teacher_std = batch_std(teacher_probs);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig config, Dataset data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.finalize();
  schedule_ = make_schedule(config_, data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (static_cast<int>(data_.videos[i].frames) < config_.views.global_high_frames) {
      throw DataError("video " + data_.names[i] + " has " + std::to_string(data_.videos[i].frames) +
                      " frames; pretraining needs at least " + std::to_string(config_.views.global_high_frames));
    }
  }
  digest_ = config_digest(config_);
  student_ = ModelParams<float>::init(config_.backbone, config_.seed);
  state_ = DistillState<float>::from_student(student_);
  state_.ema_momentum = config_.distill.ema_start;
  state_.center_momentum = config_.distill.center_momentum;
  state_.student_temp = config_.distill.student_temp;
  state_.teacher_temp = config_.distill.teacher_temp_start;
  state_.centering = config_.distill.centering;
  adam_.m.assign(student_.values.size(), 0.0f);
  adam_.v.assign(student_.values.size(), 0.0f);
  rng_ = Rng::derive(config_.seed, kBatchStream);
}

bool Trainer::done() const {
  const long limit = config_.max_steps > 0 ? std::min<long>(config_.max_steps, schedule_.total_steps)
                                           : schedule_.total_steps;
  return steps_done_ >= limit;
}

std::vector<std::size_t> Trainer::next_batch() {
  const std::size_t n = data_.size();
  const std::size_t k = std::min(n, static_cast<std::size_t>(config_.batch_size));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng_.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

MetricsRecord Trainer::step() {
  if (steps_done_ >= schedule_.total_steps) throw UsageError("training schedule already complete");
  const long s = steps_done_;
  StepSettings settings;
  settings.step = s;
  settings.epoch = static_cast<int>(s / schedule_.steps_per_epoch);
  settings.lr = lr_at(s, schedule_);
  settings.weight_decay = wd_at(s, schedule_);
  settings.ema_momentum = ema_momentum_at(s, schedule_.total_steps, config_.distill.ema_start, config_.distill.ema_end);
  settings.teacher_temp = teacher_temperature(settings.epoch, schedule_.epochs, config_.distill.teacher_temp_start,
                                              config_.distill.teacher_temp_end, config_.distill.teacher_temp_warmup);
  settings.grad_clip = config_.grad_clip;
  settings.seed = config_.seed;
  settings.views = config_.views;
  settings.correspondences = config_.distill.correspondences;

  std::vector<const RawVideo*> batch;
  for (std::size_t i : next_batch()) batch.push_back(&data_.videos[i]);
  MetricsRecord r = train_step(student_, state_, adam_, batch, settings);
  ++steps_done_;
  return r;
}

TensorArchive Trainer::checkpoint() const {
  TensorArchive a;
  a.set_meta("format", "svt-checkpoint");
  a.set_meta("step", std::to_string(steps_done_));
  a.set_meta("config_digest", digest_);
  a.set_meta("rng", rng_.serialize());
  a.set_meta("adam_t", std::to_string(adam_.t));
  std::istringstream canon(canonical_config(config_));
  std::string line;
  while (std::getline(canon, line)) {
    const auto eq = line.find(" = ");
    a.set_meta("config." + line.substr(0, eq), line.substr(eq + 3));
  }
  add_params(a, "student/", student_);
  add_params(a, "teacher/", state_.teacher);
  ModelParams<float> moment = ModelParams<float>::zeros(config_.backbone);
  moment.values = adam_.m;
  add_params(a, "adam_m/", moment);
  moment.values = adam_.v;
  add_params(a, "adam_v/", moment);
  a.add("distill/center", {static_cast<int>(state_.center.size())}, state_.center);
  return a;
}

void Trainer::save_checkpoint(const std::filesystem::path& manifest) const { checkpoint().write(manifest); }

void Trainer::load_checkpoint(const std::filesystem::path& manifest) { restore(TensorArchive::read(manifest)); }

void Trainer::restore(const TensorArchive& a) {
  if (!a.has_meta("format") || a.meta("format") != "svt-checkpoint") {
    throw DataError("archive is not a training checkpoint");
  }
  const std::string& saved = a.meta("config_digest");
  if (saved != digest_) {
    throw UsageError("config digest mismatch: checkpoint " + saved + ", current config " + digest_ +
                     "; refusing to resume");
  }
  long step = 0;
  long adam_t = 0;
  try {
    step = std::stol(a.meta("step"));
    adam_t = std::stol(a.meta("adam_t"));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint has a malformed step counter");
  }
  if (step < 0 || step > schedule_.total_steps) throw DataError("checkpoint step outside the schedule");
  load_params(a, "student/", student_);
  load_params(a, "teacher/", state_.teacher);
  ModelParams<float> moment = ModelParams<float>::zeros(config_.backbone);
  load_params(a, "adam_m/", moment);
  adam_.m = moment.values;
  load_params(a, "adam_v/", moment);
  adam_.v = moment.values;
  adam_.t = adam_t;
  const auto center = a.get("distill/center");
  if (center.size() != state_.center.size()) throw DataError("checkpoint center has the wrong length");
  state_.center.assign(center.begin(), center.end());
  state_.ema_momentum = step > 0 ? ema_momentum_at(step - 1, schedule_.total_steps, config_.distill.ema_start,
                                                   config_.distill.ema_end)
                                 : config_.distill.ema_start;
  rng_.deserialize(a.meta("rng"));
  steps_done_ = step;
}

TrainConfig checkpoint_config(const TensorArchive& a) {
  std::string text;
  for (const auto& key : config_keys()) {
    const std::string meta_key = "config." + key;
    if (!a.has_meta(meta_key)) throw DataError("checkpoint lacks config key '" + key + "'");
    text += key + " = " + a.meta(meta_key) + "\n";
  }
  return parse_config(text, "checkpoint config");
}

ModelParams<float> checkpoint_params(const TensorArchive& a, bool teacher) {
  const TrainConfig c = checkpoint_config(a);
  ModelParams<float> p = ModelParams<float>::zeros(c.backbone);
  load_params(a, teacher ? "teacher/" : "student/", p);
  return p;
}

}  // namespace svt
