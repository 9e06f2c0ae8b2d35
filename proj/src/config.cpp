// Copyright 2026 The SVT Authors
// SPDX-License-Identifier: Apache-2.0

#include "svt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

namespace svt {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw UsageError("invalid value '" + value + "' for config key '" + key + "' (expected " + expected + ")");
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "an integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const long long x = parse_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) bad_value(key, v, "a 32-bit integer");
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return x;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list of integers");
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

struct KeySpec {
  const char* name;
  bool digest;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SVT_INT(key, field)                                                                 \
  KeySpec{key, true, [](TrainConfig& c, const std::string& v) { c.field = parse_int(key, v); }, \
          [](const TrainConfig& c) { return std::to_string(c.field); }}
#define SVT_DOUBLE(key, field)                                                                   \
  KeySpec{key, true, [](TrainConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
          [](const TrainConfig& c) { return fmt_double(c.field); }}
#define SVT_BOOL(key, field)                                                                   \
  KeySpec{key, true, [](TrainConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
          [](const TrainConfig& c) { return std::string(bool_str(c.field)); }}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t{
        KeySpec{"data", true, [](TrainConfig& c, const std::string& v) { c.data = v; },
                [](const TrainConfig& c) { return c.data; }},
        KeySpec{"seed", true, [](TrainConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                [](const TrainConfig& c) { return std::to_string(c.seed); }},
        SVT_INT("batch_size", batch_size),
        SVT_INT("epochs", epochs),
        SVT_INT("steps_per_epoch", steps_per_epoch),
        SVT_DOUBLE("base_lr", base_lr),
        SVT_DOUBLE("warmup_epochs", warmup_epochs),
        SVT_DOUBLE("weight_decay_start", weight_decay_start),
        SVT_DOUBLE("weight_decay_end", weight_decay_end),
        SVT_DOUBLE("grad_clip", grad_clip),
        SVT_INT("embed_dim", backbone.embed_dim),
        SVT_INT("n_blocks", backbone.n_blocks),
        SVT_INT("n_heads", backbone.n_heads),
        SVT_INT("patch_size", backbone.patch_size),
        SVT_INT("proj_dim", backbone.proj_dim),
        SVT_INT("mlp_ratio", backbone.mlp_ratio),
        SVT_INT("head_hidden_mult", backbone.head_hidden_mult),
        SVT_INT("head_bottleneck", backbone.head_bottleneck),
        SVT_DOUBLE("init_std", backbone.init_std),
        SVT_INT("global_size", views.global_size),
        SVT_INT("local_size", views.local_size),
        SVT_INT("global_low_frames", views.global_low_frames),
        SVT_INT("global_high_frames", views.global_high_frames),
        KeySpec{"local_frames", true,
                [](TrainConfig& c, const std::string& v) {
                  c.views.local_frame_choices = parse_int_list("local_frames", v);
                },
                [](const TrainConfig& c) { return fmt_int_list(c.views.local_frame_choices); }},
        SVT_INT("n_locals", views.n_locals),
        SVT_DOUBLE("local_area_min", views.local_area_min),
        SVT_DOUBLE("local_area_max", views.local_area_max),
        SVT_BOOL("spatial_variation", views.spatial_variation),
        SVT_BOOL("temporal_variation", views.temporal_variation),
        KeySpec{"sampler", true,
                [](TrainConfig& c, const std::string& v) {
                  if (v == "mc") c.views.sampler = TemporalSampler::kMotion;
                  else if (v == "tis") c.views.sampler = TemporalSampler::kInterval;
                  else bad_value("sampler", v, "mc or tis");
                },
                [](const TrainConfig& c) {
                  return std::string(c.views.sampler == TemporalSampler::kMotion ? "mc" : "tis");
                }},
        SVT_DOUBLE("tis_geometric_p", views.tis_geometric_p),
        SVT_BOOL("augment", views.aug.enabled),
        SVT_BOOL("tca", views.aug.temporally_consistent),
        SVT_BOOL("flip", views.flip_allowed),
        SVT_DOUBLE("student_temp", distill.student_temp),
        SVT_DOUBLE("teacher_temp_start", distill.teacher_temp_start),
        SVT_DOUBLE("teacher_temp_end", distill.teacher_temp_end),
        SVT_DOUBLE("teacher_temp_warmup", distill.teacher_temp_warmup),
        SVT_DOUBLE("center_momentum", distill.center_momentum),
        SVT_BOOL("centering", distill.centering),
        SVT_DOUBLE("ema_start", distill.ema_start),
        SVT_DOUBLE("ema_end", distill.ema_end),
        KeySpec{"correspondences", true,
                [](TrainConfig& c, const std::string& v) {
                  c.distill.correspondences = Correspondences::parse(v);
                },
                [](const TrainConfig& c) { return c.distill.correspondences.to_string(); }},
        SVT_BOOL("slow_fast", eval.slow_fast),
        SVT_INT("slow_frames", eval.slow_frames),
        SVT_INT("fast_frames", eval.fast_frames),
        SVT_INT("crops", eval.crops),
        SVT_INT("probe_epochs", eval.probe_epochs),
        SVT_INT("probe_batch_size", eval.probe_batch_size),
        SVT_DOUBLE("probe_lr", eval.probe_lr),
        SVT_DOUBLE("probe_momentum", eval.probe_momentum),
        SVT_DOUBLE("probe_weight_decay", eval.probe_weight_decay),
        SVT_INT("checkpoint_every", checkpoint_every),
        SVT_INT("max_steps", max_steps),
    };
    for (auto& k : t) {
      const std::string name = k.name;
      if (name == "checkpoint_every" || name == "max_steps") k.digest = false;
    }
    return t;
  }();
  return table;
}

#undef SVT_INT
#undef SVT_DOUBLE
#undef SVT_BOOL

const KeySpec& find_key(const std::string& key) {
  for (const auto& k : key_table()) {
    if (key == k.name) return k;
  }
  throw UsageError("unknown config key '" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw UsageError(where + "expected 'key = value', got '" + line + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw UsageError(where + "missing key before '='");
  return {std::move(key), std::move(value)};
}

void check(bool ok, const std::string& message) {
  if (!ok) throw UsageError("invalid config: " + message);
}

}  // namespace

void TrainConfig::finalize() {
  backbone.max_image_size = views.global_size;
  backbone.max_frames = views.global_high_frames;
  check(batch_size >= 1, "batch_size must be at least 1");
  check(epochs >= 1, "epochs must be at least 1");
  check(steps_per_epoch >= 0, "steps_per_epoch must be non-negative");
  check(warmup_epochs >= 0.0 && warmup_epochs < epochs, "warmup_epochs must be in [0, epochs)");
  check(base_lr > 0.0, "base_lr must be positive");
  check(weight_decay_start >= 0.0 && weight_decay_end >= 0.0, "weight decay must be non-negative");
  check(grad_clip >= 0.0, "grad_clip must be non-negative");
  check(checkpoint_every >= 0 && max_steps >= 0, "checkpoint_every and max_steps must be non-negative");
  const int p = backbone.patch_size;
  check(p > 0, "patch_size must be positive");
  check(views.global_size > 0 && views.global_size % p == 0, "global_size must be a positive multiple of patch_size");
  check(views.local_size > 0 && views.local_size % p == 0, "local_size must be a positive multiple of patch_size");
  check(views.global_low_frames >= 1 && views.global_low_frames <= views.global_high_frames,
        "global frame counts must satisfy 1 <= global_low_frames <= global_high_frames");
  for (int f : views.local_frame_choices) {
    check(f >= 1 && f <= views.global_high_frames, "local_frames entries must be in [1, global_high_frames]");
  }
  check(views.n_locals >= 0, "n_locals must be non-negative");
  const auto& corr = distill.correspondences;
  check(views.n_locals > 0 || !(corr.local_to_global || corr.local_to_local || corr.global_to_local),
        "the selected correspondences need n_locals > 0");
  check(views.local_area_min > 0.0 && views.local_area_min <= views.local_area_max && views.local_area_max <= 1.0,
        "local crop area must satisfy 0 < min <= max <= 1");
  check(views.tis_geometric_p > 0.0 && views.tis_geometric_p <= 1.0, "tis_geometric_p must be in (0, 1]");
  check(distill.student_temp > 0.0 && distill.teacher_temp_start > 0.0 && distill.teacher_temp_end > 0.0,
        "temperatures must be positive");
  check(distill.teacher_temp_warmup >= 0.0 && distill.teacher_temp_warmup <= 1.0, "teacher_temp_warmup must be in [0, 1]");
  check(distill.center_momentum >= 0.0 && distill.center_momentum <= 1.0, "center_momentum must be in [0, 1]");
  check(distill.ema_start >= 0.0 && distill.ema_start <= 1.0 && distill.ema_end >= 0.0 && distill.ema_end <= 1.0,
        "EMA momentum must be in [0, 1]");
  check(eval.slow_frames >= 1 && eval.slow_frames <= kMaxInferenceFrames, "slow_frames must be in [1, 64]");
  check(eval.fast_frames >= 1 && eval.fast_frames <= kMaxInferenceFrames, "fast_frames must be in [1, 64]");
  check(eval.crops >= 1, "crops must be at least 1");
  check(eval.probe_epochs >= 1 && eval.probe_batch_size >= 1, "probe epochs and batch size must be positive");
  check(eval.probe_lr > 0.0 && eval.probe_momentum >= 0.0 && eval.probe_momentum < 1.0,
        "probe_lr must be positive and probe_momentum in [0, 1)");
  backbone.validate();
}

TrainConfig parse_config(const std::string& text, const std::string& origin) {
  TrainConfig c;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    auto [key, value] = split_assignment(line, where);
    try {
      const auto& spec = find_key(key);
      if (!seen.insert(key).second) throw UsageError("duplicate config key '" + key + "'");
      spec.set(c, value);
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
  c.finalize();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  TrainConfig c = parse_config(text, path.string());
  if (!c.data.empty()) {
    const std::filesystem::path data(c.data);
    if (data.is_relative()) c.data = (path.parent_path() / data).lexically_normal().string();
  }
  return c;
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  auto [key, value] = split_assignment(assignment, "override: ");
  find_key(key).set(config, value);
  config.finalize();
}

std::string canonical_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::string config_digest(const TrainConfig& config) {
  std::string text;
  for (const auto& k : key_table()) {
    if (k.digest) text += std::string(k.name) + " = " + k.get(config) + "\n";
  }
  return to_hex(fnv1a64(text));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

}  // namespace svt
