#pragma once

// Run configuration: a flat text file of `[section]` headers and `key = value`
// lines. `#` starts a comment. Keys are addressed as section.key, which is also
// the form taken by command-line overrides (`--set train.epochs=3`).
//
//   [model]  variant (baseline|cpnet075|cpnet037), shift (on|off), shift_fraction (p/q),
//            n_frames, base_channels, depth, height, width, seed
//   [train]  lr0, beta1, beta2, adam_eps, batch, epochs, seed, precision (f32|f64), reduction (sum|mean)
//   [data]   n_train, n_test, train_length, test_length, n_sprites, min_speed, max_speed,
//            min_half, max_half, kinds (square,disc,ring), background (constant|gradient),
//            anomalies (comma list), speed_factor, seed
//   [eval]   gamma, polarity (low|high), psnr_mode (standard|literal), batch
//   [ablate] variants (comma list of tags)
//
// Frame size for generated video is model.height x model.width.

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cpnet/data.hpp"
#include "cpnet/models.hpp"
#include "cpnet/scoring.hpp"
#include "cpnet/training.hpp"

namespace cpnet {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

inline std::string num(double v) { return shortest(v); }

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::config, key + ": '" + text + "' is not a valid number");
  return v;
}

inline bool parse_switch(const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  fail(ErrorKind::config, key + ": expected on or off, got '" + text + "'");
}

}  // namespace detail

// Parses the file format above into section.key -> value. Duplicate keys are errors.
inline KeyValues parse_config_text(const std::string& text, const std::string& source = "config") {
  KeyValues kv;
  std::string section;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto where = source + ":" + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(ErrorKind::config, where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, where + ": expected key = value");
    if (section.empty()) fail(ErrorKind::config, where + ": key outside any [section]");
    const auto key = section + "." + detail::trim(line.substr(0, eq));
    if (!kv.emplace(key, detail::trim(line.substr(eq + 1))).second) {
      fail(ErrorKind::config, where + ": duplicate key " + key);
    }
  }
  return kv;
}

inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

// "section.key=value"
inline void apply_override(KeyValues& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto key = detail::trim(assignment.substr(0, eq));
  if (eq == std::string::npos || key.find('.') == std::string::npos) {
    fail(ErrorKind::config, "override '" + assignment + "' must look like section.key=value");
  }
  kv[key] = detail::trim(assignment.substr(eq + 1));
}

struct RunConfig {
  CPNetConfig model;
  std::uint64_t model_seed = 0;
  TrainConfig train;
  CorpusSpec corpus;
  DecisionConfig decision;
  PsnrMode psnr_mode = PsnrMode::standard;
  int eval_batch = 8;
  std::vector<std::string> ablate_variants{"baseline", "cpnet075", "cpnet075_shift", "cpnet037", "cpnet037_shift"};

  void validate() const {
    model.validate();
    train.validate();
    corpus.validate();
    decision.validate();
    if (eval_batch < 1) fail(ErrorKind::config, "eval.batch must be >= 1");
    if (corpus.video.width != model.base.width || corpus.video.height != model.base.height) {
      fail(ErrorKind::config, "video frame size must equal the model input size");
    }
    if (corpus.test_length <= model.base.n_frames) fail(ErrorKind::config, "test videos too short to score");
    if (ablate_variants.empty()) fail(ErrorKind::config, "ablate.variants is empty");
  }
};

// Model settings for a tag such as cpnet037_shift; other fields come from `base`.
inline CPNetConfig config_for_tag(CPNetConfig base, const std::string& tag) {
  if (tag == "baseline") {
    base.split_encoder = base.split_decoder = base.shift_enabled = false;
  } else if (tag == "cpnet075" || tag == "cpnet075_shift") {
    base.split_encoder = true;
    base.split_decoder = false;
    base.shift_enabled = tag.ends_with("_shift");
  } else if (tag == "cpnet037" || tag == "cpnet037_shift") {
    base.split_encoder = base.split_decoder = true;
    base.shift_enabled = tag.ends_with("_shift");
  } else {
    fail(ErrorKind::config, "unknown variant tag '" + tag + "'");
  }
  return base;
}

inline KeyValues to_key_values(const RunConfig& c) {
  using detail::num;
  const auto& u = c.model.base;
  const auto& v = c.corpus.video;
  const std::string variant = c.model.variant() == Variant::baseline        ? "baseline"
                              : c.model.variant() == Variant::encoder_split ? "cpnet075"
                                                                             : "cpnet037";
  std::vector<std::string> kinds, anomalies;
  for (auto k : v.kinds) kinds.push_back(k == SpriteKind::square ? "square" : k == SpriteKind::disc ? "disc" : "ring");
  for (auto a : c.corpus.anomaly_kinds) anomalies.push_back(to_string(a));
  KeyValues kv{
      {"model.variant", variant},
      {"model.shift", c.model.shift_enabled ? "on" : "off"},
      {"model.shift_fraction", to_string(c.model.shift_fraction)},
      {"model.n_frames", std::to_string(u.n_frames)},
      {"model.base_channels", std::to_string(u.base_channels)},
      {"model.depth", std::to_string(u.depth)},
      {"model.height", std::to_string(u.height)},
      {"model.width", std::to_string(u.width)},
      {"model.seed", std::to_string(c.model_seed)},
      {"data.n_train", std::to_string(c.corpus.n_train)},
      {"data.n_test", std::to_string(c.corpus.n_test)},
      {"data.train_length", std::to_string(c.corpus.train_length)},
      {"data.test_length", std::to_string(c.corpus.test_length)},
      {"data.n_sprites", std::to_string(v.n_sprites)},
      {"data.min_speed", num(v.min_speed)},
      {"data.max_speed", num(v.max_speed)},
      {"data.min_half", num(v.min_half)},
      {"data.max_half", num(v.max_half)},
      {"data.kinds", detail::join(kinds)},
      {"data.background", v.background == Background::constant ? "constant" : "gradient"},
      {"data.anomalies", detail::join(anomalies)},
      {"data.speed_factor", num(c.corpus.speed_factor)},
      {"data.seed", std::to_string(c.corpus.seed)},
      {"eval.gamma", num(c.decision.gamma)},
      {"eval.polarity", c.decision.polarity == Polarity::low_score_abnormal ? "low" : "high"},
      {"eval.psnr_mode", c.psnr_mode == PsnrMode::standard ? "standard" : "literal"},
      {"eval.batch", std::to_string(c.eval_batch)},
      {"ablate.variants", detail::join(c.ablate_variants)},
  };
  for (const auto& [k, val] : train_config_to_map(c.train)) kv["train." + k] = val;
  return kv;
}

// Starts from defaults and applies every key in kv; unknown keys are errors.
inline RunConfig from_key_values(const KeyValues& kv) {
  using detail::parse_number;
  RunConfig c;
  auto& u = c.model.base;
  auto& v = c.corpus.video;
  std::string variant = "cpnet037";
  for (const auto& [key, val] : kv) {
    auto i32 = [&] { return parse_number<int>(key, val); };
    auto u64 = [&] { return parse_number<std::uint64_t>(key, val); };
    auto f64 = [&] { return parse_number<double>(key, val); };
    if (key == "model.variant") variant = val;
    else if (key == "model.shift") c.model.shift_enabled = detail::parse_switch(key, val);
    else if (key == "model.shift_fraction") c.model.shift_fraction = parse_rational(val);
    else if (key == "model.n_frames") u.n_frames = i32();
    else if (key == "model.base_channels") u.base_channels = i32();
    else if (key == "model.depth") u.depth = i32();
    else if (key == "model.height") u.height = i32();
    else if (key == "model.width") u.width = i32();
    else if (key == "model.seed") c.model_seed = u64();
    else if (key == "train.lr0") c.train.lr0 = f64();
    else if (key == "train.beta1") c.train.beta1 = f64();
    else if (key == "train.beta2") c.train.beta2 = f64();
    else if (key == "train.adam_eps") c.train.adam_eps = f64();
    else if (key == "train.batch") c.train.batch = i32();
    else if (key == "train.epochs") c.train.epochs = i32();
    else if (key == "train.seed") c.train.seed = u64();
    else if (key == "train.precision") {
      if (val != "f32" && val != "f64") fail(ErrorKind::config, key + ": expected f32 or f64");
      c.train.precision = val == "f64" ? Precision::f64 : Precision::f32;
    } else if (key == "train.reduction") {
      if (val != "sum" && val != "mean") fail(ErrorKind::config, key + ": expected sum or mean");
      c.train.reduction = val == "mean" ? Reduction::mean : Reduction::sum;
    } else if (key == "data.n_train") c.corpus.n_train = i32();
    else if (key == "data.n_test") c.corpus.n_test = i32();
    else if (key == "data.train_length") c.corpus.train_length = i32();
    else if (key == "data.test_length") c.corpus.test_length = i32();
    else if (key == "data.n_sprites") v.n_sprites = i32();
    else if (key == "data.min_speed") v.min_speed = f64();
    else if (key == "data.max_speed") v.max_speed = f64();
    else if (key == "data.min_half") v.min_half = f64();
    else if (key == "data.max_half") v.max_half = f64();
    else if (key == "data.kinds") {
      v.kinds.clear();
      for (const auto& k : detail::split_list(val)) {
        if (k == "square") v.kinds.push_back(SpriteKind::square);
        else if (k == "disc") v.kinds.push_back(SpriteKind::disc);
        else if (k == "ring") v.kinds.push_back(SpriteKind::ring);
        else fail(ErrorKind::config, key + ": unknown sprite kind '" + k + "'");
      }
    } else if (key == "data.background") {
      if (val != "constant" && val != "gradient") fail(ErrorKind::config, key + ": expected constant or gradient");
      v.background = val == "constant" ? Background::constant : Background::gradient;
    } else if (key == "data.anomalies") {
      c.corpus.anomaly_kinds.clear();
      for (const auto& a : detail::split_list(val)) c.corpus.anomaly_kinds.push_back(parse_anomaly_kind(a));
    } else if (key == "data.speed_factor") c.corpus.speed_factor = f64();
    else if (key == "data.seed") c.corpus.seed = u64();
    else if (key == "eval.gamma") c.decision.gamma = f64();
    else if (key == "eval.polarity") {
      if (val != "low" && val != "high") fail(ErrorKind::config, key + ": expected low or high");
      c.decision.polarity = val == "low" ? Polarity::low_score_abnormal : Polarity::high_score_abnormal;
    } else if (key == "eval.psnr_mode") {
      if (val != "standard" && val != "literal") fail(ErrorKind::config, key + ": expected standard or literal");
      c.psnr_mode = val == "standard" ? PsnrMode::standard : PsnrMode::literal;
    } else if (key == "eval.batch") c.eval_batch = i32();
    else if (key == "ablate.variants") c.ablate_variants = detail::split_list(val);
    else fail(ErrorKind::config, "unknown config key '" + key + "'");
  }
  if (variant != "baseline" && variant != "cpnet075" && variant != "cpnet037") {
    fail(ErrorKind::config, "model.variant: expected baseline, cpnet075 or cpnet037, got '" + variant + "'");
  }
  const bool shift = c.model.shift_enabled;
  c.model = config_for_tag(c.model, variant);
  c.model.shift_enabled = variant != "baseline" && shift;
  if (variant == "baseline" && shift && kv.contains("model.shift")) {
    fail(ErrorKind::config, "model.shift=on needs a split variant");
  }
  v.width = u.width;
  v.height = u.height;
  for (const auto& tag : c.ablate_variants) config_for_tag(c.model, tag);
  return c;
}

// The echo written to each run directory; parsing it gives back the same config.
inline std::string render_config(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, val] : to_key_values(c)) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      os << (os.tellp() > 0 ? "\n" : "") << "[" << section << "]\n";
    }
    os << key.substr(dot + 1) << " = " << val << "\n";
  }
  return os.str();
}

}  // namespace cpnet
