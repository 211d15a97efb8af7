// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "georecon/errors.hpp"

namespace georecon::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ShapeError("config: bad value for " + key + ": '" + text + "'");
  return v;
}

template <typename V>
std::string format_number(V v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename V>
Field number(const char* key, V TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return format_number(c.*member); },
          [member, key](TrainConfig& c, const std::string& s) { c.*member = parse_number<V>(key, s); }};
}

Field flag(const char* key, bool TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, key](TrainConfig& c, const std::string& s) {
            if (s == "true" || s == "1") {
              c.*member = true;
            } else if (s == "false" || s == "0") {
              c.*member = false;
            } else {
              throw ShapeError(std::string("config: bad boolean for ") + key + ": '" + s + "'");
            }
          }};
}

Field text(const char* key, std::string TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, const std::string& s) { c.*member = s; }};
}

const std::vector<Field>& fields() {
  using C = TrainConfig;
  static const std::vector<Field> table = {
      number("stage", &C::stage),
      number("epochs", &C::epochs),
      number("steps", &C::steps),
      number("lr", &C::lr),
      number("min_lr", &C::min_lr),
      number("warmup", &C::warmup),
      number("beta1", &C::beta1),
      number("beta2", &C::beta2),
      number("weight_decay", &C::weight_decay),
      number("adam_eps", &C::adam_eps),
      number("grad_clip", &C::grad_clip),
      number("accumulation", &C::accumulation),
      number("max_tokens_train", &C::max_tokens_train),
      number("max_tokens_infer", &C::max_tokens_infer),
      number("views_total", &C::views_total),
      number("views_min", &C::views_min),
      number("views_max", &C::views_max),
      number("fixed_views", &C::fixed_views),
      flag("supervise_inputs", &C::supervise_inputs),
      number("max_scenes", &C::max_scenes),
      number("resolution", &C::resolution),
      number("width", &C::width),
      number("heads", &C::heads),
      number("points", &C::points),
      number("shared_dim", &C::shared_dim),
      number("fourier_freqs", &C::fourier_freqs),
      number("ffn_mult", &C::ffn_mult),
      flag("use_rope", &C::use_rope),
      flag("use_high", &C::use_high),
      flag("use_low", &C::use_low),
      flag("use_rays", &C::use_rays),
      number("patch_high", &C::patch_high),
      number("stride_low", &C::stride_low),
      number("encoder_layers", &C::encoder_layers),
      number("encoder_heads", &C::encoder_heads),
      number("proposal_layers", &C::proposal_layers),
      number("coarse", &C::coarse),
      number("fine", &C::fine),
      number("prior", &C::prior),
      number("recon_layers", &C::recon_layers),
      number("per_token", &C::per_token),
      number("decode_hidden", &C::decode_hidden),
      text("anchors", &C::anchors),
      text("stage1_checkpoint", &C::stage1_checkpoint),
      number("threshold", &C::threshold),
      number("seed", &C::seed),
      number("proxy_seed", &C::proxy_seed),
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ShapeError("config: " + msg); };
  if (stage != 1 && stage != 2) fail("stage must be 1 or 2");
  if (steps <= 0 && epochs <= 0) fail("need a positive step or epoch count");
  if (!(lr > 0) || min_lr < 0 || min_lr > lr) fail("learning rates must satisfy 0 <= min_lr <= lr, lr > 0");
  if (warmup < 0) fail("warmup must be nonnegative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (weight_decay < 0 || !(adam_eps > 0) || !(grad_clip > 0)) fail("weight_decay, adam_eps, grad_clip out of range");
  if (accumulation < 1) fail("accumulation must be >= 1");
  if (max_tokens_train < 1 || max_tokens_infer < max_tokens_train) fail("need 1 <= max_tokens_train <= max_tokens_infer");
  if (views_total < 2) fail("views_total must be >= 2");
  if (views_min < 1 || views_max > views_total - 1 || views_min > views_max) {
    fail("views input range must lie inside [1, views_total - 1]");
  }
  if (fixed_views < 0 || fixed_views > views_total - 1) fail("fixed_views must lie in [0, views_total - 1]");
  if (max_scenes < 0) fail("max_scenes must be nonnegative");
  if (resolution < 8) fail("resolution too small");
  if (anchors != "gt" && anchors != "predicted") fail("anchors must be gt or predicted");
  if (anchors == "predicted" && stage == 2 && stage1_checkpoint.empty()) fail("predicted anchors need stage1_checkpoint");
  if (!(threshold > 0 && threshold < 1)) fail("threshold must lie in (0, 1)");
  if (per_token < 1 || decode_hidden < 1) fail("decode dims must be positive");
  proposal_config(*this).validate();
  recon_transformer_config(*this).validate();
  if (resolution % patch_high != 0 || resolution % stride_low != 0) fail("resolution must be divisible by the encoder strides");
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ShapeError("config: unknown key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ShapeError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void apply_seed_override(TrainConfig& cfg) {
  if (const char* env = std::getenv("GEO_RECON_SEED")) {
    cfg.seed = parse_number<std::uint64_t>("GEO_RECON_SEED", trim(env));
  }
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig cfg = parse_config(ss.str());
  apply_seed_override(cfg);
  return cfg;
}

void save_config(const std::string& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path);
  out << config_to_text(cfg);
  if (!out) throw IoError("failed writing config " + path);
}

occupancy::ProposalConfig proposal_config(const TrainConfig& cfg) {
  occupancy::ProposalConfig p;
  p.encoder.width = cfg.width;
  p.encoder.patch_high = cfg.patch_high;
  p.encoder.stride_low = cfg.stride_low;
  p.encoder.high_layers = cfg.encoder_layers;
  p.encoder.high_heads = cfg.encoder_heads;
  p.encoder.use_high = cfg.use_high;
  p.encoder.use_low = cfg.use_low;
  p.encoder.use_rays = cfg.use_rays;
  p.transformer = recon_transformer_config(cfg);
  p.transformer.layers = cfg.proposal_layers;
  p.coarse = cfg.coarse;
  p.fine = cfg.fine;
  p.prior = cfg.prior;
  return p;
}

encoder::EncoderConfig recon_encoder_config(const TrainConfig& cfg) { return proposal_config(cfg).encoder; }

geoformer::GeoformerConfig recon_transformer_config(const TrainConfig& cfg) {
  geoformer::GeoformerConfig g;
  g.width = cfg.width;
  g.heads = cfg.heads;
  g.layers = cfg.recon_layers;
  g.points = cfg.points;
  g.levels = (cfg.use_high ? 1 : 0) + (cfg.use_low ? 1 : 0);
  g.shared_dim = cfg.shared_dim;
  g.fourier_freqs = cfg.fourier_freqs;
  g.ffn_mult = cfg.ffn_mult;
  g.use_rope = cfg.use_rope;
  g.rope_scale = cfg.fine;
  return g;
}

gsplat::DecodeConfig decode_config(const TrainConfig& cfg) {
  gsplat::DecodeConfig d;
  d.width = cfg.width;
  d.hidden = cfg.decode_hidden;
  d.per_token = cfg.per_token;
  d.voxel = 1.0 / cfg.fine;
  return d;
}

}  // namespace georecon::pipeline
