// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "georecon/pipeline/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "georecon/errors.hpp"
#include "georecon/io/binary.hpp"

namespace georecon::pipeline {

namespace {

constexpr std::string_view kMagic = "GRCKv001";
const std::string kWhat = "checkpoint";

void write_floats(std::ostream& out, const std::vector<float>& v) {
  io::write_u64(out, v.size());
  io::write_f32_array(out, v.data(), v.size());
}

std::vector<float> read_floats(std::istream& in) {
  const std::uint64_t n = io::read_u64(in, kWhat);
  if (n > (std::uint64_t{1} << 34)) throw IoError("checkpoint: implausible array length");
  std::vector<float> v(n);
  io::read_f32_array(in, v.data(), v.size(), kWhat);
  return v;
}

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  const bool moments = !ckpt.first_moment.empty();
  if (moments && (ckpt.first_moment.size() != ckpt.params.size() || ckpt.second_moment.size() != ckpt.params.size())) {
    throw ShapeError("checkpoint: moment table does not match the parameters");
  }
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, kMagic);
  io::write_u32(out, ckpt.version);
  io::write_string(out, ckpt.config);
  io::write_u64(out, ckpt.step);
  io::write_u64(out, ckpt.optimizer_steps);
  io::write_string(out, ckpt.rng_state);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& p = ckpt.params[i];
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    if (n != p.data.size()) throw ShapeError("checkpoint: tensor " + p.name + " size does not match its shape");
    io::write_string(out, p.name);
    io::write_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) io::write_u32(out, static_cast<std::uint32_t>(d));
    write_floats(out, p.data);
    write_floats(out, moments ? ckpt.first_moment[i] : std::vector<float>{});
    write_floats(out, moments ? ckpt.second_moment[i] : std::vector<float>{});
  }
  return out.str();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_magic(in, kMagic, kWhat);
  Checkpoint ckpt;
  ckpt.version = io::read_u32(in, kWhat);
  if (ckpt.version != Checkpoint::kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  }
  ckpt.config = io::read_string(in, kWhat);
  ckpt.step = io::read_u64(in, kWhat);
  ckpt.optimizer_steps = io::read_u64(in, kWhat);
  ckpt.rng_state = io::read_string(in, kWhat);
  const std::uint32_t count = io::read_u32(in, kWhat);
  bool any_moments = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = io::read_string(in, kWhat);
    const std::uint32_t rank = io::read_u32(in, kWhat);
    if (rank > 8) throw IoError("checkpoint: implausible rank for " + t.name);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(static_cast<int>(io::read_u32(in, kWhat)));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    t.data = read_floats(in);
    if (t.data.size() != n) throw IoError("checkpoint: tensor " + t.name + " payload does not match its shape");
    auto m = read_floats(in);
    auto v = read_floats(in);
    if (!m.empty() || !v.empty()) {
      if (m.size() != n || v.size() != n) throw IoError("checkpoint: moment size mismatch for " + t.name);
      any_moments = true;
    }
    ckpt.first_moment.push_back(std::move(m));
    ckpt.second_moment.push_back(std::move(v));
    ckpt.params.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes");
  if (!any_moments) {
    ckpt.first_moment.clear();
    ckpt.second_moment.clear();
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = checkpoint_to_bytes(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

Checkpoint capture_checkpoint(const diffcore::ParamStore<float>& store, const AdamW* opt) {
  Checkpoint ckpt;
  for (const auto& p : store.params()) {
    ckpt.params.push_back({p.name, p.var.shape(), p.var.value().vec()});
  }
  if (opt != nullptr) {
    ckpt.first_moment = opt->first_moments();
    ckpt.second_moment = opt->second_moments();
    ckpt.optimizer_steps = opt->steps_taken();
  }
  return ckpt;
}

template <typename T>
void restore_params(const Checkpoint& ckpt, diffcore::ParamStore<T>& store) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.params) by_name[t.name] = &t;
  for (auto& p : store.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError("checkpoint: missing parameter " + p.name);
    const NamedTensor& t = *it->second;
    if (t.shape != p.var.shape()) {
      throw IoError("checkpoint: parameter " + p.name + " has shape " + diffcore::shape_str(t.shape) +
                    ", model expects " + diffcore::shape_str(p.var.shape()));
    }
    auto& dst = p.var.mutable_value();
    for (std::size_t i = 0; i < t.data.size(); ++i) dst[i] = static_cast<T>(t.data[i]);
  }
}

void restore_optimizer(const Checkpoint& ckpt, AdamW& opt) {
  if (ckpt.first_moment.empty()) throw IoError("checkpoint: no optimizer state");
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  if (m.size() != ckpt.first_moment.size()) throw IoError("checkpoint: optimizer state does not match the model");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != ckpt.first_moment[i].size()) throw IoError("checkpoint: optimizer state does not match the model");
    m[i] = ckpt.first_moment[i];
    v[i] = ckpt.second_moment[i];
  }
  opt.set_steps_taken(ckpt.optimizer_steps);
}

template void restore_params(const Checkpoint&, diffcore::ParamStore<float>&);
template void restore_params(const Checkpoint&, diffcore::ParamStore<double>&);

}  // namespace georecon::pipeline
