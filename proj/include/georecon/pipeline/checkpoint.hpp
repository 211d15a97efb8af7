// Copyright 2026 The georecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "georecon/diffcore/autograd.hpp"
#include "georecon/pipeline/optim.hpp"

namespace georecon::pipeline {

struct NamedTensor {
  std::string name;
  diffcore::Shape shape;
  std::vector<float> data;
};

// Binary layout (little endian): magic "GRCKv001", u32 version, config
// text, u64 step, u64 optimizer steps, rng text state, u32 tensor count,
// then per tensor: name, u32 rank, u32 dims, f32 values, f32 first moment,
// f32 second moment. Moments are empty (size 0) for inference-only files.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::string config;
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  std::string rng_state;
  std::vector<NamedTensor> params;
  std::vector<std::vector<float>> first_moment, second_moment;
};

std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of a float store, with optimizer moments when `opt` is given.
Checkpoint capture_checkpoint(const diffcore::ParamStore<float>& store, const AdamW* opt);

/// Copies parameters by name into `store`; every store entry must be present
/// with the same shape.
template <typename T>
void restore_params(const Checkpoint& ckpt, diffcore::ParamStore<T>& store);
void restore_optimizer(const Checkpoint& ckpt, AdamW& opt);

}  // namespace georecon::pipeline
