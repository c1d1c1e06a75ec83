#pragma once

#include <filesystem>

#include "a2clpt/centers.hpp"
#include "a2clpt/model.hpp"

namespace a2clpt {

/// Everything needed to run inference or resume: architecture, network weights, centers.
struct Checkpoint {
  ModelConfig model;
  Params params;
  CenterBank bank;
};

/// Binary layout: the line "A2CLPT-CKPT v1\n", a u32 section count, then per section a u32
/// name length, the name, u64 rows, u64 cols and rows*cols row-major float64, all little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace a2clpt
