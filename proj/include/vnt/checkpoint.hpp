#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vnt/model.hpp"

namespace vnt {

/// First/second moment estimates per parameter plus the step counter.
struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct Checkpoint {
  VNTModel model;
  std::optional<AdamState> optimizer;
};

/// Writes `dir/config.json`, `dir/manifest.json` (array of {name, shape,
/// dtype, role}) and one raw little-endian float64 file `<name>.bin` per
/// tensor. Parameters, batch-norm buffers and, when given, the optimizer
/// moments are all stored.
void save_checkpoint(const std::filesystem::path& dir, const VNTModel& model, const AdamState* optimizer = nullptr);

/// Reads a checkpoint back bit for bit. Throws CheckpointError naming the
/// tensor when a file is missing, truncated, non-finite or does not match
/// the shapes implied by config.json.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace vnt
