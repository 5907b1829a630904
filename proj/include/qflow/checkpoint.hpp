#pragma once

#include <string>
#include <vector>

namespace qflow {

/// Text checkpoint: every floating-point entry is written as a hex float, so
/// save/load round-trips bit-exactly and a resumed trajectory continues
/// identically to the uninterrupted one.
struct Checkpoint {
  std::string config_hash;
  double t = 0.0;
  double lambda = 0.0;
  double dt = 0.0;
  int streak = 0;
  double target_volume = 0.0;
  std::vector<double> coeffs;
  std::vector<double> grid_values;  // carried collocation values of u
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);

/// Throws on malformed/corrupted files (no partial state) and, when
/// `expected_hash` is nonempty, on a config-hash mismatch.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_hash = "");

}  // namespace qflow
