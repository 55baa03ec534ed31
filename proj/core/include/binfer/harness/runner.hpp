#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace binfer::harness {

struct RunOverrides {
  std::optional<std::uint64_t> seed;   // --seed / BINFER_SEED
  std::optional<std::string> out_dir;  // --out
  std::size_t chains = 1;              // --chains (sgld/sghmc fan-out)
};

/// Execute one experiment config. Writes metrics.csv, task artifacts and
/// manifest.json into the output directory. Returns the process exit code:
/// 0 success, 2 config/validation error, 3 divergence, 4 I/O or internal
/// error. Failures print one machine-readable JSON line to stderr.
int run_experiment(const std::string& config_path, const RunOverrides& overrides = {});

}  // namespace binfer::harness
