#pragma once

#include <string>

namespace binfer::harness {

/// Parse and strictly validate experiment JSON: every object is checked
/// against its allowed key set and unknown keys are rejected with the
/// offending path. Returns the task name. Throws std::invalid_argument.
std::string validate_experiment(const std::string& json_text);

/// FNV-1a 64-bit over the raw config bytes, hex-encoded; recorded in the run
/// manifest.
std::string config_hash(const std::string& text);

inline constexpr const char* kVersion = "binfer 0.1.0";

}  // namespace binfer::harness
