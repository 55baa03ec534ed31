#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace binfer::harness {

/// Central finite differences against reverse-mode gradients for every
/// differentiable op and loss family. `instances` random instances per
/// family, inputs in [-2, 2], h = 1e-5, relative error with a unit floor.
struct GradcheckResult {
  std::string family;
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

std::vector<GradcheckResult> gradcheck_report(std::uint64_t seed, std::size_t instances,
                                              double tolerance = 1e-5, double step = 1e-5);
bool gradcheck_all_pass(const std::vector<GradcheckResult>& report);

/// Ground-truth-anchor self-tests (BLR, quadrature, mean-field fixed point,
/// PPCA, dense Gaussian pdf). Zero dependence on the trainers.
struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<OracleCheck> oracle_selftests();

}  // namespace binfer::harness
