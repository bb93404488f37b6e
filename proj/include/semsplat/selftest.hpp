#pragma once

#include <string>
#include <vector>

namespace semsplat {

// Compact runtime property battery behind `selftest`, and the
// finite-difference suites behind `gradcheck`. The full test binaries cover
// the same ground in more depth; these run from a shipped binary with no test
// framework.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> run_selftest(bool timing);

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 1e-4;
  bool pass() const { return max_rel_err <= tol; }
};

std::vector<GradCheckReport> run_gradcheck();

}  // namespace semsplat
