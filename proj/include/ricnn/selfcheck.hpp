#pragma once
#include <string>
#include <vector>

#include "ricnn/calibrate.hpp"

namespace ricnn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // one-line measurement behind the verdict
};

// Knobs for the verify command. `only` keeps checks whose name contains the
// substring. `sobel` swaps the table the sb ring-shift check runs against —
// the mutation fixture: a corrupted table must make that check fail.
struct SelfcheckOptions {
  std::string only;
  int ring_patches = 100;
  const GradientKernelPair* sobel = nullptr;
};

std::vector<CheckResult> run_selfchecks(const SelfcheckOptions& opt = {});
bool all_passed(const std::vector<CheckResult>& checks);
std::string render_report(const std::vector<CheckResult>& checks);

}  // namespace ricnn
