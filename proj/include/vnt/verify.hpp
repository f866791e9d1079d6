#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace vnt {

struct VerifyOptions {
  std::size_t trials = 100;
  /// Threshold for the equivariance checks; exact identities use
  /// min(1e-12, tol). Gradient and full-model checks keep fixed thresholds.
  double tol = 1e-10;
  std::uint64_t seed = 0;
};

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;  // worst offender, filled for gradient checks
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  /// Informational measurements that carry no pass/fail verdict.
  std::vector<std::string> notes;

  bool passed() const;
  const CheckResult* find(const std::string& name) const;
};

/// Runs the structural property suite. Requires 64-bit precision.
VerifyReport run_verify(const VerifyOptions& opt);

void print_report(std::ostream& out, const VerifyReport& report);

}  // namespace vnt
