#pragma once

// Randomized verification suites over every module. Each check draws its
// instances from its own seeded stream, so the report depends only on
// (seed, trials) and not on how trials are spread across threads.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vattn::verify {

struct CheckResult {
  std::string name;
  /// Largest residual over all trials (+inf if a trial threw).
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  int cases_run = 0;
  int cases_passed = 0;
};

struct RunReport {
  std::string suite;
  int cases_run = 0;
  int cases_passed = 0;
  double max_residual = 0.0;
  std::vector<CheckResult> per_check;
  std::uint64_t seed = 0;
  int trials = 0;
  long long wall_time_ms = 0;
  /// Free-form remarks: trial errors, regime adjustments.
  std::vector<std::string> notes;
  /// Populated for the aggregate "all" suite.
  std::vector<RunReport> suites;

  bool passed() const noexcept { return cases_passed == cases_run; }
  /// Adds a check and updates the totals.
  void add(CheckResult check);
  /// Folds a child report into this one.
  void absorb(RunReport child);
};

struct Options {
  std::uint64_t seed = 0;
  int trials = 100;
  int jobs = 1;
  /// Multiplies every tolerance.
  double tolerance_scale = 1.0;
};

/// closed-forms, oracle-equivalence, gradient-identities, duality, transport.
const std::vector<std::string>& suite_names();

/// Runs one named suite, or every suite for "all". Throws
/// vattn::InvalidArgument for an unknown name or bad options.
RunReport run_suite(std::string_view name, const Options& options);

}  // namespace vattn::verify
