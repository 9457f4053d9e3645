#pragma once

#include "deeppcr/parallel.hpp"
#include "deeppcr/pcr.hpp"

#include <functional>
#include <string>
#include <vector>

namespace deeppcr {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  // Scaled-down oracle sweep so the full suite stays interactive; the
  // acceptance tests run the full 200-system version.
  int oracle_systems = 60;
};

using SolveFn =
    std::function<std::vector<Vector>(const BlockBidiagSystem&)>;

/// Random system with entries scaled by 1/dim to keep solution growth tame.
BlockBidiagSystem random_system(int length, int dim, std::uint64_t seed);

/// Compares `solve` against forward substitution on `count` random systems.
/// The injectable solver is what lets mutation tests prove this check can
/// fail.
CheckResult check_oracle_equivalence(const SolveFn& solve, std::uint64_t seed, int count,
                                     double tol = 1e-10);

std::vector<CheckResult> run_verification(const VerifyOptions& options, WorkerPool* pool);

/// Renders results as the verify transcript: one line per check plus a
/// summary. Deliberately free of timings and worker counts so transcripts
/// from different worker counts are identical.
std::string verify_transcript(const std::vector<CheckResult>& results);

}  // namespace deeppcr
