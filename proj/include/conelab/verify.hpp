#pragma once

#include "conelab/cone.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace conelab {

struct CheckOutcome {
    int id = 0;
    std::string name;
    bool passed = false;
    bool skipped = false;
    std::vector<std::pair<std::string, double>> metrics;
    std::string detail;
    double seconds = 0.0;
    double budget_seconds = 0.0;  ///< 0: no runtime bound
};

struct VerifyOptions {
    std::uint64_t seed = kDefaultSeed;
    /// Only the sub-minute checks; the rest are reported as skipped.
    bool fast = false;
    int threads = 0;
};

/// Acceptance criteria 1..11.
inline constexpr int kCriteria = 11;
std::string criterion_name(int id);
CheckOutcome run_criterion(int id, const VerifyOptions& options = {});

/// Same seed gives an identical sampled report, a perturbed seed a different one.
CheckOutcome seed_reproducibility(const VerifyOptions& options = {});

}  // namespace conelab
