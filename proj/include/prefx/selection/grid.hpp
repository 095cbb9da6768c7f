#pragma once

#include "prefx/hmdr/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace prefx::selection {

struct HyperGrid {
    hmdr::Variant variant = hmdr::Variant::hmdr;
    /// Candidates in emission order. Single-penalty variants carry the same
    /// value in lambda_b and lambda_s.
    std::vector<hmdr::HmdrParams> candidates;
};

/// hmdr: alpha = 1/D, lambda_b in {2/D², 1/(2D), 1/D}, lambda_s in
/// {1/D², 2/D², 1/(2D), 1/D}, keeping lambda_b >= lambda_s. dirty: same with
/// alpha = 0. shared_only / specific_only: a fixed list of nine penalties.
/// Coinciding values (small D) are emitted once.
HyperGrid grid_for(hmdr::Variant variant, std::size_t domain_count);

/// Prediction or gold outcome: +1 / -1, and 0 for a tie.
inline constexpr int kTie = 0;

/// (correct + 0.5 * ties) / total. Golds must be decided.
double accuracy_with_ties(std::span<const int> predictions, std::span<const int> golds);

}  // namespace prefx::selection
