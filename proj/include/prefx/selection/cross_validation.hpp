#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/hmdr/trainer.hpp"
#include "prefx/selection/grid.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace prefx::selection {

struct CvOptions {
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    /// Fits inside CV only rank candidates, so they stop earlier than final fits.
    hmdr::TrainConfig train = [] {
        hmdr::TrainConfig c;
        c.tolerance = 1e-8;
        return c;
    }();
    /// Solve the grid as a regularization path per fold, each fit starting from
    /// the previous (sparser) solution.
    bool warm_start = true;
    /// Score validation rows with b alone, as out-of-domain prediction does.
    bool shared_weights_only = false;
    /// Fixes the domain order; empty means the domains present in the data.
    std::vector<hmdr::DomainId> training_domains;
};

struct CandidateScore {
    hmdr::HmdrParams params;
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
    bool converged = true;
};

struct CvResult {
    hmdr::HmdrParams best;
    std::size_t best_index = 0;
    /// Same order as grid.candidates.
    std::vector<CandidateScore> scores;
};

/// k-fold selection over `grid`. Ties are dropped and each instance's mirror is
/// added to the same fold. Highest mean validation accuracy wins; equal means go
/// to the larger (lambda_b, lambda_s), the sparser model. Candidates whose fits
/// fail to converge in any fold are skipped; SelectionError if none remain.
CvResult cross_validate(const std::vector<data::LabeledVector>& train, const data::ConceptCatalog& catalog,
                        const HyperGrid& grid, const CvOptions& options = {});

}  // namespace prefx::selection
