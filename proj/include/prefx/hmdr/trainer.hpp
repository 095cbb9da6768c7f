#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/hmdr/model.hpp"
#include "prefx/hmdr/problem.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace prefx::hmdr {

enum class Optimizer {
    /// Proximal gradient with backtracking; exact zeros from the prox.
    proximal,
    /// Full-batch Adam on the subgradient, then hard thresholding. Kept for
    /// comparisons against gradient-based training; weights are only
    /// approximately sparse before the threshold.
    adam,
};

struct TrainConfig {
    double initial_step = 1.0;
    std::size_t max_iterations = 20000;
    /// Stop when the accepted objective decrease falls below
    /// tolerance * max(1, |objective|).
    double tolerance = 1e-10;
    double min_step = 1e-18;
    /// Step multiplier after an iteration that needed no backtracking.
    double step_growth = 2.0;
    /// Monotone FISTA extrapolation; the accepted objective still never increases.
    bool accelerated = true;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::proximal;
    double adam_learning_rate = 0.01;
    double adam_threshold = 1e-3;
};

void validate(const TrainConfig& config);

/// Called after every accepted iteration with the iterate and its objective.
using Observer = std::function<void(std::size_t iteration, const Weights& w, double objective)>;

struct FitResult {
    Weights weights;
    TrainingInfo info;
    std::vector<double> objective_trace;
};

/// Minimizes objective(w) under the variant constraints in `params`.
FitResult fit_weights(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
                      const Weights* warm_start = nullptr, const Observer& observer = {});

HmdrModel fit(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
              const Weights* warm_start = nullptr, const Observer& observer = {});

/// Drops ties, mirror-augments, groups by domain and fits. `training_domains`
/// as in Problem::from_vectors.
HmdrModel fit(const std::vector<data::LabeledVector>& labeled, const data::ConceptCatalog& catalog,
              const HmdrParams& params, const TrainConfig& config,
              std::vector<DomainId> training_domains = {});

/// Removes tie labels (y == 0).
std::vector<data::LabeledVector> drop_ties(const std::vector<data::LabeledVector>& labeled);

}  // namespace prefx::hmdr
