#pragma once

// Independent l1-regularized logistic regression by cyclic coordinate
// descent with a one-dimensional Newton/soft-threshold inner solve. Shares no
// code with the proximal trainer.

#include <cstddef>
#include <vector>

namespace prefx::testing {

struct ReferenceResult {
    std::vector<double> w;
    double objective = 0.0;
    std::size_t sweeps = 0;
};

/// Minimizes sum_i log(1 + exp(-y_i w.x_i)) + lambda ||w||_1 over coordinates
/// where `active[j]` is true. `x` is row-major n × c.
ReferenceResult reference_l1_logistic(const std::vector<double>& x, const std::vector<int>& y, std::size_t c,
                                      double lambda, const std::vector<bool>& active,
                                      double tolerance = 1e-13, std::size_t max_sweeps = 100000);

double reference_objective(const std::vector<double>& x, const std::vector<int>& y, std::size_t c,
                           double lambda, const std::vector<double>& w);

}  // namespace prefx::testing
