#pragma once

namespace prefx::hmdr {

/// 1 / (1 + exp(-z)) without overflow for large |z|.
double sigmoid(double z);

/// log(1 + exp(-y * margin)) for y in {+1, -1}. Throws NumericError on a
/// non-finite margin and std::invalid_argument on a bad label.
double logistic_loss(int y, double margin);

/// d/dmargin of logistic_loss: -y * sigmoid(-y * margin).
double logistic_loss_derivative(int y, double margin);

/// Loss and its derivative in one exp/log1p evaluation; `margin` must be finite.
inline void logistic_loss_and_slope(int y, double margin, double& loss, double& slope);

/// sign(w) * max(|w| - t, 0).
double soft_threshold(double w, double t);

}  // namespace prefx::hmdr

#include <cmath>

inline void prefx::hmdr::logistic_loss_and_slope(int y, double margin, double& loss, double& slope) {
    const double m = y * margin;
    if (m > 0.0) {
        const double e = std::exp(-m);
        loss = std::log1p(e);
        slope = -y * (e / (1.0 + e));
    } else {
        const double e = std::exp(m);
        loss = -m + std::log1p(e);
        slope = -y * (1.0 / (1.0 + e));
    }
}
