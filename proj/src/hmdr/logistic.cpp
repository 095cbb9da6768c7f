#include "prefx/hmdr/logistic.hpp"

#include "prefx/util/error.hpp"

#include <cmath>
#include <stdexcept>

namespace prefx::hmdr {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_loss(int y, double margin) {
    if (y != 1 && y != -1) throw std::invalid_argument("logistic_loss: label must be +1 or -1");
    if (!std::isfinite(margin)) throw NumericError("logistic_loss: non-finite margin");
    const double m = y * margin;
    if (m > 0.0) return std::log1p(std::exp(-m));
    return -m + std::log1p(std::exp(m));
}

double logistic_loss_derivative(int y, double margin) {
    return -y * sigmoid(-y * margin);
}

double soft_threshold(double w, double t) {
    if (w > t) return w - t;
    if (w < -t) return w + t;
    return 0.0;
}

}  // namespace prefx::hmdr
