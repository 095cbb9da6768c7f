#include "prefx/selection/grid.hpp"

#include "prefx/util/error.hpp"

#include <algorithm>

namespace prefx::selection {

namespace {

std::vector<double> distinct(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

}  // namespace

HyperGrid grid_for(hmdr::Variant variant, std::size_t domain_count) {
    if (domain_count == 0) throw ConfigError("grid_for: need at least one domain");
    HyperGrid grid;
    grid.variant = variant;
    if (variant == hmdr::Variant::shared_only || variant == hmdr::Variant::specific_only) {
        for (double l : {0.05, 0.1, 0.125, 0.25, 0.5, 1.0, 1.5, 2.5, 5.0})
            grid.candidates.push_back({0.0, l, l, variant});
        return grid;
    }
    const double d = static_cast<double>(domain_count);
    const auto lb = distinct({2.0 / (d * d), 1.0 / (2.0 * d), 1.0 / d});
    const auto ls = distinct({1.0 / (d * d), 2.0 / (d * d), 1.0 / (2.0 * d), 1.0 / d});
    const double alpha = variant == hmdr::Variant::hmdr ? 1.0 / d : 0.0;
    for (double b : lb)
        for (double s : ls)
            if (b >= s) grid.candidates.push_back({alpha, b, s, variant});
    return grid;
}

double accuracy_with_ties(std::span<const int> predictions, std::span<const int> golds) {
    if (predictions.size() != golds.size())
        throw ValidationError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                              std::to_string(golds.size()) + " golds");
    if (predictions.empty()) throw ValidationError("accuracy: no instances");
    double score = 0.0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        if (golds[i] != 1 && golds[i] != -1) throw ValidationError("accuracy: gold labels must be +1 or -1");
        if (predictions[i] == kTie)
            score += 0.5;
        else if (predictions[i] == 1 || predictions[i] == -1)
            score += predictions[i] == golds[i] ? 1.0 : 0.0;
        else
            throw ValidationError("accuracy: prediction " + std::to_string(predictions[i]) + " is not +1, -1 or tie");
    }
    return score / static_cast<double>(golds.size());
}

}  // namespace prefx::selection
