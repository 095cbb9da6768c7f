#pragma once

// Synthetic multi-domain preference data drawn from a known HMDR model.

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace prefx::testing {

struct PlantedSpec {
    std::size_t domains = 6;
    std::size_t concepts = 40;
    std::size_t shared_signal = 12;
    std::size_t specific_signal_per_domain = 3;
    std::size_t per_domain = 500;
    /// Probability that an admissible concept is active in a triplet.
    double density = 0.35;
    double weight_low = 0.4;
    double weight_high = 0.9;
    /// Std-dev of per-domain deviations on shared signal concepts.
    double deviation_sd = 0.15;
    std::uint64_t seed = 1;
};

struct PlantedData {
    data::ConceptCatalog catalog;
    std::vector<data::DomainId> domains;
    std::vector<data::ConceptVector> vectors;
    std::vector<int> labels;
    /// P(y = +1 | x) under the generating model.
    std::vector<double> p_true;
    std::vector<std::size_t> domain_of;
    std::vector<double> b;
    std::vector<std::vector<double>> s;

    std::vector<data::LabeledVector> labeled(std::span<const std::size_t> idx) const;
    /// Mean of max(p, 1 - p) over the given instances.
    double bayes_accuracy(std::span<const std::size_t> idx) const;
};

PlantedData make_planted(const PlantedSpec& spec);

}  // namespace prefx::testing
