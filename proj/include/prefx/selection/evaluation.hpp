#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/data/splits.hpp"
#include "prefx/hmdr/trainer.hpp"
#include "prefx/selection/cross_validation.hpp"
#include "prefx/selection/grid.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prefx::selection {

struct ProtocolOptions {
    std::vector<std::uint64_t> seeds;
    std::size_t train_size = 0;
    /// In-domain only; leave-one-out tests on the whole held-out domain.
    std::size_t test_size = 0;
    std::size_t folds = 5;
    hmdr::TrainConfig cv_train = CvOptions{}.train;
    hmdr::TrainConfig final_train;
    /// Replaces grid_for(variant, number of training domains).
    std::optional<HyperGrid> grid;
    /// Splits run on this many threads; results are merged in split order.
    std::size_t threads = 1;

    /// 25 seeds, 2800 train / 400 test.
    static ProtocolOptions in_domain_defaults();
    /// 5 seeds per held-out domain, 2450 train.
    static ProtocolOptions leave_one_out_defaults();
};

struct SplitResult {
    std::uint64_t seed = 0;
    data::SplitKind kind = data::SplitKind::in_domain;
    std::optional<hmdr::DomainId> held_out_domain;
    hmdr::HmdrParams params;
    std::size_t train_instances = 0;
    std::size_t test_instances = 0;
    double accuracy = 0.0;
    std::map<hmdr::DomainId, double> domain_accuracy;
    /// Indices into the protocol's input, for audits and Bayes-rate checks.
    std::vector<std::size_t> test_indices;
};

struct EvalReport {
    hmdr::Variant variant = hmdr::Variant::hmdr;
    data::SplitKind kind = data::SplitKind::in_domain;
    std::vector<std::uint64_t> seeds;
    std::vector<SplitResult> splits;
    /// Mean over splits of each domain's test accuracy.
    std::map<hmdr::DomainId, double> domain_mean;
    /// Mean of split accuracies.
    double overall_mean = 0.0;
};

/// Trains on every domain. Per split: cross-validate on the training part,
/// retrain the chosen configuration on all of it, score the test part. Tie
/// labels are never drawn into splits.
EvalReport run_in_domain(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                         hmdr::Variant variant, const ProtocolOptions& options = ProtocolOptions::in_domain_defaults());

/// Holds out each domain in turn and predicts it with shared weights only.
/// Rejects specific_only, which has no shared weights.
EvalReport run_out_of_domain(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                             hmdr::Variant variant,
                             const ProtocolOptions& options = ProtocolOptions::leave_one_out_defaults());

std::string serialize_report(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace prefx::selection
