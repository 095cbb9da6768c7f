#include "prefx/selection/cross_validation.hpp"

#include "prefx/data/splits.hpp"
#include "prefx/hmdr/problem.hpp"
#include "prefx/util/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

namespace prefx::selection {

namespace {

std::vector<hmdr::DomainId> domains_of(const std::vector<data::LabeledVector>& data) {
    std::set<hmdr::DomainId> seen;
    for (const auto& inst : data) seen.insert(inst.x.domain);
    return {seen.begin(), seen.end()};
}

double validation_accuracy(const hmdr::HmdrModel& model, const std::vector<data::LabeledVector>& rows,
                           bool shared_only) {
    std::vector<int> predictions;
    std::vector<int> golds;
    predictions.reserve(rows.size());
    golds.reserve(rows.size());
    for (const auto& r : rows) {
        const std::optional<hmdr::DomainId> domain =
            shared_only ? std::nullopt : std::optional<hmdr::DomainId>(r.x.domain);
        predictions.push_back(model.predict_label(r.x, domain));
        golds.push_back(r.y);
    }
    return accuracy_with_ties(predictions, golds);
}

bool sparser(const hmdr::HmdrParams& a, const hmdr::HmdrParams& b) {
    return std::tie(a.lambda_b, a.lambda_s) > std::tie(b.lambda_b, b.lambda_s);
}

}  // namespace

CvResult cross_validate(const std::vector<data::LabeledVector>& train, const data::ConceptCatalog& catalog,
                        const HyperGrid& grid, const CvOptions& options) {
    if (grid.candidates.empty()) throw ConfigError("cross_validate: empty grid");
    for (const auto& p : grid.candidates) hmdr::validate(p);
    hmdr::validate(options.train);

    const auto augmented = data::augment_symmetric(hmdr::drop_ties(train));
    const auto domains = options.training_domains.empty() ? domains_of(augmented) : options.training_domains;

    std::vector<std::size_t> indices(augmented.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::vector<std::size_t> mirror_of(augmented.size());
    for (std::size_t i = 0; i < augmented.size(); ++i) mirror_of[i] = i ^ 1U;
    const auto folds = data::kfold(indices, options.folds, options.seed, mirror_of);

    // Path order: sparsest first so warm starts move toward denser solutions.
    std::vector<std::size_t> order(grid.candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sparser(grid.candidates[a], grid.candidates[b]);
    });

    CvResult result;
    result.scores.resize(grid.candidates.size());
    for (std::size_t i = 0; i < grid.candidates.size(); ++i) result.scores[i].params = grid.candidates[i];

    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<data::LabeledVector> fit_rows;
        std::vector<data::LabeledVector> check_rows;
        for (std::size_t i : folds[f].train) fit_rows.push_back(augmented[i]);
        for (std::size_t i : folds[f].validation) check_rows.push_back(augmented[i]);
        const auto problem = hmdr::Problem::from_vectors(fit_rows, catalog, domains);

        std::optional<hmdr::Weights> previous;
        for (std::size_t k : order) {
            auto config = options.train;
            config.seed = options.seed;
            const auto* warm = options.warm_start && previous ? &*previous : nullptr;
            auto fitted = hmdr::fit_weights(problem, grid.candidates[k], config, warm);
            auto& score = result.scores[k];
            if (!fitted.info.converged) score.converged = false;
            hmdr::HmdrModel model(domains, problem.shared_mask(), problem.domain_masks(), fitted.weights,
                                  grid.candidates[k], fitted.info);
            score.fold_accuracy.push_back(validation_accuracy(model, check_rows, options.shared_weights_only));
            previous = std::move(fitted.weights);
        }
    }

    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < result.scores.size(); ++k) {
        auto& score = result.scores[k];
        score.mean_accuracy = std::accumulate(score.fold_accuracy.begin(), score.fold_accuracy.end(), 0.0) /
                              static_cast<double>(score.fold_accuracy.size());
        if (!score.converged) continue;
        if (!best || score.mean_accuracy > result.scores[*best].mean_accuracy ||
            (score.mean_accuracy == result.scores[*best].mean_accuracy &&
             sparser(score.params, result.scores[*best].params)))
            best = k;
    }
    if (!best) {
        std::string detail;
        for (const auto& s : result.scores)
            detail += " (lambda_b=" + std::to_string(s.params.lambda_b) +
                      ", lambda_s=" + std::to_string(s.params.lambda_s) + ")";
        throw SelectionError("cross_validate: no configuration converged in every fold:" + detail);
    }
    result.best_index = *best;
    result.best = grid.candidates[*best];
    spdlog::debug("cv: chose lambda_b={} lambda_s={} (accuracy {:.4f})", result.best.lambda_b,
                  result.best.lambda_s, result.scores[*best].mean_accuracy);
    return result;
}

}  // namespace prefx::selection
