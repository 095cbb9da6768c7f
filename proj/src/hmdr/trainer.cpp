#include "prefx/hmdr/trainer.hpp"

#include "prefx/hmdr/logistic.hpp"
#include "prefx/util/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prefx::hmdr {

void validate(const TrainConfig& config) {
    if (!(config.tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (config.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(config.initial_step > 0.0)) throw ConfigError("initial_step must be > 0");
    if (!(config.step_growth >= 1.0)) throw ConfigError("step_growth must be >= 1");
}

namespace {

/// Masks actually optimized once the variant constraints are applied.
struct ActiveMasks {
    Mask b;
    std::vector<Mask> s;
};

ActiveMasks active_masks(const Problem& problem, const HmdrParams& params) {
    ActiveMasks m;
    m.b = params.uses_shared() ? problem.shared_mask() : Mask(problem.concepts(), 0);
    for (std::size_t d = 0; d < problem.domain_count(); ++d)
        m.s.push_back(params.uses_specific() ? problem.domain_masks()[d] : Mask(problem.concepts(), 0));
    return m;
}

void apply_masks(Weights& w, const ActiveMasks& m) {
    for (std::size_t j = 0; j < w.b.size(); ++j)
        if (!m.b[j]) w.b[j] = 0.0;
    for (std::size_t d = 0; d < w.s.size(); ++d)
        for (std::size_t j = 0; j < w.s[d].size(); ++j)
            if (!m.s[d][j]) w.s[d][j] = 0.0;
}

/// Loss evaluation that keeps the per-row margins for the gradient pass.
class Evaluator {
public:
    Evaluator(const Problem& p, double alpha) : problem_(p), alpha_(alpha) {
        for (const auto& blk : p.blocks()) {
            spec_.emplace_back(blk.rows(), 0.0);
            shared_.emplace_back(alpha != 0.0 ? blk.rows() : 0, 0.0);
        }
    }

    double loss(const Weights& w) {
        double total = 0.0;
        for (std::size_t d = 0; d < problem_.domain_count(); ++d) {
            const auto& blk = problem_.blocks()[d];
            const auto& sd = w.s[d];
            double specific = 0.0;
            double shared = 0.0;
            for (std::size_t i = 0; i < blk.rows(); ++i) {
                double zs = 0.0;
                double zb = 0.0;
                for (std::size_t k = blk.row_start[i]; k < blk.row_start[i + 1]; ++k) {
                    const std::size_t j = blk.cols[k];
                    zs += blk.vals[k] * (w.b[j] + sd[j]);
                    zb += blk.vals[k] * w.b[j];
                }
                if (!std::isfinite(zs) || !std::isfinite(zb)) throw NumericError("fit: non-finite margin");
                const double n = blk.count[i];
                double l = 0.0;
                double slope = 0.0;
                logistic_loss_and_slope(blk.y[i], zs, l, slope);
                specific += n * l;
                spec_[d][i] = n * slope;
                if (alpha_ != 0.0) {
                    logistic_loss_and_slope(blk.y[i], zb, l, slope);
                    shared += n * l;
                    shared_[d][i] = n * slope;
                }
            }
            total += specific + alpha_ * shared;
        }
        return total;
    }

    /// Gradient at the weights passed to the most recent loss() call.
    void gradient(Weights& g, const ActiveMasks& m) const {
        for (auto& v : g.b) v = 0.0;
        for (auto& sd : g.s)
            for (auto& v : sd) v = 0.0;
        for (std::size_t d = 0; d < problem_.domain_count(); ++d) {
            const auto& blk = problem_.blocks()[d];
            auto& gs = g.s[d];
            for (std::size_t i = 0; i < blk.rows(); ++i) {
                const double r_spec = spec_[d][i];
                const double r_both = alpha_ != 0.0 ? r_spec + alpha_ * shared_[d][i] : r_spec;
                for (std::size_t k = blk.row_start[i]; k < blk.row_start[i + 1]; ++k) {
                    g.b[blk.cols[k]] += r_both * blk.vals[k];
                    gs[blk.cols[k]] += r_spec * blk.vals[k];
                }
            }
        }
        apply_masks(g, m);
    }

private:
    const Problem& problem_;
    double alpha_;
    // Per-row loss derivatives at the last evaluated point.
    std::vector<std::vector<double>> spec_;
    std::vector<std::vector<double>> shared_;
};

/// x - t g, soft-thresholded, masked.
void prox_step(const Weights& x, const Weights& g, double t, const HmdrParams& params, const ActiveMasks& m,
               Weights& out) {
    for (std::size_t j = 0; j < x.b.size(); ++j)
        out.b[j] = m.b[j] ? soft_threshold(x.b[j] - t * g.b[j], t * params.lambda_b) : 0.0;
    for (std::size_t d = 0; d < x.s.size(); ++d)
        for (std::size_t j = 0; j < x.s[d].size(); ++j)
            out.s[d][j] = m.s[d][j] ? soft_threshold(x.s[d][j] - t * g.s[d][j], t * params.lambda_s) : 0.0;
}

/// <g, a - b> and ||a - b||².
std::pair<double, double> linear_and_sq(const Weights& g, const Weights& a, const Weights& b) {
    double lin = 0.0;
    double sq = 0.0;
    for (std::size_t j = 0; j < a.b.size(); ++j) {
        const double diff = a.b[j] - b.b[j];
        lin += g.b[j] * diff;
        sq += diff * diff;
    }
    for (std::size_t d = 0; d < a.s.size(); ++d)
        for (std::size_t j = 0; j < a.s[d].size(); ++j) {
            const double diff = a.s[d][j] - b.s[d][j];
            lin += g.s[d][j] * diff;
            sq += diff * diff;
        }
    return {lin, sq};
}

double penalty_active(const Weights& w, const HmdrParams& params) {
    return penalty(w, params);
}

FitResult fit_proximal(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
                       const Weights* warm_start, const Observer& observer) {
    const ActiveMasks masks = active_masks(problem, params);
    const std::size_t c = problem.concepts();
    const std::size_t D = problem.domain_count();

    Weights x = warm_start ? *warm_start : Weights::zeros(c, D);
    if (x.b.size() != c || x.s.size() != D) throw ValidationError("warm start has the wrong shape");
    apply_masks(x, masks);

    Evaluator eval(problem, params.effective_alpha());
    double fx = eval.loss(x);
    double Fx = fx + penalty_active(x, params);

    FitResult result;
    result.objective_trace.push_back(Fx);

    Weights y = x;        // extrapolated point
    Weights candidate = x;
    Weights grad = Weights::zeros(c, D);
    double fy = fx;
    double momentum = 1.0;
    double step = config.initial_step;
    bool converged = false;
    std::size_t iter = 0;

    for (; iter < config.max_iterations; ++iter) {
        // Gradient at y; fy and the evaluator's margins describe y.
        eval.gradient(grad, masks);
        double f_candidate = 0.0;
        bool first_try = true;
        while (true) {
            prox_step(y, grad, step, params, masks, candidate);
            f_candidate = eval.loss(candidate);
            auto [lin, sq] = linear_and_sq(grad, candidate, y);
            const double bound = fy + lin + sq / (2.0 * step);
            if (f_candidate <= bound + 1e-12 * std::max(1.0, std::abs(bound))) break;
            first_try = false;
            step *= 0.5;
            if (step < config.min_step) {
                std::ostringstream msg;
                msg << "step size fell below " << config.min_step << " at iteration " << iter
                    << " (objective " << Fx << ")";
                throw ConvergenceError(msg.str());
            }
        }
        const double F_candidate = f_candidate + penalty_active(candidate, params);

        if (F_candidate <= Fx) {
            const double decrease = Fx - F_candidate;
            const double next_momentum = config.accelerated
                                             ? 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum))
                                             : 1.0;
            const double beta = config.accelerated ? (momentum - 1.0) / next_momentum : 0.0;
            momentum = next_momentum;
            // y = candidate + beta (candidate - x)
            for (std::size_t j = 0; j < c; ++j) y.b[j] = candidate.b[j] + beta * (candidate.b[j] - x.b[j]);
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t j = 0; j < c; ++j)
                    y.s[d][j] = candidate.s[d][j] + beta * (candidate.s[d][j] - x.s[d][j]);
            apply_masks(y, masks);
            std::swap(x, candidate);
            fx = f_candidate;
            Fx = F_candidate;
            result.objective_trace.push_back(Fx);
            if (observer) observer(iter + 1, x, Fx);
            if (decrease < config.tolerance * std::max(1.0, std::abs(Fx))) {
                converged = true;
                ++iter;
                break;
            }
            // Without extrapolation the evaluator already holds x's margins.
            fy = beta != 0.0 ? eval.loss(y) : fx;
        } else {
            // Extrapolation overshot: restart momentum from the current iterate.
            if (!config.accelerated || momentum == 1.0) {
                converged = true;
                ++iter;
                break;
            }
            momentum = 1.0;
            y = x;
            fy = eval.loss(y);
        }
        if (first_try) step *= config.step_growth;
    }

    result.weights = std::move(x);
    result.info.seed = config.seed;
    result.info.iterations = iter;
    result.info.final_objective = Fx;
    result.info.converged = converged;
    result.info.optimizer = config.accelerated ? "proximal-accelerated" : "proximal";
    return result;
}

FitResult fit_adam(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
                   const Weights* warm_start, const Observer& observer) {
    const ActiveMasks masks = active_masks(problem, params);
    const std::size_t c = problem.concepts();
    const std::size_t D = problem.domain_count();
    Weights x = warm_start ? *warm_start : Weights::zeros(c, D);
    apply_masks(x, masks);
    Weights m1 = Weights::zeros(c, D), m2 = Weights::zeros(c, D), grad = Weights::zeros(c, D);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Evaluator eval(problem, params.effective_alpha());
    const double scale = 1.0 / std::max(1.0, problem.instances());
    FitResult result;
    double F = eval.loss(x) + penalty(x, params);
    result.objective_trace.push_back(F);
    double prev = F;
    bool converged = false;
    std::size_t iter = 0;
    auto update = [&](double& w, double& a, double& v, double g, double lambda, std::size_t t) {
        g += lambda * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
        g *= scale;
        a = beta1 * a + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double ah = a / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        w -= config.adam_learning_rate * ah / (std::sqrt(vh) + eps);
    };
    for (; iter < config.max_iterations; ++iter) {
        eval.gradient(grad, masks);
        for (std::size_t j = 0; j < c; ++j)
            if (masks.b[j]) update(x.b[j], m1.b[j], m2.b[j], grad.b[j], params.lambda_b, iter + 1);
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t j = 0; j < c; ++j)
                if (masks.s[d][j]) update(x.s[d][j], m1.s[d][j], m2.s[d][j], grad.s[d][j], params.lambda_s, iter + 1);
        F = eval.loss(x) + penalty(x, params);
        result.objective_trace.push_back(F);
        if (observer) observer(iter + 1, x, F);
        if (std::abs(prev - F) < config.tolerance * std::max(1.0, std::abs(F))) {
            converged = true;
            ++iter;
            break;
        }
        prev = F;
    }
    for (auto& v : x.b)
        if (std::abs(v) < config.adam_threshold) v = 0.0;
    for (auto& sd : x.s)
        for (auto& v : sd)
            if (std::abs(v) < config.adam_threshold) v = 0.0;
    result.info.final_objective = eval.loss(x) + penalty(x, params);
    result.weights = std::move(x);
    result.info.seed = config.seed;
    result.info.iterations = iter;
    result.info.converged = converged;
    result.info.optimizer = "adam";
    return result;
}

}  // namespace

FitResult fit_weights(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
                      const Weights* warm_start, const Observer& observer) {
    validate(params);
    validate(config);
    if (problem.instances() <= 0.0) throw ValidationError("fit: no training instances");
    if (config.optimizer == Optimizer::adam) return fit_adam(problem, params, config, warm_start, observer);
    return fit_proximal(problem, params, config, warm_start, observer);
}

HmdrModel fit(const Problem& problem, const HmdrParams& params, const TrainConfig& config,
              const Weights* warm_start, const Observer& observer) {
    FitResult r = fit_weights(problem, params, config, warm_start, observer);
    return HmdrModel(problem.domains(), problem.shared_mask(), problem.domain_masks(), std::move(r.weights),
                     params, r.info);
}

std::vector<data::LabeledVector> drop_ties(const std::vector<data::LabeledVector>& labeled) {
    std::vector<data::LabeledVector> out;
    out.reserve(labeled.size());
    for (const auto& inst : labeled)
        if (inst.y != 0) out.push_back(inst);
    return out;
}

HmdrModel fit(const std::vector<data::LabeledVector>& labeled, const data::ConceptCatalog& catalog,
              const HmdrParams& params, const TrainConfig& config, std::vector<DomainId> training_domains) {
    auto augmented = data::augment_symmetric(drop_ties(labeled));
    Problem problem = Problem::from_vectors(augmented, catalog, std::move(training_domains));
    HmdrModel model = fit(problem, params, config);
    model.catalog_checksum = data::catalog_checksum(catalog);
    return model;
}

}  // namespace prefx::hmdr
