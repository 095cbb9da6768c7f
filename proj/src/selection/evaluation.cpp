#include "prefx/selection/evaluation.hpp"

#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace prefx::selection {

ProtocolOptions ProtocolOptions::in_domain_defaults() {
    ProtocolOptions o;
    o.seeds = data::default_seeds(data::kPaperSplitCount);
    o.train_size = data::kPaperTrainSize;
    o.test_size = data::kPaperTestSize;
    return o;
}

ProtocolOptions ProtocolOptions::leave_one_out_defaults() {
    ProtocolOptions o;
    o.seeds = data::default_seeds(data::kPaperLooSeedsPerDomain);
    o.train_size = data::kPaperLooTrainSize;
    return o;
}

namespace {

struct Prepared {
    std::vector<hmdr::DomainId> domains;
    std::vector<std::size_t> usable;
    std::vector<std::size_t> domain_of;
};

Prepared prepare(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog) {
    if (data.empty()) throw ValidationError("evaluation: no instances");
    Prepared p;
    std::set<hmdr::DomainId> seen;
    for (const auto& inst : data) seen.insert(inst.x.domain);
    p.domains.assign(seen.begin(), seen.end());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data::validate(data[i].x, catalog);
        const auto& d = data[i].x.domain;
        p.domain_of.push_back(static_cast<std::size_t>(
            std::lower_bound(p.domains.begin(), p.domains.end(), d) - p.domains.begin()));
        if (data[i].y != 0) p.usable.push_back(i);
    }
    return p;
}

/// Runs `job(i)` for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <typename Job>
void for_each_split(std::size_t n, std::size_t threads, Job job) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t)
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        job(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next = n;
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

SplitResult run_split(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                      const data::Split& split, data::SplitKind kind, const Prepared& prep,
                      hmdr::Variant variant, const ProtocolOptions& options) {
    std::vector<data::LabeledVector> train;
    train.reserve(split.train.size());
    for (std::size_t i : split.train) train.push_back(data[i]);

    std::vector<hmdr::DomainId> training_domains;
    for (std::size_t d = 0; d < prep.domains.size(); ++d)
        if (!split.held_out_domain || *split.held_out_domain != d) training_domains.push_back(prep.domains[d]);

    const bool shared_only = kind == data::SplitKind::leave_one_out;
    const HyperGrid grid = options.grid ? *options.grid : grid_for(variant, training_domains.size());

    CvOptions cv;
    cv.folds = options.folds;
    cv.seed = split.seed;
    cv.train = options.cv_train;
    cv.shared_weights_only = shared_only;
    cv.training_domains = training_domains;
    const CvResult chosen = cross_validate(train, catalog, grid, cv);

    auto final_config = options.final_train;
    final_config.seed = split.seed;
    const auto model = hmdr::fit(train, catalog, chosen.best, final_config, training_domains);

    SplitResult r;
    r.seed = split.seed;
    r.kind = kind;
    if (split.held_out_domain) r.held_out_domain = prep.domains[*split.held_out_domain];
    r.params = chosen.best;
    r.train_instances = split.train.size();
    r.test_instances = split.test.size();
    r.test_indices = split.test;

    std::vector<int> predictions;
    std::vector<int> golds;
    std::map<hmdr::DomainId, std::pair<std::vector<int>, std::vector<int>>> by_domain;
    for (std::size_t i : split.test) {
        const auto& inst = data[i];
        const std::optional<hmdr::DomainId> domain =
            shared_only ? std::nullopt : std::optional<hmdr::DomainId>(inst.x.domain);
        const int p = model.predict_label(inst.x, domain);
        predictions.push_back(p);
        golds.push_back(inst.y);
        by_domain[inst.x.domain].first.push_back(p);
        by_domain[inst.x.domain].second.push_back(inst.y);
    }
    r.accuracy = accuracy_with_ties(predictions, golds);
    for (const auto& [d, pg] : by_domain) r.domain_accuracy[d] = accuracy_with_ties(pg.first, pg.second);
    return r;
}

EvalReport run_plan(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                    const data::SplitPlan& plan, const Prepared& prep, hmdr::Variant variant,
                    const ProtocolOptions& options) {
    EvalReport report;
    report.variant = variant;
    report.kind = plan.kind;
    report.seeds = plan.seeds;
    report.splits.resize(plan.splits.size());
    for_each_split(plan.splits.size(), options.threads, [&](std::size_t i) {
        report.splits[i] = run_split(data, catalog, plan.splits[i], plan.kind, prep, variant, options);
        spdlog::debug("{} split {} (seed {}): accuracy {:.4f}", to_string(variant), i, plan.splits[i].seed,
                      report.splits[i].accuracy);
    });

    std::map<hmdr::DomainId, std::pair<double, std::size_t>> sums;
    double total = 0.0;
    for (const auto& s : report.splits) {
        total += s.accuracy;
        for (const auto& [d, a] : s.domain_accuracy) {
            sums[d].first += a;
            sums[d].second += 1;
        }
    }
    for (const auto& [d, sum] : sums) report.domain_mean[d] = sum.first / static_cast<double>(sum.second);
    report.overall_mean = total / static_cast<double>(report.splits.size());
    return report;
}

void check_options(const ProtocolOptions& options) {
    if (options.seeds.empty()) throw ConfigError("evaluation: no seeds");
    if (options.threads == 0) throw ConfigError("evaluation: threads must be positive");
    hmdr::validate(options.cv_train);
    hmdr::validate(options.final_train);
}

}  // namespace

EvalReport run_in_domain(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                         hmdr::Variant variant, const ProtocolOptions& options) {
    check_options(options);
    const auto prep = prepare(data, catalog);
    const auto plan = data::make_in_domain_splits(prep.usable, options.seeds, options.train_size, options.test_size);
    return run_plan(data, catalog, plan, prep, variant, options);
}

EvalReport run_out_of_domain(const std::vector<data::LabeledVector>& data, const data::ConceptCatalog& catalog,
                             hmdr::Variant variant, const ProtocolOptions& options) {
    if (variant == hmdr::Variant::specific_only)
        throw ConfigError("out-of-domain evaluation needs shared weights; specific_only has none");
    check_options(options);
    const auto prep = prepare(data, catalog);
    const auto plan = data::make_leave_one_out_splits(prep.usable, prep.domain_of, prep.domains.size(),
                                                      options.seeds, options.train_size);
    return run_plan(data, catalog, plan, prep, variant, options);
}

std::string serialize_report(const EvalReport& report) {
    using nlohmann::ordered_json;
    auto kind_name = [](data::SplitKind k) {
        switch (k) {
            case data::SplitKind::in_domain: return "in_domain";
            case data::SplitKind::leave_one_out: return "leave_one_out";
            case data::SplitKind::kfold: return "kfold";
        }
        return "unknown";
    };
    ordered_json j;
    j["variant"] = hmdr::to_string(report.variant);
    j["kind"] = kind_name(report.kind);
    j["seeds"] = report.seeds;
    j["overall_mean"] = report.overall_mean;
    j["domain_mean"] = ordered_json::object();
    for (const auto& [d, m] : report.domain_mean) j["domain_mean"][d] = m;
    j["splits"] = ordered_json::array();
    for (const auto& s : report.splits) {
        ordered_json row;
        row["seed"] = s.seed;
        row["kind"] = kind_name(s.kind);
        row["held_out_domain"] = s.held_out_domain ? ordered_json(*s.held_out_domain) : ordered_json(nullptr);
        row["params"] = {{"alpha", s.params.effective_alpha()},
                         {"lambda_b", s.params.lambda_b},
                         {"lambda_s", s.params.lambda_s}};
        row["train_instances"] = s.train_instances;
        row["test_instances"] = s.test_instances;
        row["accuracy"] = s.accuracy;
        row["domain_accuracy"] = ordered_json::object();
        for (const auto& [d, a] : s.domain_accuracy) row["domain_accuracy"][d] = a;
        j["splits"].push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_report(report));
}

}  // namespace prefx::selection
