#include "prefx/data/splits.hpp"

#include "prefx/util/error.hpp"
#include "prefx/util/random.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace prefx::data {

std::vector<std::uint64_t> default_seeds(std::size_t n) {
    std::vector<std::uint64_t> seeds(n);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
    return seeds;
}

SplitPlan make_in_domain_splits(std::span<const std::size_t> usable,
                                std::span<const std::uint64_t> seeds, std::size_t train_n,
                                std::size_t test_n) {
    if (usable.size() < train_n + test_n)
        throw SizingError("in-domain split needs " + std::to_string(train_n + test_n) + " instances",
                          usable.size());
    SplitPlan plan;
    plan.kind = SplitKind::in_domain;
    plan.seeds.assign(seeds.begin(), seeds.end());
    plan.train_size = train_n;
    plan.test_size = test_n;
    for (std::uint64_t seed : seeds) {
        Rng rng(seed);
        auto picks = sample_without_replacement(rng, usable.size(), train_n + test_n);
        Split split;
        split.seed = seed;
        for (std::size_t i = 0; i < test_n; ++i) split.test.push_back(usable[picks[i]]);
        for (std::size_t i = test_n; i < picks.size(); ++i) split.train.push_back(usable[picks[i]]);
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.test.begin(), split.test.end());
        plan.splits.push_back(std::move(split));
    }
    return plan;
}

SplitPlan make_leave_one_out_splits(std::span<const std::size_t> usable,
                                    std::span<const std::size_t> domain_of, std::size_t domain_count,
                                    std::span<const std::uint64_t> seeds, std::size_t train_n) {
    if (domain_count < 2) throw ConfigError("leave-one-out needs at least 2 domains");
    SplitPlan plan;
    plan.kind = SplitKind::leave_one_out;
    plan.seeds.assign(seeds.begin(), seeds.end());
    plan.train_size = train_n;
    for (std::size_t held = 0; held < domain_count; ++held) {
        std::vector<std::size_t> rest;
        std::vector<std::size_t> test;
        for (std::size_t i : usable) {
            if (i >= domain_of.size()) throw ValidationError("leave-one-out: instance without domain");
            (domain_of[i] == held ? test : rest).push_back(i);
        }
        if (rest.size() < train_n)
            throw SizingError("leave-one-out training subsample of " + std::to_string(train_n), rest.size());
        for (std::uint64_t seed : seeds) {
            Rng rng(mix_seed(seed, held));
            auto picks = sample_without_replacement(rng, rest.size(), train_n);
            Split split;
            split.seed = seed;
            split.held_out_domain = held;
            for (std::size_t p : picks) split.train.push_back(rest[p]);
            std::sort(split.train.begin(), split.train.end());
            split.test = test;
            plan.splits.push_back(std::move(split));
        }
    }
    return plan;
}

std::vector<Fold> kfold(std::span<const std::size_t> indices, std::size_t k, std::uint64_t seed,
                        std::span<const std::size_t> mirror_of) {
    if (k < 2) throw ConfigError("kfold: k must be at least 2");
    if (indices.size() < k) throw SizingError("kfold with k=" + std::to_string(k), indices.size());

    // Group each index with its mirror; a unit is assigned to exactly one fold.
    std::vector<std::vector<std::size_t>> units;
    std::map<std::size_t, std::size_t> unit_of;
    const std::set<std::size_t> members(indices.begin(), indices.end());
    for (std::size_t idx : indices) {
        if (unit_of.count(idx)) continue;
        std::size_t unit = units.size();
        units.push_back({idx});
        unit_of[idx] = unit;
        if (idx < mirror_of.size()) {
            std::size_t twin = mirror_of[idx];
            if (twin != idx && members.count(twin) &&
                !unit_of.count(twin)) {
                units[unit].push_back(twin);
                unit_of[twin] = unit;
            }
        }
    }
    if (units.size() < k) throw SizingError("kfold with k=" + std::to_string(k) + " (mirror groups)", units.size());

    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    shuffle(order, rng);

    std::vector<std::size_t> fold_of_unit(units.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) fold_of_unit[order[pos]] = pos % k;

    std::vector<Fold> folds(k);
    for (std::size_t u = 0; u < units.size(); ++u) {
        for (std::size_t f = 0; f < k; ++f) {
            auto& dst = (f == fold_of_unit[u]) ? folds[f].validation : folds[f].train;
            dst.insert(dst.end(), units[u].begin(), units[u].end());
        }
    }
    for (auto& f : folds) {
        std::sort(f.train.begin(), f.train.end());
        std::sort(f.validation.begin(), f.validation.end());
    }
    return folds;
}

}  // namespace prefx::data
