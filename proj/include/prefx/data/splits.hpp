#pragma once

#include "prefx/data/triplet.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace prefx::data {

enum class SplitKind { in_domain, leave_one_out, kfold };

struct Split {
    std::uint64_t seed = 0;
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
    /// Dense domain index held out (leave-one-out only).
    std::optional<std::size_t> held_out_domain;
};

struct SplitPlan {
    SplitKind kind = SplitKind::in_domain;
    std::vector<std::uint64_t> seeds;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t fold_count = 0;
    std::vector<Split> splits;
};

inline constexpr std::size_t kPaperTrainSize = 2800;
inline constexpr std::size_t kPaperTestSize = 400;
inline constexpr std::size_t kPaperSplitCount = 25;
inline constexpr std::size_t kPaperLooTrainSize = 2450;
inline constexpr std::size_t kPaperLooSeedsPerDomain = 5;

/// Seeds 0..n-1, the default registry.
std::vector<std::uint64_t> default_seeds(std::size_t n);

/// One uniform train/test draw per seed from `usable` (instance ids).
SplitPlan make_in_domain_splits(std::span<const std::size_t> usable,
                                std::span<const std::uint64_t> seeds,
                                std::size_t train_n = kPaperTrainSize,
                                std::size_t test_n = kPaperTestSize);

/// For every domain and seed: test = that domain's usable instances, train = a
/// size-`train_n` subsample of the other domains. `domain_of[i]` is instance i's
/// dense domain index.
SplitPlan make_leave_one_out_splits(std::span<const std::size_t> usable,
                                    std::span<const std::size_t> domain_of,
                                    std::size_t domain_count,
                                    std::span<const std::uint64_t> seeds,
                                    std::size_t train_n = kPaperLooTrainSize);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// k folds over `indices`. When `mirror_of` is given, mirror_of[i] names the
/// augmented twin of index i and both always land in the same fold.
std::vector<Fold> kfold(std::span<const std::size_t> indices, std::size_t k, std::uint64_t seed,
                        std::span<const std::size_t> mirror_of = {});

}  // namespace prefx::data
