#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/hmdr/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace prefx::hmdr {

/// One domain's design matrix in CSR form, ±1 labels and row multiplicities.
struct DomainBlock {
    std::vector<std::size_t> row_start{0};
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    std::vector<int> y;
    /// How many identical instances the row stands for.
    std::vector<double> count;

    std::size_t rows() const noexcept { return y.size(); }
    double instances() const;
    void add_row(std::span<const std::pair<std::size_t, double>> entries, int label, double multiplicity = 1.0);
    /// Dense row-major rows; used by test oracles.
    std::vector<double> dense(std::size_t concepts) const;
};

/// Training data grouped by domain, with the masks every weight must respect.
class Problem {
public:
    Problem(std::size_t concepts, std::vector<DomainId> domains, Mask shared_mask,
            std::vector<Mask> domain_masks, std::vector<DomainBlock> blocks);

    /// Groups labeled vectors by domain. `training_domains` fixes the domain
    /// order (and which domains get a deviation vector); empty means the sorted
    /// set of domains present in `data`.
    ///
    /// With `merge_duplicates`, each instance is rewritten as (y·x, +1), which
    /// leaves its loss unchanged, and identical rows are merged into one row with
    /// a multiplicity. Mirror pairs (x, y) / (-x, -y) always collapse this way.
    static Problem from_vectors(const std::vector<data::LabeledVector>& data,
                                const data::ConceptCatalog& catalog,
                                std::vector<DomainId> training_domains = {},
                                bool merge_duplicates = true);

    std::size_t concepts() const noexcept { return concepts_; }
    std::size_t domain_count() const noexcept { return domains_.size(); }
    const std::vector<DomainId>& domains() const noexcept { return domains_; }
    const Mask& shared_mask() const noexcept { return shared_mask_; }
    const std::vector<Mask>& domain_masks() const noexcept { return domain_masks_; }
    const std::vector<DomainBlock>& blocks() const noexcept { return blocks_; }
    /// Total instance count, multiplicities included.
    double instances() const;

private:
    std::size_t concepts_;
    std::vector<DomainId> domains_;
    Mask shared_mask_;
    std::vector<Mask> domain_masks_;
    std::vector<DomainBlock> blocks_;
};

/// Σ_d [Σ_i ℓ(y, (b+s_d)·x) + α Σ_i ℓ(y, b·x)] with α = params.effective_alpha();
/// each row counts with its multiplicity.
double smooth_loss(const Weights& w, const Problem& problem, const HmdrParams& params);

/// λ_b‖b‖₁ + λ_s Σ_d ‖s_d‖₁.
double penalty(const Weights& w, const HmdrParams& params);

/// smooth_loss + penalty. Throws ValidationError if `w` breaks a mask.
double objective(const Weights& w, const Problem& problem, const HmdrParams& params);

/// Gradient of smooth_loss, masked to the shared and per-domain masks.
Weights smooth_gradient(const Weights& w, const Problem& problem, const HmdrParams& params);

/// Throws ValidationError when a weight is nonzero outside its mask.
void check_masks(const Weights& w, const Problem& problem);

}  // namespace prefx::hmdr
