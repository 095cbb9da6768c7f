#include "prefx/hmdr/problem.hpp"

#include "prefx/hmdr/logistic.hpp"
#include "prefx/util/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace prefx::hmdr {

void DomainBlock::add_row(std::span<const std::pair<std::size_t, double>> entries, int label,
                          double multiplicity) {
    for (const auto& [j, v] : entries) {
        if (v == 0.0) continue;
        cols.push_back(j);
        vals.push_back(v);
    }
    row_start.push_back(cols.size());
    y.push_back(label);
    count.push_back(multiplicity);
}

double DomainBlock::instances() const {
    double n = 0.0;
    for (double c : count) n += c;
    return n;
}

std::vector<double> DomainBlock::dense(std::size_t concepts) const {
    std::vector<double> out(rows() * concepts, 0.0);
    for (std::size_t i = 0; i < rows(); ++i)
        for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k) out[i * concepts + cols[k]] = vals[k];
    return out;
}

Problem::Problem(std::size_t concepts, std::vector<DomainId> domains, Mask shared_mask,
                 std::vector<Mask> domain_masks, std::vector<DomainBlock> blocks)
    : concepts_(concepts),
      domains_(std::move(domains)),
      shared_mask_(std::move(shared_mask)),
      domain_masks_(std::move(domain_masks)),
      blocks_(std::move(blocks)) {
    if (shared_mask_.size() != concepts_) throw ValidationError("problem: shared mask length");
    if (domain_masks_.size() != domains_.size() || blocks_.size() != domains_.size())
        throw ValidationError("problem: one mask and one block per domain required");
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        if (domain_masks_[d].size() != concepts_) throw ValidationError("problem: domain mask length");
        for (std::size_t j = 0; j < concepts_; ++j)
            if (shared_mask_[j] && !domain_masks_[d][j])
                throw ValidationError("problem: domain mask must contain the shared mask");
        const auto& blk = blocks_[d];
        if (blk.row_start.size() != blk.rows() + 1 || blk.count.size() != blk.rows())
            throw ValidationError("problem: malformed block");
        for (double m : blk.count)
            if (!(m > 0.0)) throw ValidationError("problem: row multiplicity must be positive");
        for (std::size_t k = 0; k < blk.cols.size(); ++k) {
            if (blk.cols[k] >= concepts_) throw ValidationError("problem: column out of range");
            if (!domain_masks_[d][blk.cols[k]])
                throw ValidationError("problem: data for domain " + domains_[d] + " uses concept " +
                                      std::to_string(blk.cols[k]) + " outside the domain mask");
        }
        for (int yi : blk.y)
            if (yi != 1 && yi != -1) throw ValidationError("problem: labels must be +1 or -1");
    }
}

Problem Problem::from_vectors(const std::vector<data::LabeledVector>& data,
                              const data::ConceptCatalog& catalog,
                              std::vector<DomainId> training_domains, bool merge_duplicates) {
    if (training_domains.empty()) {
        std::set<DomainId> seen;
        for (const auto& inst : data) seen.insert(inst.x.domain);
        training_domains.assign(seen.begin(), seen.end());
    }
    const std::size_t c = catalog.size();
    std::vector<Mask> masks;
    for (const auto& d : training_domains) masks.push_back(domain_mask_from(catalog, d));

    using Row = std::vector<std::pair<std::size_t, double>>;
    struct Pending {
        Row row;
        int y;
        double count;
    };
    std::vector<std::vector<Pending>> rows(training_domains.size());
    std::vector<std::map<std::pair<Row, int>, std::size_t>> index(training_domains.size());
    for (const auto& inst : data) {
        auto it = std::find(training_domains.begin(), training_domains.end(), inst.x.domain);
        if (it == training_domains.end())
            throw ValidationError("problem: instance " + inst.x.triplet_id + " from non-training domain " +
                                  inst.x.domain);
        if (inst.y != 1 && inst.y != -1)
            throw ValidationError("problem: instance " + inst.x.triplet_id + " has a tie label");
        const auto d = static_cast<std::size_t>(it - training_domains.begin());
        const double sign = merge_duplicates ? inst.y : 1.0;
        Row row;
        for (const auto& [j, v] : inst.x.values) {
            if (j < 0 || static_cast<std::size_t>(j) >= c)
                throw ValidationError("problem: concept id out of range in " + inst.x.triplet_id);
            if (v != 0.0) row.emplace_back(static_cast<std::size_t>(j), sign * v);
        }
        const int label = merge_duplicates ? 1 : inst.y;
        if (merge_duplicates) {
            auto [pos, inserted] = index[d].try_emplace({row, label}, rows[d].size());
            if (!inserted) {
                rows[d][pos->second].count += 1.0;
                continue;
            }
        }
        rows[d].push_back({std::move(row), label, 1.0});
    }
    std::vector<DomainBlock> blocks(training_domains.size());
    for (std::size_t d = 0; d < rows.size(); ++d)
        for (const auto& r : rows[d]) blocks[d].add_row(r.row, r.y, r.count);
    return Problem(c, std::move(training_domains), shared_mask_from(catalog), std::move(masks),
                   std::move(blocks));
}

double Problem::instances() const {
    double n = 0.0;
    for (const auto& b : blocks_) n += b.instances();
    return n;
}

void check_masks(const Weights& w, const Problem& problem) {
    if (w.b.size() != problem.concepts() || w.s.size() != problem.domain_count())
        throw ValidationError("weights do not match the problem shape");
    for (std::size_t j = 0; j < problem.concepts(); ++j)
        if (!problem.shared_mask()[j] && w.b[j] != 0.0)
            throw ValidationError("b is nonzero outside the shared mask at concept " + std::to_string(j));
    for (std::size_t d = 0; d < problem.domain_count(); ++d) {
        if (w.s[d].size() != problem.concepts()) throw ValidationError("s has wrong length");
        for (std::size_t j = 0; j < problem.concepts(); ++j)
            if (!problem.domain_masks()[d][j] && w.s[d][j] != 0.0)
                throw ValidationError("s[" + problem.domains()[d] + "] is nonzero outside its mask at concept " +
                                      std::to_string(j));
    }
}

namespace {

double row_dot(const DomainBlock& blk, std::size_t i, const std::vector<double>& w) {
    double z = 0.0;
    for (std::size_t k = blk.row_start[i]; k < blk.row_start[i + 1]; ++k) z += blk.vals[k] * w[blk.cols[k]];
    return z;
}

double row_dot2(const DomainBlock& blk, std::size_t i, const std::vector<double>& b,
                const std::vector<double>& s) {
    double z = 0.0;
    for (std::size_t k = blk.row_start[i]; k < blk.row_start[i + 1]; ++k)
        z += blk.vals[k] * (b[blk.cols[k]] + s[blk.cols[k]]);
    return z;
}

}  // namespace

double smooth_loss(const Weights& w, const Problem& problem, const HmdrParams& params) {
    const double alpha = params.effective_alpha();
    double total = 0.0;
    for (std::size_t d = 0; d < problem.domain_count(); ++d) {
        const auto& blk = problem.blocks()[d];
        double specific = 0.0;
        double shared = 0.0;
        for (std::size_t i = 0; i < blk.rows(); ++i) {
            specific += blk.count[i] * logistic_loss(blk.y[i], row_dot2(blk, i, w.b, w.s[d]));
            if (alpha != 0.0) shared += blk.count[i] * logistic_loss(blk.y[i], row_dot(blk, i, w.b));
        }
        total += specific + alpha * shared;
    }
    return total;
}

double penalty(const Weights& w, const HmdrParams& params) {
    double nb = 0.0;
    for (double v : w.b) nb += std::abs(v);
    double ns = 0.0;
    for (const auto& sd : w.s)
        for (double v : sd) ns += std::abs(v);
    return params.lambda_b * nb + params.lambda_s * ns;
}

double objective(const Weights& w, const Problem& problem, const HmdrParams& params) {
    check_masks(w, problem);
    return smooth_loss(w, problem, params) + penalty(w, params);
}

Weights smooth_gradient(const Weights& w, const Problem& problem, const HmdrParams& params) {
    check_masks(w, problem);
    const double alpha = params.effective_alpha();
    const std::size_t c = problem.concepts();
    Weights g = Weights::zeros(c, problem.domain_count());
    for (std::size_t d = 0; d < problem.domain_count(); ++d) {
        const auto& blk = problem.blocks()[d];
        for (std::size_t i = 0; i < blk.rows(); ++i) {
            const double r_spec = blk.count[i] * logistic_loss_derivative(blk.y[i], row_dot2(blk, i, w.b, w.s[d]));
            const double r_shared =
                alpha != 0.0 ? alpha * blk.count[i] * logistic_loss_derivative(blk.y[i], row_dot(blk, i, w.b)) : 0.0;
            for (std::size_t k = blk.row_start[i]; k < blk.row_start[i + 1]; ++k) {
                g.b[blk.cols[k]] += (r_spec + r_shared) * blk.vals[k];
                g.s[d][blk.cols[k]] += r_spec * blk.vals[k];
            }
        }
        for (std::size_t j = 0; j < c; ++j)
            if (!problem.domain_masks()[d][j]) g.s[d][j] = 0.0;
    }
    for (std::size_t j = 0; j < c; ++j)
        if (!problem.shared_mask()[j]) g.b[j] = 0.0;
    return g;
}

}  // namespace prefx::hmdr
