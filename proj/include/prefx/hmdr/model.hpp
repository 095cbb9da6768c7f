#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace prefx::hmdr {

using data::ConceptId;
using data::DomainId;

enum class Variant { hmdr, shared_only, specific_only, dirty };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct HmdrParams {
    double alpha = 0.0;
    double lambda_b = 0.1;
    double lambda_s = 0.1;
    Variant variant = Variant::hmdr;

    /// Shared-loss weight actually optimized: 0 for every variant but hmdr.
    double effective_alpha() const { return variant == Variant::hmdr ? alpha : 0.0; }
    bool uses_shared() const { return variant != Variant::specific_only; }
    bool uses_specific() const { return variant != Variant::shared_only; }

    friend bool operator==(const HmdrParams&, const HmdrParams&) = default;
};

/// Throws ConfigError for negative alpha or non-positive lambdas.
void validate(const HmdrParams& p);

using Mask = std::vector<std::uint8_t>;

/// Shared weight vector plus one deviation vector per training domain.
struct Weights {
    std::vector<double> b;
    std::vector<std::vector<double>> s;

    static Weights zeros(std::size_t concepts, std::size_t domains) {
        return {std::vector<double>(concepts, 0.0),
                std::vector<std::vector<double>>(domains, std::vector<double>(concepts, 0.0))};
    }
    friend bool operator==(const Weights&, const Weights&) = default;
};

struct TrainingInfo {
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    double final_objective = 0.0;
    bool converged = false;
    std::string optimizer = "proximal";
};

class HmdrModel {
public:
    HmdrModel() = default;
    HmdrModel(std::vector<DomainId> domains, Mask shared_mask, std::vector<Mask> domain_masks,
              Weights weights, HmdrParams params, TrainingInfo info = {});

    std::size_t concept_count() const noexcept { return shared_mask_.size(); }
    const std::vector<DomainId>& domains() const noexcept { return domains_; }
    std::optional<std::size_t> domain_index(const DomainId& d) const;

    const std::vector<double>& b() const noexcept { return weights_.b; }
    /// Deviation vector for a training domain; throws LookupError otherwise.
    const std::vector<double>& s(const DomainId& d) const;
    const Weights& weights() const noexcept { return weights_; }
    const Mask& shared_mask() const noexcept { return shared_mask_; }
    const Mask& domain_mask(const DomainId& d) const;
    const HmdrParams& params() const noexcept { return params_; }
    const TrainingInfo& info() const noexcept { return info_; }

    /// b_j + s_j^(d); shared weight only when the domain is absent or unknown.
    double weight(ConceptId j, const std::optional<DomainId>& domain) const;

    /// (b + s^(d))·x, or b·x without a domain. Coordinates outside the mask
    /// carry zero weight and contribute nothing.
    double margin(const data::ConceptVector& x, const std::optional<DomainId>& domain) const;
    double predict_proba(const data::ConceptVector& x, const std::optional<DomainId>& domain) const;
    /// +1 when p >= 0.5, else -1.
    int predict_label(const data::ConceptVector& x, const std::optional<DomainId>& domain) const;

    std::size_t nonzero_shared() const;
    std::size_t nonzero_specific(const DomainId& d) const;

    std::string catalog_checksum;

private:
    std::vector<DomainId> domains_;
    Mask shared_mask_;
    std::vector<Mask> domain_masks_;
    Weights weights_;
    HmdrParams params_;
    TrainingInfo info_;
};

/// shared_mask[j] = j is shared; domain_mask[d][j] = j is shared or specific to d.
Mask shared_mask_from(const data::ConceptCatalog& catalog);
Mask domain_mask_from(const data::ConceptCatalog& catalog, const DomainId& domain);

std::string serialize_model(const HmdrModel& model);
HmdrModel parse_model(std::string_view text);
HmdrModel load_model(const std::filesystem::path& path);
void save_model(const HmdrModel& model, const std::filesystem::path& path);

}  // namespace prefx::hmdr
