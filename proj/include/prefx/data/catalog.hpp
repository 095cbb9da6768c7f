#pragma once

#include "prefx/data/triplet.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace prefx::data {

using ConceptId = int;

struct Concept {
    ConceptId id = 0;
    std::string name;
    /// "A high score indicates ...; A low score indicates ..."
    std::string definition;
    std::vector<std::string> descriptions;
    std::set<DomainId> domains_found;
    bool is_shared = false;

    friend bool operator==(const Concept&, const Concept&) = default;
};

inline constexpr std::size_t kMaxDescriptions = 5;

/// Smallest domain count at which a concept is shared: ceil(D / 2).
std::size_t shared_threshold(std::size_t domain_count);

/// True when the text follows the two-part high/low score template.
bool follows_definition_template(const std::string& definition);

/// The discovered concepts; defines the feature index space [0, c).
class ConceptCatalog {
public:
    ConceptCatalog() = default;
    /// Concepts must carry ids 0..c-1 in order with unique names.
    ConceptCatalog(std::vector<Concept> concepts, std::vector<DomainId> domains);

    std::size_t size() const noexcept { return concepts_.size(); }
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }
    const Concept& at(ConceptId id) const;
    const Concept* find_by_name(const std::string& name) const;
    const std::vector<DomainId>& domains() const noexcept { return domains_; }

    const std::set<ConceptId>& shared_ids() const noexcept { return shared_; }
    /// Concepts specific to `domain`; empty for unknown domains.
    const std::set<ConceptId>& specific_ids(const DomainId& domain) const;
    /// shared ∪ specific(domain), ascending.
    std::vector<ConceptId> candidates_for(const DomainId& domain) const;
    bool admissible(ConceptId id, const DomainId& domain) const;

    friend bool operator==(const ConceptCatalog&, const ConceptCatalog&) = default;

private:
    std::vector<Concept> concepts_;
    std::vector<DomainId> domains_;
    std::set<ConceptId> shared_;
    std::map<DomainId, std::set<ConceptId>> specific_;
};

std::string serialize_catalog(const ConceptCatalog& catalog);
ConceptCatalog parse_catalog(std::string_view text);
ConceptCatalog load_catalog(const std::filesystem::path& path);
void save_catalog(const ConceptCatalog& catalog, const std::filesystem::path& path);
/// SHA-256 of the canonical serialization.
std::string catalog_checksum(const ConceptCatalog& catalog);

}  // namespace prefx::data
