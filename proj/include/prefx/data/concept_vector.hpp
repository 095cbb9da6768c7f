#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/triplet.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace prefx::data {

enum class RepresentationKind { comp, score };

std::string to_string(RepresentationKind kind);
RepresentationKind parse_representation_kind(const std::string& text);

/// Sparse per-triplet feature vector; missing entries are zero.
struct ConceptVector {
    std::string triplet_id;
    DomainId domain;
    RepresentationKind kind = RepresentationKind::comp;
    std::map<ConceptId, double> values;

    double get(ConceptId id) const {
        auto it = values.find(id);
        return it == values.end() ? 0.0 : it->second;
    }
    ConceptVector negated() const;

    friend bool operator==(const ConceptVector&, const ConceptVector&) = default;
};

/// Value-range checks for the vector's kind; zero entries are rejected.
void validate(const ConceptVector& v);
/// Also checks every nonzero concept is shared or specific to v.domain.
void validate(const ConceptVector& v, const ConceptCatalog& catalog);

struct LabeledVector {
    ConceptVector x;
    PreferenceLabel y = 0;
};

/// Appends each instance's mirror (-x, -y) directly after it. Ties are rejected.
std::vector<LabeledVector> augment_symmetric(const std::vector<LabeledVector>& data);

std::string serialize_vectors(const std::vector<ConceptVector>& vectors);
std::string serialize_vector(const ConceptVector& v);
std::vector<ConceptVector> parse_vectors(std::string_view text);
std::vector<ConceptVector> load_vectors(const std::filesystem::path& path);

}  // namespace prefx::data
