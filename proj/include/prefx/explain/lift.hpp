#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/hmdr/model.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace prefx::explain {

using data::ConceptId;
using data::DomainId;

/// Percent change in p when the margin moves from z to z + dz:
/// 100 * (sigmoid(z + dz) - sigmoid(z)) / sigmoid(z). NumericError on
/// non-finite input.
double lift_percent(double z, double dz);

/// Lift of adding one unit of concept j to x. The increment is
/// counterfactual: it is applied even where x_j is already at its maximum.
double local_lift(const hmdr::HmdrModel& model, const data::ConceptVector& x, const std::optional<DomainId>& domain,
                  ConceptId j);

struct ConceptLift {
    ConceptId concept_id = 0;
    double lift_percent = 0.0;
    double shared_part = 0.0;
    double specific_part = 0.0;

    friend bool operator==(const ConceptLift&, const ConceptLift&) = default;
};

/// 50 * (b_j + s_j) split into 50 * b_j and 50 * s_j; without a domain only
/// the shared part. LookupError for a concept outside the model.
ConceptLift global_lift(const hmdr::HmdrModel& model, const std::optional<DomainId>& domain, ConceptId j);

enum class ExplanationKind { local, global };
std::string to_string(ExplanationKind k);

struct Explanation {
    ExplanationKind kind = ExplanationKind::global;
    std::string mechanism;
    std::optional<DomainId> domain;
    /// Nonzero-weight concepts by |lift| descending, ties by id.
    std::vector<ConceptLift> lifts;
    /// Triplet id the local lifts were computed at.
    std::string input;
    std::string catalog_checksum;
    std::string model_checksum;
};

/// Lifts of every concept with nonzero weight in `domain`.
Explanation explain_global(const hmdr::HmdrModel& model, const std::string& mechanism,
                           const std::optional<DomainId>& domain);

/// Local lifts at x. Each lift is split between shared and specific parts in
/// proportion to b_j and s_j.
Explanation explain_local(const hmdr::HmdrModel& model, const std::string& mechanism, const data::ConceptVector& x,
                          const std::optional<DomainId>& domain);

enum class TopKMode { self, diff };
TopKMode parse_top_k_mode(const std::string& text);

/// Concepts with the largest positive score: the weight (self) or the target
/// weight minus the reference weight (diff), ties by id. Weights are read off
/// global explanations. Fewer than k positive scores returns what exists with
/// a warning. ValidationError when diff lacks a reference or the two cover
/// different catalogs or domains.
std::vector<ConceptId> top_k_concepts(const Explanation& target, const Explanation* reference, std::size_t k,
                                      TopKMode mode);

enum class ReportFormat { structured, svg };

/// Structured: JSON with every lift and its parts. SVG: one panel per
/// explanation with a stacked shared/specific bar group per concept. IoError
/// when the path cannot be written.
void emit_report(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog,
                 ReportFormat format, const std::filesystem::path& path);

std::string render_structured(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog);
std::string render_svg(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog);

}  // namespace prefx::explain
