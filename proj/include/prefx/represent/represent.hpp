#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/data/dataset.hpp"
#include "prefx/llm/gateway.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace prefx::represent {

using data::ConceptId;

inline constexpr std::size_t kDefaultChunk = 20;

struct RelevanceSet {
    std::string triplet_id;
    std::set<ConceptId> relevant;
    /// Relevance could not be read; every candidate was kept.
    bool fail_open = false;
};

/// Builds the relevance prompt over the triplet's candidate concepts.
llm::ChatRequest relevance_request(const data::Triplet& t, const data::ConceptCatalog& catalog);
/// Concepts marked true among `candidates`; absent keys mean not relevant.
/// ExtractionError when the reply has no JSON object.
std::set<ConceptId> parse_relevance(const std::string& reply, const data::ConceptCatalog& catalog,
                                    std::span<const ConceptId> candidates);

/// Candidates are shared ∪ specific-to-domain. Retries an unreadable reply
/// once, then keeps every candidate with a warning.
RelevanceSet predict_relevant(llm::Gateway& gateway, const data::Triplet& t, const data::ConceptCatalog& catalog);

/// `ids` sorted ascending, split into runs of at most `chunk_size`.
std::vector<std::vector<ConceptId>> chunk_concepts(const std::set<ConceptId>& ids, std::size_t chunk_size);

/// The integer after the last "Final answer:" in an explanation, or a bare
/// number. Accepts objects carrying an answer/score field.
std::optional<int> parse_final_answer(const nlohmann::ordered_json& value);

struct CompAnnotation {
    ConceptId concept_id = 0;
    int original = 0;  // answer with the responses in dataset order
    int swapped = 0;   // raw answer with the responses swapped
    int merged = 0;
    std::string explanation_original;
    std::string explanation_swapped;
    /// A call failed or an answer was missing or outside {0, 1, 2}.
    bool flagged = false;
};

/// +1 when both orders prefer response 1, -1 when both prefer response 2, else 0.
int merge_comp(int original, int swapped);

struct ScoreAnnotation {
    ConceptId concept_id = 0;
    int score_1 = 0;
    int score_2 = 0;
    int value = 0;
    std::string explanation_1;
    std::string explanation_2;
    /// A call failed or a score was missing or clamped into [0, 7].
    bool flagged = false;
};

/// score_1 - score_2, or 0 when either response was scored not relevant.
int score_value(int score_1, int score_2);

llm::ChatRequest comp_request(const data::Triplet& t, const data::ConceptCatalog& catalog,
                              std::span<const ConceptId> chunk, bool swapped);
llm::ChatRequest score_request(const data::Triplet& t, const data::ConceptCatalog& catalog,
                               std::span<const ConceptId> chunk, int response);

std::vector<CompAnnotation> comp_annotate(llm::Gateway& gateway, const data::Triplet& t,
                                          const data::ConceptCatalog& catalog, const std::set<ConceptId>& relevant,
                                          std::size_t chunk_size = kDefaultChunk);
std::vector<ScoreAnnotation> score_annotate(llm::Gateway& gateway, const data::Triplet& t,
                                            const data::ConceptCatalog& catalog, const std::set<ConceptId>& relevant,
                                            std::size_t chunk_size = kDefaultChunk);

/// Sparse vector with zeros dropped; ValidationError on repeated concept ids.
data::ConceptVector build_vector(const data::Triplet& t, std::span<const CompAnnotation> annotations);
data::ConceptVector build_vector(const data::Triplet& t, std::span<const ScoreAnnotation> annotations);

struct RepresentOptions {
    data::RepresentationKind kind = data::RepresentationKind::comp;
    std::size_t chunk_size = kDefaultChunk;
    /// Triplets annotated per round before results are flushed to disk.
    std::size_t round_size = 64;
    /// Optional resume state: vectors are appended to `vectors_path` and each
    /// finished triplet is recorded in `manifest_path`.
    std::filesystem::path vectors_path;
    std::filesystem::path manifest_path;
    /// Optional JSON-lines audit of every annotation with its explanations.
    std::filesystem::path audit_path;
    /// Annotate at most this many new triplets in this call; 0 = no limit.
    std::size_t max_new = 0;
};

struct RepresentReport {
    std::size_t triplets = 0;
    std::size_t resumed = 0;
    std::size_t fail_open = 0;
    std::size_t flagged_annotations = 0;
    std::size_t nonzero_entries = 0;
    /// Triplets left for a later call because of max_new.
    std::size_t remaining = 0;
};

struct RepresentResult {
    /// One vector per requested index, in the order given; when triplets
    /// remain, only the finished ones.
    std::vector<data::ConceptVector> vectors;
    RepresentReport report;
};

/// Annotates every triplet in `indices`. With a manifest, triplets already
/// recorded for this kind and catalog are read back instead of re-annotated;
/// a manifest written for another catalog or kind is a ValidationError.
RepresentResult represent_all(llm::Gateway& gateway, const data::PreferenceDataset& dataset,
                              std::span<const std::size_t> indices, const data::ConceptCatalog& catalog,
                              const RepresentOptions& options);

}  // namespace prefx::represent
