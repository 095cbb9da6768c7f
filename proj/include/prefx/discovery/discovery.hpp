#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/dataset.hpp"
#include "prefx/llm/gateway.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace prefx::discovery {

inline const std::string kNoTag = "None";

struct DiscoveryConfig {
    std::size_t batch_size = 5;          // triplets per discovery prompt
    std::size_t concepts_per_batch = 10; // concepts requested per prompt
    std::size_t batches_per_domain = 300;
    double tag_sample_fraction = 0.10;
    std::size_t max_tags = 10;
    double diversity_prompt_fraction = 0.5;
    std::size_t definitions_per_call = 5;
    std::size_t duplicate_pairs_per_call = 40;
    /// Whose choices the discovery prompts show as chosen/rejected.
    data::MechanismId label_source = "human";
    std::uint64_t seed = 0;
};

void validate(const DiscoveryConfig& c);

/// Name → definition, as bundled (the ten frequent general concepts).
std::vector<std::pair<std::string, std::string>> fixed_concepts();

struct TagVocabulary {
    std::vector<std::string> subdomains;
    std::vector<std::string> tasks;
};

/// Tags of one query; both sets always contain kNoTag.
struct QueryTags {
    std::set<std::string> subdomains{kNoTag};
    std::set<std::string> tasks{kNoTag};
};

/// The most frequent subdomains and tasks in the gateway's answers for
/// `queries`, asked batch_size at a time. Ties go to the lexicographically
/// smaller tag. ConfigError for an empty sample.
TagVocabulary propose_tags(llm::Gateway& gateway, std::span<const std::string> queries,
                           const DiscoveryConfig& config);

/// Counts → top `limit`, by count then name.
std::vector<std::string> top_tags(const std::map<std::string, std::size_t>& counts, std::size_t limit);

/// Tags for one query, restricted to `vocab`; unknown tags are dropped.
QueryTags annotate_query_tags(llm::Gateway& gateway, const std::string& query, const TagVocabulary& vocab);
/// Parses an annotation reply; exposed for tests.
QueryTags parse_query_tags(const std::string& reply, const TagVocabulary& vocab);

using TagPair = std::pair<std::string, std::string>;  // (subdomain, task)

/// Members of every (subdomain, task) pair, by position in `tags`. A kNoTag
/// component matches everything, so (None, t) holds every query with task t.
std::map<TagPair, std::vector<std::size_t>> tag_pools(const std::vector<QueryTags>& tags);

struct Batch {
    TagPair pair;
    std::vector<std::size_t> members;  // positions into the tagged list
};

/// batches_per_domain batches of batch_size distinct members. Pairs are drawn
/// with probability proportional to their pool size, ignoring pools smaller
/// than a batch; ConfigError if no pool is large enough.
std::vector<Batch> build_batches(const std::map<TagPair, std::vector<std::size_t>>& pools,
                                 const DiscoveryConfig& config, std::uint64_t seed);

/// How a discovery prompt presents its examples.
enum class Framing { chosen_vs_rejected, chosen_only, rejected_only };

struct CandidateConcept {
    std::string name;
    std::string description;
    data::DomainId domain;
    std::size_t batch = 0;
    Framing framing = Framing::chosen_vs_rejected;
    bool diverse_prompt = false;
    /// A fixed concept's name returned by a prompt that asked for different ones.
    bool names_fixed_concept = false;
};

/// One discovery prompt for `batch`; framing and the diversity switch are
/// drawn from `variant_seed`.
struct DiscoveryPrompt {
    llm::ChatRequest request;
    Framing framing = Framing::chosen_vs_rejected;
    bool diverse = false;
};

DiscoveryPrompt build_discovery_prompt(std::span<const data::Triplet* const> members, const TagPair& pair,
                                       const DiscoveryConfig& config, std::uint64_t variant_seed);

/// Parses up to concepts_per_batch candidates in reply order. Throws
/// ExtractionError when the reply holds no JSON object.
std::vector<CandidateConcept> parse_candidates(const std::string& reply, const DiscoveryPrompt& prompt,
                                               const data::DomainId& domain, std::size_t batch,
                                               const DiscoveryConfig& config);

/// A concept before ids are assigned: exact-name aggregate of candidates.
struct DraftConcept {
    std::string name;
    std::string definition;
    std::vector<std::string> descriptions;  // at most five, first seen first
    std::set<data::DomainId> domains_found;
    std::size_t batches = 0;
    bool fixed = false;
};

/// Fixed concepts first (found in every domain), then candidates grouped by
/// exact name in first-seen order.
std::vector<DraftConcept> aggregate_candidates(const std::vector<CandidateConcept>& candidates,
                                               const std::vector<data::DomainId>& domains);

/// Every unordered pair (i < j) of names sharing at least one stem.
std::vector<std::pair<std::size_t, std::size_t>> flag_duplicates(const std::vector<std::string>& names);

/// Asks the gateway which flagged pairs are true duplicates; an unparseable
/// verdict counts as "not a duplicate".
std::vector<bool> adjudicate_pairs(llm::Gateway& gateway, const std::vector<DraftConcept>& drafts,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                   const DiscoveryConfig& config);

/// Merges duplicate components (transitively). Each component keeps the member
/// found in more domains, then in more batches, then a fixed concept, then the
/// earlier draft; it absorbs the others' domains, batches and descriptions.
std::vector<DraftConcept> merge_duplicates(const std::vector<DraftConcept>& drafts,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                           const std::vector<bool>& verdicts);

/// Writes definitions for drafts that lack one, definitions_per_call at a
/// time. Non-conforming answers get one retry and are then kept with a
/// warning; failed calls leave a template stub. Returns names kept with a
/// warning or stub.
std::vector<std::string> define_concepts(llm::Gateway& gateway, std::vector<DraftConcept>& drafts,
                                         const DiscoveryConfig& config);

std::string stub_definition(const std::string& name);

/// Assigns ids (fixed concepts first, then by name) and shared flags from the
/// ceil(D/2) rule.
data::ConceptCatalog classify_shared(const std::vector<DraftConcept>& drafts, const std::vector<data::DomainId>& domains);

struct BatchStatus {
    data::DomainId domain;
    std::size_t batch = 0;
    std::size_t candidates = 0;
    std::string error;  // empty on success
};

struct DiscoveryReport {
    std::size_t candidates = 0;
    std::size_t distinct_names = 0;
    std::size_t flagged_pairs = 0;
    std::size_t merged_pairs = 0;
    std::size_t shared = 0;
    std::size_t specific = 0;
    std::map<data::DomainId, TagVocabulary> vocabularies;
    std::vector<BatchStatus> batches;
    std::vector<std::string> definition_warnings;
    /// Raw discovery replies by batch, for audit.
    std::vector<std::string> raw_replies;
};

struct DiscoveryResult {
    data::ConceptCatalog catalog;
    DiscoveryReport report;
};

/// The whole stage over `indices` (the discovery partition). Triplets that
/// already carry tags skip the tagging prompts. TransportError when every
/// discovery batch failed.
DiscoveryResult run_discovery(llm::Gateway& gateway, const data::PreferenceDataset& dataset,
                              std::span<const std::size_t> indices, const DiscoveryConfig& config);

}  // namespace prefx::discovery
