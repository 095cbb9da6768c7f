#pragma once

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/llm/gateway.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace prefx::explain {

/// Tie-break prompt restricted to `concepts`; response A is response_1.
/// TemplateError for an empty list or a concept without a definition.
std::string build_tiebreak_prompt(const data::Triplet& t, std::span<const data::Concept> concepts, bool cot);

/// Generation prompt that asks the model to consider `concepts`; the plain
/// generation prompt when the list is empty.
std::string build_guided_generation_prompt(const std::string& query, std::span<const data::Concept> concepts);

std::string build_judge_prompt(const std::string& query, const std::string& response_a, const std::string& response_b,
                               bool cot);

/// "A" or "B" from a judge reply's final_answer; nullopt when unreadable.
std::optional<char> parse_verdict(const std::string& reply);

/// Asks for a verdict on a tie; +1 for response_1, -1 for response_2, nullopt
/// when the reply stays unreadable after one retry.
std::optional<int> resolve_tie(llm::Gateway& gateway, const data::Triplet& t, std::span<const data::Concept> concepts,
                               bool cot);

enum class Outcome { win, tie, lose };

/// Judges candidate against baseline in both orders: a win or loss needs both
/// verdicts to agree, anything else is a tie.
Outcome judge_pair(llm::Gateway& gateway, const std::string& query, const std::string& candidate,
                   const std::string& baseline, bool cot);

struct OutcomeShares {
    double win = 0.0;
    double tie = 0.0;
    double lose = 0.0;
};

/// Win + half the ties, in percent of all outcomes. ValidationError when empty.
double win_rate(std::span<const Outcome> outcomes);
double win_rate(const OutcomeShares& shares);

/// Labeled vectors minus the listed triplets, e.g. the ties being resolved.
std::vector<data::LabeledVector> excluding(const std::vector<data::LabeledVector>& labeled,
                                           const std::set<std::string>& triplet_ids);

}  // namespace prefx::explain
