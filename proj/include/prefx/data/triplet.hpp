#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace prefx::data {

using DomainId = std::string;
using MechanismId = std::string;

/// +1: response_1 chosen, -1: response_2 chosen, 0: tie or inconsistent.
using PreferenceLabel = int;

inline bool is_valid_label(int v) { return v == 1 || v == -1 || v == 0; }

struct QueryTag {
    std::string subdomain;
    std::string task;
    friend bool operator==(const QueryTag&, const QueryTag&) = default;
};

struct Triplet {
    std::string id;
    DomainId domain;
    std::string query;
    std::string response_1;
    std::string response_2;
    std::map<MechanismId, PreferenceLabel> labels;
    std::vector<QueryTag> tags;

    std::optional<PreferenceLabel> label(const MechanismId& mechanism) const;

    /// Same triplet with the responses (and every label) swapped.
    Triplet swapped() const;
};

/// Throws ValidationError when a field breaks the triplet invariants.
void validate(const Triplet& t);

}  // namespace prefx::data
