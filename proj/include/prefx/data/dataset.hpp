#pragma once

#include "prefx/data/triplet.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace prefx::data {

/// Field names of a line-delimited dataset file.
struct DatasetSchema {
    std::string id = "id";
    std::string domain = "domain";
    std::string query = "query";
    std::string response_1 = "response_1";
    std::string response_2 = "response_2";
    std::string labels = "labels";
    std::string tags = "tags";
};

class PreferenceDataset {
public:
    /// Validates every triplet; domain list is the sorted set of observed domains.
    explicit PreferenceDataset(std::vector<Triplet> triplets);

    const std::vector<Triplet>& triplets() const noexcept { return triplets_; }
    const std::vector<DomainId>& domains() const noexcept { return domains_; }
    std::size_t size() const noexcept { return triplets_.size(); }
    std::size_t domain_count() const noexcept { return domains_.size(); }
    std::size_t count(const DomainId& domain) const;
    /// Dense index of a domain in sorted order; throws LookupError if absent.
    std::size_t domain_index(const DomainId& domain) const;
    /// Indices of triplets whose label for `mechanism` is +1 or -1.
    std::vector<std::size_t> decided_indices(const MechanismId& mechanism) const;
    const Triplet* find(const std::string& id) const;

private:
    std::vector<Triplet> triplets_;
    std::vector<DomainId> domains_;
    std::vector<std::size_t> counts_;
};

PreferenceDataset load_dataset(const std::filesystem::path& path,
                               const DatasetSchema& schema = {});
PreferenceDataset parse_dataset(std::string_view text, const DatasetSchema& schema = {});
std::string serialize_dataset(const PreferenceDataset& dataset, const DatasetSchema& schema = {});

}  // namespace prefx::data
