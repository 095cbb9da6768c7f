#include "prefx/data/dataset.hpp"

#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

namespace prefx::data {

using nlohmann::json;

PreferenceDataset::PreferenceDataset(std::vector<Triplet> triplets) : triplets_(std::move(triplets)) {
    if (triplets_.empty()) throw ValidationError("no triplets");
    std::set<DomainId> seen;
    std::unordered_set<std::string> ids;
    for (const auto& t : triplets_) {
        validate(t);
        if (!ids.insert(t.id).second) throw ValidationError("duplicate triplet id " + t.id);
        seen.insert(t.domain);
    }
    domains_.assign(seen.begin(), seen.end());
    counts_.assign(domains_.size(), 0);
    for (const auto& t : triplets_) ++counts_[domain_index(t.domain)];
}

std::size_t PreferenceDataset::domain_index(const DomainId& domain) const {
    auto it = std::lower_bound(domains_.begin(), domains_.end(), domain);
    if (it == domains_.end() || *it != domain) throw LookupError("unknown domain " + domain);
    return static_cast<std::size_t>(it - domains_.begin());
}

std::size_t PreferenceDataset::count(const DomainId& domain) const {
    return counts_[domain_index(domain)];
}

std::vector<std::size_t> PreferenceDataset::decided_indices(const MechanismId& mechanism) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < triplets_.size(); ++i) {
        auto y = triplets_[i].label(mechanism);
        if (y && *y != 0) out.push_back(i);
    }
    return out;
}

const Triplet* PreferenceDataset::find(const std::string& id) const {
    for (const auto& t : triplets_)
        if (t.id == id) return &t;
    return nullptr;
}

namespace {

std::string require_string(const json& rec, const std::string& key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end()) throw ParseError(line, "missing field '" + key + "'");
    if (!it->is_string()) throw ParseError(line, "field '" + key + "' must be a string");
    return it->get<std::string>();
}

Triplet parse_record(const json& rec, const DatasetSchema& schema, std::size_t line) {
    if (!rec.is_object()) throw ParseError(line, "record is not an object");
    Triplet t;
    t.id = require_string(rec, schema.id, line);
    t.domain = require_string(rec, schema.domain, line);
    t.query = require_string(rec, schema.query, line);
    t.response_1 = require_string(rec, schema.response_1, line);
    t.response_2 = require_string(rec, schema.response_2, line);
    auto labels = rec.find(schema.labels);
    if (labels == rec.end() || !labels->is_object())
        throw ParseError(line, "field '" + schema.labels + "' must be an object");
    for (const auto& [mech, value] : labels->items()) {
        if (!value.is_number_integer())
            throw ValidationError("line " + std::to_string(line) + ": " + schema.labels + "." + mech +
                                  " must be an integer");
        int y = value.get<int>();
        if (!is_valid_label(y))
            throw ValidationError("line " + std::to_string(line) + ": " + schema.labels + "." + mech +
                                  " = " + std::to_string(y) + " is not one of {1, -1, 0}");
        t.labels[mech] = y;
    }
    if (auto tags = rec.find(schema.tags); tags != rec.end() && !tags->is_null()) {
        if (!tags->is_array()) throw ParseError(line, "field '" + schema.tags + "' must be an array");
        for (const auto& tag : *tags) {
            if (!tag.is_array() || tag.size() != 2 || !tag[0].is_string() || !tag[1].is_string())
                throw ParseError(line, "tags entries must be [subdomain, task] pairs");
            t.tags.push_back({tag[0].get<std::string>(), tag[1].get<std::string>()});
        }
    }
    return t;
}

}  // namespace

PreferenceDataset parse_dataset(std::string_view text, const DatasetSchema& schema) {
    std::vector<Triplet> triplets;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
        }
        Triplet t = parse_record(rec, schema, lineno);
        try {
            validate(t);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        }
        triplets.push_back(std::move(t));
    }
    return PreferenceDataset(std::move(triplets));
}

PreferenceDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    return parse_dataset(read_file(path), schema);
}

std::string serialize_dataset(const PreferenceDataset& dataset, const DatasetSchema& schema) {
    std::string out;
    for (const auto& t : dataset.triplets()) {
        json rec;
        rec[schema.id] = t.id;
        rec[schema.domain] = t.domain;
        rec[schema.query] = t.query;
        rec[schema.response_1] = t.response_1;
        rec[schema.response_2] = t.response_2;
        rec[schema.labels] = t.labels;
        if (!t.tags.empty()) {
            json tags = json::array();
            for (const auto& tag : t.tags) tags.push_back({tag.subdomain, tag.task});
            rec[schema.tags] = std::move(tags);
        }
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace prefx::data
