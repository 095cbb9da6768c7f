#include "prefx/data/catalog.hpp"

#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/hash.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>

namespace prefx::data {

using nlohmann::json;

std::size_t shared_threshold(std::size_t domain_count) { return (domain_count + 1) / 2; }

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

bool follows_definition_template(const std::string& definition) {
    std::string d = lower(definition);
    auto start = d.find_first_not_of(" \t\n\"");
    if (start == std::string::npos) return false;
    if (d.compare(start, 22, "a high score indicates") != 0) return false;
    return d.find("a low score indicates", start + 22) != std::string::npos;
}

ConceptCatalog::ConceptCatalog(std::vector<Concept> concepts, std::vector<DomainId> domains)
    : concepts_(std::move(concepts)), domains_(std::move(domains)) {
    std::sort(domains_.begin(), domains_.end());
    if (std::adjacent_find(domains_.begin(), domains_.end()) != domains_.end())
        throw ValidationError("catalog: duplicate domain");
    if (domains_.empty() && !concepts_.empty()) throw ValidationError("catalog: no domains");
    const std::size_t threshold = shared_threshold(domains_.size());
    std::set<std::string> names;
    for (const auto& d : domains_) specific_[d];
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        const Concept& c = concepts_[i];
        if (c.id != static_cast<ConceptId>(i))
            throw ValidationError("catalog: concept ids must be 0..c-1 in order (got " +
                                  std::to_string(c.id) + " at position " + std::to_string(i) + ")");
        if (c.name.empty()) throw ValidationError("catalog: concept " + std::to_string(i) + " has no name");
        if (!names.insert(c.name).second) throw ValidationError("catalog: duplicate name " + c.name);
        if (c.descriptions.size() > kMaxDescriptions)
            throw ValidationError("catalog: concept " + c.name + " keeps more than 5 descriptions");
        for (const auto& d : c.domains_found)
            if (!std::binary_search(domains_.begin(), domains_.end(), d))
                throw ValidationError("catalog: concept " + c.name + " found in unknown domain " + d);
        if (c.is_shared != (c.domains_found.size() >= threshold))
            throw ValidationError("catalog: concept " + c.name + " shared flag disagrees with domains_found");
        if (c.is_shared) {
            shared_.insert(c.id);
        } else {
            if (c.domains_found.empty())
                throw ValidationError("catalog: concept " + c.name + " belongs to no domain");
            for (const auto& d : c.domains_found) specific_[d].insert(c.id);
        }
    }
}

const Concept& ConceptCatalog::at(ConceptId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= concepts_.size())
        throw LookupError("unknown concept id " + std::to_string(id));
    return concepts_[static_cast<std::size_t>(id)];
}

const Concept* ConceptCatalog::find_by_name(const std::string& name) const {
    for (const auto& c : concepts_)
        if (c.name == name) return &c;
    return nullptr;
}

const std::set<ConceptId>& ConceptCatalog::specific_ids(const DomainId& domain) const {
    static const std::set<ConceptId> kEmpty;
    auto it = specific_.find(domain);
    return it == specific_.end() ? kEmpty : it->second;
}

std::vector<ConceptId> ConceptCatalog::candidates_for(const DomainId& domain) const {
    std::set<ConceptId> all = shared_;
    const auto& spec = specific_ids(domain);
    all.insert(spec.begin(), spec.end());
    return {all.begin(), all.end()};
}

bool ConceptCatalog::admissible(ConceptId id, const DomainId& domain) const {
    return shared_.count(id) > 0 || specific_ids(domain).count(id) > 0;
}

std::string serialize_catalog(const ConceptCatalog& catalog) {
    json doc;
    doc["domains"] = catalog.domains();
    json arr = json::array();
    for (const auto& c : catalog.concepts()) {
        arr.push_back({{"id", c.id},
                       {"name", c.name},
                       {"definition", c.definition},
                       {"descriptions", c.descriptions},
                       {"domains_found", c.domains_found},
                       {"is_shared", c.is_shared}});
    }
    doc["concepts"] = std::move(arr);
    return doc.dump(2) + "\n";
}

ConceptCatalog parse_catalog(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(0, std::string("catalog: ") + e.what());
    }
    try {
        std::vector<Concept> concepts;
        for (const auto& rec : doc.at("concepts")) {
            Concept c;
            c.id = rec.at("id").get<ConceptId>();
            c.name = rec.at("name").get<std::string>();
            c.definition = rec.value("definition", std::string{});
            c.descriptions = rec.value("descriptions", std::vector<std::string>{});
            for (const auto& d : rec.at("domains_found")) c.domains_found.insert(d.get<std::string>());
            c.is_shared = rec.at("is_shared").get<bool>();
            concepts.push_back(std::move(c));
        }
        return ConceptCatalog(std::move(concepts), doc.at("domains").get<std::vector<DomainId>>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("catalog: ") + e.what());
    }
}

ConceptCatalog load_catalog(const std::filesystem::path& path) { return parse_catalog(read_file(path)); }

void save_catalog(const ConceptCatalog& catalog, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_catalog(catalog));
}

std::string catalog_checksum(const ConceptCatalog& catalog) {
    return sha256_hex(serialize_catalog(catalog));
}

}  // namespace prefx::data
