#include "prefx/data/concept_vector.hpp"

#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace prefx::data {

using nlohmann::json;

std::string to_string(RepresentationKind kind) {
    return kind == RepresentationKind::comp ? "comp" : "score";
}

RepresentationKind parse_representation_kind(const std::string& text) {
    if (text == "comp") return RepresentationKind::comp;
    if (text == "score") return RepresentationKind::score;
    throw ValidationError("representation kind must be 'comp' or 'score', got '" + text + "'");
}

ConceptVector ConceptVector::negated() const {
    ConceptVector out = *this;
    for (auto& [id, v] : out.values) v = -v;
    return out;
}

void validate(const ConceptVector& v) {
    for (const auto& [id, value] : v.values) {
        if (value == 0.0)
            throw ValidationError(v.triplet_id + ": explicit zero for concept " + std::to_string(id));
        if (v.kind == RepresentationKind::comp && value != 1.0 && value != -1.0)
            throw ValidationError(v.triplet_id + ": comp value outside {-1, 0, 1}");
        if (v.kind == RepresentationKind::score &&
            (value != std::round(value) || value < -6.0 || value > 6.0))
            throw ValidationError(v.triplet_id + ": score value outside integer range [-6, 6]");
    }
}

void validate(const ConceptVector& v, const ConceptCatalog& catalog) {
    validate(v);
    for (const auto& [id, value] : v.values) {
        if (!catalog.admissible(id, v.domain))
            throw ValidationError(v.triplet_id + ": concept " + std::to_string(id) +
                                  " is neither shared nor specific to " + v.domain);
    }
}

std::vector<LabeledVector> augment_symmetric(const std::vector<LabeledVector>& data) {
    std::vector<LabeledVector> out;
    out.reserve(data.size() * 2);
    for (const auto& inst : data) {
        if (inst.y != 1 && inst.y != -1)
            throw ValidationError("augment_symmetric: tie label for " + inst.x.triplet_id +
                                  " (remove ties before augmenting)");
        out.push_back(inst);
        out.push_back({inst.x.negated(), -inst.y});
    }
    return out;
}

namespace {

json to_json(const ConceptVector& v) {
    json values = json::object();
    for (const auto& [id, value] : v.values) {
        if (value == std::round(value))
            values[std::to_string(id)] = static_cast<long long>(value);
        else
            values[std::to_string(id)] = value;
    }
    return {{"triplet_id", v.triplet_id}, {"domain", v.domain}, {"kind", to_string(v.kind)}, {"values", values}};
}

}  // namespace

std::string serialize_vector(const ConceptVector& v) { return to_json(v).dump(); }

std::string serialize_vectors(const std::vector<ConceptVector>& vectors) {
    std::string out;
    for (const auto& v : vectors) {
        out += serialize_vector(v);
        out += '\n';
    }
    return out;
}

std::vector<ConceptVector> parse_vectors(std::string_view text) {
    std::vector<ConceptVector> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json rec = json::parse(line);
            ConceptVector v;
            v.triplet_id = rec.at("triplet_id").get<std::string>();
            v.domain = rec.at("domain").get<std::string>();
            v.kind = parse_representation_kind(rec.at("kind").get<std::string>());
            for (const auto& [key, value] : rec.at("values").items()) {
                double x = value.get<double>();
                if (x != 0.0) v.values[std::stoi(key)] = x;
            }
            validate(v);
            out.push_back(std::move(v));
        } catch (const json::exception& e) {
            throw ParseError(lineno, std::string("representation record: ") + e.what());
        } catch (const std::invalid_argument&) {
            throw ParseError(lineno, "non-integer concept id");
        }
    }
    return out;
}

std::vector<ConceptVector> load_vectors(const std::filesystem::path& path) {
    return parse_vectors(read_file(path));
}

}  // namespace prefx::data
