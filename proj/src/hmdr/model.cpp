#include "prefx/hmdr/model.hpp"

#include "prefx/hmdr/logistic.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace prefx::hmdr {

using nlohmann::json;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::hmdr: return "hmdr";
        case Variant::shared_only: return "shared_only";
        case Variant::specific_only: return "specific_only";
        case Variant::dirty: return "dirty";
    }
    return "hmdr";
}

Variant parse_variant(const std::string& text) {
    if (text == "hmdr") return Variant::hmdr;
    if (text == "shared_only" || text == "shared") return Variant::shared_only;
    if (text == "specific_only" || text == "specific") return Variant::specific_only;
    if (text == "dirty") return Variant::dirty;
    throw ConfigError("unknown model variant '" + text + "'");
}

void validate(const HmdrParams& p) {
    if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw ConfigError("alpha must be >= 0");
    if (p.uses_shared() && !(p.lambda_b > 0.0)) throw ConfigError("lambda_b must be > 0");
    if (p.uses_specific() && !(p.lambda_s > 0.0)) throw ConfigError("lambda_s must be > 0");
}

HmdrModel::HmdrModel(std::vector<DomainId> domains, Mask shared_mask, std::vector<Mask> domain_masks,
                     Weights weights, HmdrParams params, TrainingInfo info)
    : domains_(std::move(domains)),
      shared_mask_(std::move(shared_mask)),
      domain_masks_(std::move(domain_masks)),
      weights_(std::move(weights)),
      params_(params),
      info_(std::move(info)) {
    const std::size_t c = shared_mask_.size();
    if (domain_masks_.size() != domains_.size() || weights_.s.size() != domains_.size())
        throw ValidationError("model: one mask and one deviation vector per domain required");
    if (weights_.b.size() != c) throw ValidationError("model: b has wrong length");
    for (std::size_t j = 0; j < c; ++j)
        if (!shared_mask_[j] && weights_.b[j] != 0.0)
            throw ValidationError("model: b nonzero outside the shared mask at " + std::to_string(j));
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        if (domain_masks_[d].size() != c || weights_.s[d].size() != c)
            throw ValidationError("model: domain vectors have wrong length");
        for (std::size_t j = 0; j < c; ++j)
            if (!domain_masks_[d][j] && weights_.s[d][j] != 0.0)
                throw ValidationError("model: s[" + domains_[d] + "] nonzero outside its mask");
    }
}

std::optional<std::size_t> HmdrModel::domain_index(const DomainId& d) const {
    auto it = std::find(domains_.begin(), domains_.end(), d);
    if (it == domains_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - domains_.begin());
}

const std::vector<double>& HmdrModel::s(const DomainId& d) const {
    auto idx = domain_index(d);
    if (!idx) throw LookupError("model has no domain " + d);
    return weights_.s[*idx];
}

const Mask& HmdrModel::domain_mask(const DomainId& d) const {
    auto idx = domain_index(d);
    if (!idx) throw LookupError("model has no domain " + d);
    return domain_masks_[*idx];
}

double HmdrModel::weight(ConceptId j, const std::optional<DomainId>& domain) const {
    if (j < 0 || static_cast<std::size_t>(j) >= concept_count())
        throw LookupError("unknown concept id " + std::to_string(j));
    double w = weights_.b[static_cast<std::size_t>(j)];
    if (domain) {
        if (auto idx = domain_index(*domain)) w += weights_.s[*idx][static_cast<std::size_t>(j)];
    }
    return w;
}

double HmdrModel::margin(const data::ConceptVector& x, const std::optional<DomainId>& domain) const {
    std::optional<std::size_t> idx;
    if (domain) {
        idx = domain_index(*domain);
        if (!idx) spdlog::warn("domain '{}' unknown to the model; using shared weights only", *domain);
    }
    double z = 0.0;
    for (const auto& [j, v] : x.values) {
        if (j < 0 || static_cast<std::size_t>(j) >= concept_count())
            throw LookupError("concept id " + std::to_string(j) + " outside the model");
        double w = weights_.b[static_cast<std::size_t>(j)];
        if (idx) w += weights_.s[*idx][static_cast<std::size_t>(j)];
        z += w * v;
    }
    return z;
}

double HmdrModel::predict_proba(const data::ConceptVector& x, const std::optional<DomainId>& domain) const {
    return sigmoid(margin(x, domain));
}

int HmdrModel::predict_label(const data::ConceptVector& x, const std::optional<DomainId>& domain) const {
    return predict_proba(x, domain) >= 0.5 ? 1 : -1;
}

std::size_t HmdrModel::nonzero_shared() const {
    return static_cast<std::size_t>(std::count_if(weights_.b.begin(), weights_.b.end(),
                                                  [](double w) { return w != 0.0; }));
}

std::size_t HmdrModel::nonzero_specific(const DomainId& d) const {
    const auto& v = s(d);
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double w) { return w != 0.0; }));
}

Mask shared_mask_from(const data::ConceptCatalog& catalog) {
    Mask m(catalog.size(), 0);
    for (ConceptId j : catalog.shared_ids()) m[static_cast<std::size_t>(j)] = 1;
    return m;
}

Mask domain_mask_from(const data::ConceptCatalog& catalog, const DomainId& domain) {
    Mask m = shared_mask_from(catalog);
    for (ConceptId j : catalog.specific_ids(domain)) m[static_cast<std::size_t>(j)] = 1;
    return m;
}

namespace {

json mask_to_json(const Mask& m) {
    json ids = json::array();
    for (std::size_t j = 0; j < m.size(); ++j)
        if (m[j]) ids.push_back(j);
    return ids;
}

Mask mask_from_json(const json& ids, std::size_t c) {
    Mask m(c, 0);
    for (const auto& id : ids) {
        auto j = id.get<std::size_t>();
        if (j >= c) throw ValidationError("model: mask id out of range");
        m[j] = 1;
    }
    return m;
}

json sparse_to_json(const std::vector<double>& w) {
    json out = json::object();
    for (std::size_t j = 0; j < w.size(); ++j)
        if (w[j] != 0.0) out[std::to_string(j)] = w[j];
    return out;
}

std::vector<double> sparse_from_json(const json& obj, std::size_t c) {
    std::vector<double> w(c, 0.0);
    for (const auto& [key, value] : obj.items()) {
        auto j = static_cast<std::size_t>(std::stoul(key));
        if (j >= c) throw ValidationError("model: weight id out of range");
        w[j] = value.get<double>();
    }
    return w;
}

}  // namespace

std::string serialize_model(const HmdrModel& model) {
    json doc;
    const auto& p = model.params();
    doc["params"] = {{"alpha", p.alpha},
                     {"lambda_b", p.lambda_b},
                     {"lambda_s", p.lambda_s},
                     {"variant", to_string(p.variant)}};
    doc["concept_count"] = model.concept_count();
    doc["domains"] = model.domains();
    doc["shared_mask"] = mask_to_json(model.shared_mask());
    json masks = json::object();
    json s = json::object();
    for (const auto& d : model.domains()) {
        masks[d] = mask_to_json(model.domain_mask(d));
        s[d] = sparse_to_json(model.s(d));
    }
    doc["domain_masks"] = std::move(masks);
    doc["b"] = sparse_to_json(model.b());
    doc["s"] = std::move(s);
    doc["catalog_checksum"] = model.catalog_checksum;
    const auto& info = model.info();
    doc["training"] = {{"seed", info.seed},
                       {"iterations", info.iterations},
                       {"final_objective", info.final_objective},
                       {"converged", info.converged},
                       {"optimizer", info.optimizer}};
    return doc.dump(2) + "\n";
}

HmdrModel parse_model(std::string_view text) {
    try {
        json doc = json::parse(text);
        const auto c = doc.at("concept_count").get<std::size_t>();
        HmdrParams p;
        const auto& jp = doc.at("params");
        p.alpha = jp.at("alpha").get<double>();
        p.lambda_b = jp.at("lambda_b").get<double>();
        p.lambda_s = jp.at("lambda_s").get<double>();
        p.variant = parse_variant(jp.at("variant").get<std::string>());
        auto domains = doc.at("domains").get<std::vector<DomainId>>();
        Weights w;
        w.b = sparse_from_json(doc.at("b"), c);
        std::vector<Mask> masks;
        for (const auto& d : domains) {
            masks.push_back(mask_from_json(doc.at("domain_masks").at(d), c));
            w.s.push_back(sparse_from_json(doc.at("s").at(d), c));
        }
        TrainingInfo info;
        const auto& jt = doc.at("training");
        info.seed = jt.at("seed").get<std::uint64_t>();
        info.iterations = jt.at("iterations").get<std::size_t>();
        info.final_objective = jt.at("final_objective").get<double>();
        info.converged = jt.at("converged").get<bool>();
        info.optimizer = jt.value("optimizer", std::string("proximal"));
        HmdrModel model(std::move(domains), mask_from_json(doc.at("shared_mask"), c), std::move(masks),
                        std::move(w), p, info);
        model.catalog_checksum = doc.value("catalog_checksum", std::string{});
        return model;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model file: ") + e.what());
    }
}

HmdrModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

void save_model(const HmdrModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

}  // namespace prefx::hmdr
