#include "prefx/explain/lift.hpp"

#include "prefx/hmdr/logistic.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/hash.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace prefx::explain {

double lift_percent(double z, double dz) {
    if (!std::isfinite(z) || !std::isfinite(dz)) throw NumericError("lift: non-finite margin");
    if (dz == 0.0) return 0.0;
    // (s(z+dz) - s(z)) / s(z) = (1 + e^-z) / (1 + e^-(z+dz)) - 1, written to
    // stay accurate when e^-z overflows.
    const double p = hmdr::sigmoid(z);
    const double q = hmdr::sigmoid(z + dz);
    if (p > 0.0) return 100.0 * (q - p) / p;
    return 100.0 * std::expm1(dz);  // deep in the left tail the ratio tends to e^dz
}

namespace {

void check_concept(const hmdr::HmdrModel& model, ConceptId j) {
    if (j < 0 || static_cast<std::size_t>(j) >= model.concept_count())
        throw LookupError("concept " + std::to_string(j) + " is outside the model");
}

std::optional<DomainId> known_domain(const hmdr::HmdrModel& model, const std::optional<DomainId>& domain) {
    if (domain && !model.domain_index(*domain)) {
        spdlog::warn("explain: domain '{}' was not trained; using shared weights only", *domain);
        return std::nullopt;
    }
    return domain;
}

double specific_weight(const hmdr::HmdrModel& model, const std::optional<DomainId>& domain, ConceptId j) {
    return domain ? model.weight(j, domain) - model.b()[static_cast<std::size_t>(j)] : 0.0;
}

void rank(std::vector<ConceptLift>& lifts) {
    std::sort(lifts.begin(), lifts.end(), [](const ConceptLift& a, const ConceptLift& b) {
        if (std::abs(a.lift_percent) != std::abs(b.lift_percent)) return std::abs(a.lift_percent) > std::abs(b.lift_percent);
        return a.concept_id < b.concept_id;
    });
}

Explanation skeleton(const hmdr::HmdrModel& model, ExplanationKind kind, const std::string& mechanism,
                     const std::optional<DomainId>& domain) {
    Explanation e;
    e.kind = kind;
    e.mechanism = mechanism;
    e.domain = domain;
    e.catalog_checksum = model.catalog_checksum;
    e.model_checksum = sha256_hex(hmdr::serialize_model(model));
    return e;
}

}  // namespace

double local_lift(const hmdr::HmdrModel& model, const data::ConceptVector& x, const std::optional<DomainId>& domain,
                  ConceptId j) {
    check_concept(model, j);
    const auto d = known_domain(model, domain);
    return lift_percent(model.margin(x, d), model.weight(j, d));
}

ConceptLift global_lift(const hmdr::HmdrModel& model, const std::optional<DomainId>& domain, ConceptId j) {
    check_concept(model, j);
    const auto d = known_domain(model, domain);
    ConceptLift l;
    l.concept_id = j;
    l.shared_part = 50.0 * model.b()[static_cast<std::size_t>(j)];
    l.specific_part = 50.0 * specific_weight(model, d, j);
    l.lift_percent = l.shared_part + l.specific_part;
    return l;
}

std::string to_string(ExplanationKind k) { return k == ExplanationKind::local ? "local" : "global"; }

Explanation explain_global(const hmdr::HmdrModel& model, const std::string& mechanism,
                           const std::optional<DomainId>& domain) {
    auto e = skeleton(model, ExplanationKind::global, mechanism, domain);
    const auto d = known_domain(model, domain);
    for (std::size_t j = 0; j < model.concept_count(); ++j) {
        auto l = global_lift(model, d, static_cast<ConceptId>(j));
        if (l.shared_part != 0.0 || l.specific_part != 0.0) e.lifts.push_back(l);
    }
    rank(e.lifts);
    return e;
}

Explanation explain_local(const hmdr::HmdrModel& model, const std::string& mechanism, const data::ConceptVector& x,
                          const std::optional<DomainId>& domain) {
    auto e = skeleton(model, ExplanationKind::local, mechanism, domain);
    e.input = x.triplet_id;
    const auto d = known_domain(model, domain);
    const double z = model.margin(x, d);
    for (std::size_t j = 0; j < model.concept_count(); ++j) {
        const auto id = static_cast<ConceptId>(j);
        const double w = model.weight(id, d);
        if (w == 0.0) continue;
        ConceptLift l;
        l.concept_id = id;
        l.lift_percent = lift_percent(z, w);
        l.shared_part = l.lift_percent * model.b()[j] / w;
        l.specific_part = l.lift_percent - l.shared_part;
        e.lifts.push_back(l);
    }
    rank(e.lifts);
    return e;
}

TopKMode parse_top_k_mode(const std::string& text) {
    if (text == "self") return TopKMode::self;
    if (text == "diff") return TopKMode::diff;
    throw ConfigError("unknown top-k mode '" + text + "' (expected self or diff)");
}

std::vector<ConceptId> top_k_concepts(const Explanation& target, const Explanation* reference, std::size_t k,
                                      TopKMode mode) {
    // Global lifts are 50 * weight, so ranking lifts ranks weights.
    auto weights = [](const Explanation& e) {
        if (e.kind != ExplanationKind::global) throw ValidationError("top-k needs global explanations");
        std::map<ConceptId, double> w;
        for (const auto& l : e.lifts) w[l.concept_id] = l.lift_percent / 50.0;
        return w;
    };
    auto score = weights(target);
    if (mode == TopKMode::diff) {
        if (!reference) throw ValidationError("top-k diff needs a reference explanation");
        if (reference->catalog_checksum != target.catalog_checksum || reference->domain != target.domain)
            throw ValidationError("top-k diff: explanations cover different catalogs or domains");
        for (const auto& [id, w] : weights(*reference)) score[id] -= w;
    }
    std::vector<std::pair<ConceptId, double>> ranked;
    for (const auto& [id, s] : score)
        if (s > 0.0) ranked.emplace_back(id, s);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() < k)
        spdlog::warn("top-k: only {} concepts with positive score, {} requested", ranked.size(), k);
    std::vector<ConceptId> out;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
    return out;
}

std::string render_structured(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog) {
    nlohmann::ordered_json doc;
    doc["explanations"] = nlohmann::ordered_json::array();
    for (const auto& e : explanations) {
        nlohmann::ordered_json j;
        j["kind"] = to_string(e.kind);
        j["mechanism"] = e.mechanism;
        j["domain"] = e.domain ? nlohmann::ordered_json(*e.domain) : nlohmann::ordered_json(nullptr);
        if (e.kind == ExplanationKind::local) j["input"] = e.input;
        j["catalog_checksum"] = e.catalog_checksum;
        j["model_checksum"] = e.model_checksum;
        j["lifts"] = nlohmann::ordered_json::array();
        for (const auto& l : e.lifts)
            j["lifts"].push_back({{"concept_id", l.concept_id},
                                  {"concept", catalog.at(l.concept_id).name},
                                  {"lift", l.lift_percent},
                                  {"shared", l.shared_part},
                                  {"specific", l.specific_part}});
        doc["explanations"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

namespace {

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog) {
    constexpr double kRow = 18.0, kLabel = 260.0, kHalf = 220.0, kTitle = 28.0, kGap = 16.0;
    double scale_max = 1.0;
    std::size_t rows = 0;
    for (const auto& e : explanations) {
        rows += e.lifts.size();
        for (const auto& l : e.lifts)
            scale_max = std::max({scale_max, std::abs(l.lift_percent), std::abs(l.shared_part),
                                  std::abs(l.shared_part) + std::abs(l.specific_part)});
    }
    const double width = kLabel + 2 * kHalf + 80.0;
    const double height = static_cast<double>(rows) * kRow + static_cast<double>(explanations.size()) * (kTitle + kGap) + 20.0;
    const double axis = kLabel + kHalf;
    auto px = [&](double v) { return v / scale_max * kHalf; };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n",
        width, height);
    double y = 10.0;
    for (const auto& e : explanations) {
        svg += fmt::format("<g class=\"panel\">\n<text x=\"4\" y=\"{:.1f}\" font-weight=\"bold\">{} {} lift (%){}</text>\n",
                           y + 14.0, escape_xml(e.mechanism), to_string(e.kind),
                           e.domain ? " in " + escape_xml(*e.domain) : std::string());
        y += kTitle;
        svg += fmt::format("<line x1=\"{0:.1f}\" x2=\"{0:.1f}\" y1=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"#444\"/>\n", axis, y,
                           y + static_cast<double>(e.lifts.size()) * kRow);
        for (const auto& l : e.lifts) {
            // Shared part from the axis, specific part stacked on its end.
            const double s0 = axis, s1 = axis + px(l.shared_part);
            const double t0 = s1, t1 = s1 + px(l.specific_part);
            svg += fmt::format("<g class=\"bar-group\" data-concept=\"{}\">\n", l.concept_id);
            svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLabel - 6.0, y + 12.0,
                               escape_xml(catalog.at(l.concept_id).name));
            svg += fmt::format(
                "<rect class=\"shared\" x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.1f}\" fill=\"#9ecae1\"/>\n",
                std::min(s0, s1), y + 2.0, std::abs(s1 - s0), kRow - 4.0);
            svg += fmt::format(
                "<rect class=\"specific\" x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.1f}\" fill=\"#3182bd\"/>\n",
                std::min(t0, t1), y + 2.0, std::abs(t1 - t0), kRow - 4.0);
            svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{:+.1f}</text>\n</g>\n", width - 70.0, y + 12.0,
                               l.lift_percent);
            y += kRow;
        }
        svg += "</g>\n";
        y += kGap;
    }
    svg += "</svg>\n";
    return svg;
}

void emit_report(const std::vector<Explanation>& explanations, const data::ConceptCatalog& catalog,
                 ReportFormat format, const std::filesystem::path& path) {
    const auto text = format == ReportFormat::structured ? render_structured(explanations, catalog)
                                                         : render_svg(explanations, catalog);
    write_file_atomic(path, text);
}

}  // namespace prefx::explain
