#include <doctest.h>

#include "prefx/explain/applications.hpp"
#include "prefx/explain/lift.hpp"
#include "prefx/hmdr/logistic.hpp"
#include "prefx/llm/template.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/random.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <regex>
#include <unistd.h>

using namespace prefx;
using namespace prefx::explain;

namespace {

// Three concepts shared by "a" and "b", one specific to each; "c" holds no data.
data::ConceptCatalog catalog() {
    std::vector<data::Concept> cs;
    auto add = [&](std::string name, std::set<std::string> domains) {
        data::Concept c;
        c.id = static_cast<ConceptId>(cs.size());
        c.name = std::move(name);
        c.definition = "A high score indicates the response is " + c.name + "; A low score indicates it is not.";
        c.is_shared = domains.size() >= 2;
        c.domains_found = std::move(domains);
        cs.push_back(std::move(c));
    };
    add("Clarity", {"a", "b"});
    add("Accuracy", {"a", "b"});
    add("Brevity", {"a", "b"});
    add("Local <Knowledge>", {"a"});
    add("Code", {"b"});
    return data::ConceptCatalog(std::move(cs), {"a", "b", "c"});
}

hmdr::HmdrModel model(std::vector<double> b, std::vector<double> sa, std::vector<double> sb) {
    const auto cat = catalog();
    hmdr::Weights w{std::move(b), {std::move(sa), std::move(sb)}};
    hmdr::HmdrModel m({"a", "b"}, hmdr::shared_mask_from(cat), {hmdr::domain_mask_from(cat, "a"), hmdr::domain_mask_from(cat, "b")},
                      w, hmdr::HmdrParams{});
    m.catalog_checksum = data::catalog_checksum(cat);
    return m;
}

data::ConceptVector vec(std::map<ConceptId, double> values, std::string domain = "a") {
    data::ConceptVector v;
    v.triplet_id = "x";
    v.domain = std::move(domain);
    v.values = std::move(values);
    return v;
}

}  // namespace

TEST_CASE("local lift at the origin") {
    // High-precision reference values for 100 * (s(z + dz) - s(z)) / s(z).
    CHECK(lift_percent(0.0, 0.3) == doctest::Approx(14.888503362331797).epsilon(1e-12));
    CHECK(lift_percent(2.0, 0.2) == doctest::Approx(2.2085033418924303).epsilon(1e-12));
    CHECK(lift_percent(0.0, -0.3) == doctest::Approx(-14.888503362331797).epsilon(1e-12));
    CHECK(lift_percent(1.7, 0.0) == 0.0);
    CHECK_THROWS_AS(lift_percent(NAN, 0.1), NumericError);
    CHECK_THROWS_AS(lift_percent(0.0, INFINITY), NumericError);
    CHECK(std::isfinite(lift_percent(-800.0, 0.2)));
    CHECK(lift_percent(-800.0, 0.2) == doctest::Approx(100.0 * std::expm1(0.2)));
}

TEST_CASE("local lift through a model") {
    const auto m = model({0.3, 0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(local_lift(m, vec({}), std::string("a"), 0) == doctest::Approx(14.888503362331797));
    CHECK(local_lift(m, vec({}), std::string("a"), 2) == 0.0);
    // Restricted antisymmetry: holds at z = 0 only.
    const auto zero = vec({{1, 1.0}});
    CHECK(local_lift(m, zero.negated(), std::string("a"), 0) == doctest::Approx(local_lift(m, zero, std::string("a"), 0)));
    CHECK_THROWS_AS(local_lift(m, vec({}), std::string("a"), 9), LookupError);
}

TEST_CASE("global lift and its decomposition") {
    const auto m = model({0.2, 0.0, -0.1, 0.0, 0.0}, {0.1, 0.0, 0.0, 0.4, 0.0}, {0.0, 0.0, 0.0, 0.0, -0.2});
    const auto l = global_lift(m, std::string("a"), 0);
    CHECK(l.lift_percent == doctest::Approx(15.0));
    CHECK(l.shared_part == doctest::Approx(10.0));
    CHECK(l.specific_part == doctest::Approx(5.0));
    CHECK(global_lift(m, std::string("a"), 1).lift_percent == 0.0);
    CHECK(global_lift(m, std::nullopt, 0).specific_part == 0.0);
    CHECK_THROWS_AS(global_lift(m, std::string("a"), -1), LookupError);

    const auto e = explain_global(m, "human", std::string("a"));
    REQUIRE(e.lifts.size() == 3);
    CHECK(e.lifts[0].concept_id == 3);
    CHECK(e.lifts[1].concept_id == 0);
    CHECK(e.lifts[2].concept_id == 2);
    for (const auto& x : e.lifts) CHECK(x.lift_percent == x.shared_part + x.specific_part);
    CHECK(e.catalog_checksum == m.catalog_checksum);
    CHECK(e.model_checksum.size() == 64);
}

TEST_CASE("local lift stays within the second-order remainder") {
    Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        const double z = -8.0 + 16.0 * uniform_unit(rng);
        const double dz = -0.25 + 0.5 * uniform_unit(rng);
        const double linear = (1.0 - hmdr::sigmoid(z)) * dz * 100.0;
        const double bound = 0.5 * 0.1 * dz * dz * 100.0;
        const double lift = lift_percent(z, dz);
        // The remainder is divided by s(z) like the lift itself.
        CHECK(std::abs(lift - linear) <= bound / hmdr::sigmoid(z) + 1e-12);
        // Without that division the bound holds near the origin.
        if (std::abs(z) <= 0.25) CHECK(std::abs(lift - linear) <= bound + 1e-12);
    }
}

TEST_CASE("mean local lift on symmetric data approaches the global lift") {
    const auto m = model({0.25, -0.2, 0.1, 0.0, 0.0}, {0.0, 0.0, 0.05, -0.25, 0.0}, {0.0, 0.0, 0.0, 0.0, 0.0});
    Rng rng(3);
    std::vector<data::ConceptVector> xs;
    for (int i = 0; i < 4000; ++i) {
        std::map<ConceptId, double> v;
        for (ConceptId j = 0; j < 4; ++j) {
            const auto u = uniform_index(rng, 3);
            if (u) v[j] = u == 1 ? 1.0 : -1.0;
        }
        xs.push_back(vec(v));
        xs.push_back(vec(v).negated());
    }
    for (ConceptId j : {0, 1, 2, 3}) {
        double sum = 0.0;
        for (const auto& x : xs) sum += local_lift(m, x, std::string("a"), j);
        const double mean = sum / static_cast<double>(xs.size());
        const double global = global_lift(m, std::string("a"), j).lift_percent;
        CHECK(std::abs(mean - global) <= 0.1 * std::abs(global));
    }
}

TEST_CASE("top-k in self and diff modes") {
    // Weights {A:0.5, B:0.1, C:0.3} in the shared vector.
    const auto target = model({0.5, 0.1, 0.3, 0.0, 0.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
    const auto et = explain_global(target, "judge", std::string("a"));
    CHECK(top_k_concepts(et, nullptr, 2, TopKMode::self) == std::vector<ConceptId>{0, 2});

    const auto t2 = model({0.5, 0.1, 0.0, 0.0, 0.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
    const auto ref = model({0.4, -0.2, 0.0, 0.0, 0.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
    const auto e2 = explain_global(t2, "human", std::string("a"));
    const auto er = explain_global(ref, "judge", std::string("a"));
    CHECK(top_k_concepts(e2, &er, 1, TopKMode::diff) == std::vector<ConceptId>{1});

    const auto zero = explain_global(model({0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}), "x", std::string("a"));
    CHECK(top_k_concepts(zero, nullptr, 4, TopKMode::self).empty());
    CHECK_THROWS_AS(top_k_concepts(e2, nullptr, 1, TopKMode::diff), ValidationError);
    const auto other_domain = explain_global(ref, "judge", std::string("b"));
    CHECK_THROWS_AS(top_k_concepts(e2, &other_domain, 1, TopKMode::diff), ValidationError);

    // Positive rescaling leaves the ranking unchanged.
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> b(5, 0.0);
        for (std::size_t j = 0; j < 3; ++j) b[j] = uniform_unit(rng) - 0.3;
        std::vector<double> sa(5, 0.0);
        sa[3] = uniform_unit(rng) - 0.5;
        const double scale = 0.1 + 5.0 * uniform_unit(rng);
        auto scaled_b = b, scaled_sa = sa;
        for (auto& w : scaled_b) w *= scale;
        for (auto& w : scaled_sa) w *= scale;
        const auto e1 = explain_global(model(b, sa, std::vector<double>(5, 0.0)), "m", std::string("a"));
        const auto es = explain_global(model(scaled_b, scaled_sa, std::vector<double>(5, 0.0)), "m", std::string("a"));
        CHECK(top_k_concepts(e1, nullptr, 3, TopKMode::self) == top_k_concepts(es, nullptr, 3, TopKMode::self));
    }
}

TEST_CASE("tie-break and generation prompts") {
    const auto cat = catalog();
    data::Triplet t;
    t.id = "t";
    t.domain = "a";
    t.query = "How do I boil an egg?";
    t.response_1 = "Boil it.";
    t.response_2 = "Place the egg in boiling water for nine minutes.";
    std::vector<data::Concept> four(cat.concepts().begin(), cat.concepts().begin() + 4);
    const auto p = build_tiebreak_prompt(t, four, false);
    for (const auto& c : four) CHECK(p.find(c.definition) != std::string::npos);
    CHECK(p.find("Response A:\n" + t.response_1) != std::string::npos);
    CHECK(p.find("\"explanation\"") == std::string::npos);
    CHECK(build_tiebreak_prompt(t, four, true).find("\"explanation\"") != std::string::npos);
    CHECK(build_tiebreak_prompt(t, four, true) == build_tiebreak_prompt(t, four, true));
    CHECK_THROWS_AS(build_tiebreak_prompt(t, {}, false), TemplateError);
    auto undefined = four;
    undefined[2].definition.clear();
    CHECK_THROWS_AS(build_tiebreak_prompt(t, undefined, false), TemplateError);

    const auto g = build_guided_generation_prompt(t.query, four);
    CHECK(g.find(four[3].definition) != std::string::npos);
    CHECK(g.find(t.query) != std::string::npos);
    const auto vanilla = build_guided_generation_prompt(t.query, {});
    CHECK(vanilla == llm::render_asset("generate.txt", llm::TemplateVars{}.set("USER_QUERY", t.query)));
}

TEST_CASE("verdicts and tie resolution through the mock") {
    CHECK(parse_verdict("```json\n{\"final_answer\": \"B\"}\n```") == 'B');
    CHECK(parse_verdict("{\"explanation\": \"...\", \"final_answer\": \"Response A\"}") == 'A');
    CHECK(parse_verdict("Final answer: B") == 'B');
    CHECK_FALSE(parse_verdict("I like both").has_value());

    llm::GatewayConfig config;
    config.backoff = std::chrono::milliseconds(0);
    llm::Gateway gw(config);
    const auto cat = catalog();
    data::Triplet t;
    t.id = "t";
    t.domain = "a";
    t.query = "q";
    t.response_1 = "short";
    t.response_2 = "a much longer answer";
    std::vector<data::Concept> two(cat.concepts().begin(), cat.concepts().begin() + 2);
    const auto label = resolve_tie(gw, t, two, false);
    REQUIRE(label.has_value());
    CHECK((*label == 1 || *label == -1));

    // The mock judge prefers clearly longer responses and otherwise says "A".
    CHECK(judge_pair(gw, "q", "a clearly longer candidate response", "short", false) == Outcome::win);
    CHECK(judge_pair(gw, "q", "short", "a clearly longer baseline response", false) == Outcome::lose);
    CHECK(judge_pair(gw, "q", "same size", "size same", false) == Outcome::tie);
}

TEST_CASE("win rate") {
    CHECK(win_rate(OutcomeShares{76.2, 19.3, 4.5}) == doctest::Approx(85.85));
    std::vector<Outcome> ties(10, Outcome::tie);
    CHECK(win_rate(ties) == 50.0);
    std::vector<Outcome> losses(3, Outcome::lose);
    CHECK(win_rate(losses) == 0.0);
    std::vector<Outcome> mixed{Outcome::win, Outcome::win, Outcome::tie, Outcome::lose};
    CHECK(win_rate(mixed) == 62.5);
    CHECK_THROWS_AS(win_rate(std::vector<Outcome>{}), ValidationError);
}

TEST_CASE("excluding the ties being resolved") {
    std::vector<data::LabeledVector> lv(3);
    lv[0].x.triplet_id = "a";
    lv[1].x.triplet_id = "b";
    lv[2].x.triplet_id = "c";
    const auto kept = excluding(lv, {"b"});
    REQUIRE(kept.size() == 2);
    CHECK(kept[1].x.triplet_id == "c");
}

TEST_CASE("reports") {
    const auto cat = catalog();
    const auto m = model({0.2, 0.0, -0.1, 0.0, 0.0}, {0.1, 0.0, 0.0, 0.4, 0.0}, {0.0, 0.0, 0.0, 0.0, -0.2});
    const auto e = explain_global(m, "human", std::string("a"));
    const auto doc = nlohmann::json::parse(render_structured({e}, cat));
    REQUIRE(doc["explanations"].size() == 1);
    CHECK(doc["explanations"][0]["lifts"].size() == 3);
    CHECK(doc["explanations"][0]["lifts"][0]["concept"] == "Local <Knowledge>");

    Explanation empty;
    const auto none = nlohmann::json::parse(render_structured({empty}, cat));
    CHECK(none["explanations"][0]["lifts"].empty());

    const auto svg = render_svg({e, explain_global(m, "human", std::string("b"))}, cat);
    std::regex group("class=\"bar-group\"");
    CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), group), std::sregex_iterator()) == 3 + 3);
    CHECK(svg.find("Local &lt;Knowledge&gt;") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / ("prefx_expl_" + std::to_string(::getpid()));
    emit_report({e}, cat, ReportFormat::svg, dir / "lift.svg");
    CHECK(read_file(dir / "lift.svg") == render_svg({e}, cat));
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(emit_report({e}, cat, ReportFormat::structured, "/proc/definitely/not/here.json"), IoError);
}
