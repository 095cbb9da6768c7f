#include "prefx/explain/applications.hpp"

#include "prefx/llm/json_extract.hpp"
#include "prefx/llm/template.hpp"
#include "prefx/util/error.hpp"

#include <regex>

namespace prefx::explain {

namespace {

std::string definitions(std::span<const data::Concept> concepts) {
    std::string out;
    for (const auto& c : concepts) {
        if (c.definition.empty()) throw TemplateError("concept '" + c.name + "' has no definition");
        if (!out.empty()) out += '\n';
        out += "- " + c.name + ": " + c.definition;
    }
    return out;
}

llm::ChatRequest request(std::string prompt, llm::Purpose tag, std::string template_id) {
    llm::ChatRequest r;
    r.prompt = std::move(prompt);
    r.tag = tag;
    r.template_id = std::move(template_id);
    return r;
}

char require_verdict(const std::string& reply) {
    const auto v = parse_verdict(reply);
    if (!v) throw ExtractionError("no A/B verdict in judge reply", reply);
    return *v;
}

}  // namespace

std::string build_tiebreak_prompt(const data::Triplet& t, std::span<const data::Concept> concepts, bool cot) {
    if (concepts.empty()) throw TemplateError("tie-break prompt needs at least one concept");
    llm::TemplateVars v;
    v.set("CONCEPT_DEFINITIONS", definitions(concepts))
        .set("USER_QUERY", t.query)
        .set("RESPONSE_A", t.response_1)
        .set("RESPONSE_B", t.response_2)
        .flag("cot", cot);
    return llm::render_asset("tiebreak.txt", v);
}

std::string build_guided_generation_prompt(const std::string& query, std::span<const data::Concept> concepts) {
    llm::TemplateVars v;
    v.set("USER_QUERY", query);
    if (concepts.empty()) return llm::render_asset("generate.txt", v);
    v.set("CONCEPT_DEFINITIONS", definitions(concepts));
    return llm::render_asset("generate_guided.txt", v);
}

std::string build_judge_prompt(const std::string& query, const std::string& response_a, const std::string& response_b,
                               bool cot) {
    llm::TemplateVars v;
    v.set("USER_QUERY", query).set("RESPONSE_A", response_a).set("RESPONSE_B", response_b).flag("cot", cot).flag(
        "few_shot", false);
    return llm::render_asset("judge.txt", v);
}

std::optional<char> parse_verdict(const std::string& reply) {
    auto read = [](std::string s) -> std::optional<char> {
        static const std::regex answer(R"(^\s*(?:response\s+)?\(?\s*([AaBb])\s*\)?\s*\.?\s*$)", std::regex::icase);
        std::smatch m;
        if (std::regex_match(s, m, answer)) return static_cast<char>(std::toupper(m.str(1)[0]));
        return std::nullopt;
    };
    try {
        const auto j = llm::extract_json_block(reply);
        if (j.is_object())
            for (const char* key : {"final_answer", "final answer", "answer"})
                if (j.contains(key) && j[key].is_string()) return read(j[key].get<std::string>());
    } catch (const ExtractionError&) {
    }
    static const std::regex loose(R"re("?final[_ ]answer"?\s*[:=]\s*"?\s*([AB])\b)re", std::regex::icase);
    std::smatch m;
    if (std::regex_search(reply, m, loose)) return static_cast<char>(std::toupper(m.str(1)[0]));
    return std::nullopt;
}

std::optional<int> resolve_tie(llm::Gateway& gateway, const data::Triplet& t, std::span<const data::Concept> concepts,
                               bool cot) {
    std::optional<int> label;
    llm::complete_with_retry(gateway, {request(build_tiebreak_prompt(t, concepts, cot), llm::Purpose::judge, "tiebreak")},
                             [&](std::size_t, const std::string& text) { label = require_verdict(text) == 'A' ? 1 : -1; });
    return label;
}

Outcome judge_pair(llm::Gateway& gateway, const std::string& query, const std::string& candidate,
                   const std::string& baseline, bool cot) {
    std::vector<llm::ChatRequest> requests{
        request(build_judge_prompt(query, candidate, baseline, cot), llm::Purpose::judge, "judge"),
        request(build_judge_prompt(query, baseline, candidate, cot), llm::Purpose::judge, "judge")};
    std::optional<char> first, second;
    llm::complete_with_retry(gateway, std::move(requests), [&](std::size_t i, const std::string& text) {
        (i == 0 ? first : second) = require_verdict(text);
    });
    const bool candidate_first = first == 'A', candidate_second = second == 'B';
    const bool baseline_first = first == 'B', baseline_second = second == 'A';
    if (candidate_first && candidate_second) return Outcome::win;
    if (baseline_first && baseline_second) return Outcome::lose;
    return Outcome::tie;
}

double win_rate(std::span<const Outcome> outcomes) {
    if (outcomes.empty()) throw ValidationError("win rate of no outcomes");
    OutcomeShares s;
    for (auto o : outcomes) (o == Outcome::win ? s.win : o == Outcome::tie ? s.tie : s.lose) += 1.0;
    return win_rate(s);
}

double win_rate(const OutcomeShares& s) {
    const double total = s.win + s.tie + s.lose;
    if (s.win < 0 || s.tie < 0 || s.lose < 0 || !(total > 0)) throw ValidationError("win rate needs non-negative shares");
    return 100.0 * (s.win + 0.5 * s.tie) / total;
}

std::vector<data::LabeledVector> excluding(const std::vector<data::LabeledVector>& labeled,
                                           const std::set<std::string>& triplet_ids) {
    std::vector<data::LabeledVector> out;
    for (const auto& lv : labeled)
        if (!triplet_ids.count(lv.x.triplet_id)) out.push_back(lv);
    return out;
}

}  // namespace prefx::explain
