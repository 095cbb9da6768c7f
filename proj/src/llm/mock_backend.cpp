#include "prefx/llm/mock_backend.hpp"

#include "prefx/llm/json_extract.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/hash.hpp"
#include "prefx/util/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <regex>

namespace prefx::llm {

MockScript load_mock_script(const std::filesystem::path& path) {
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        return j.at("replies").get<MockScript>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mock script " + path.string() + ": " + e.what());
    }
}

void save_mock_script(const MockScript& script, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["replies"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : script) j["replies"][k] = v;
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string MockBackend::send(const ChatRequest& request) {
    if (auto it = script_.find(sha256_hex(request.prompt)); it != script_.end()) return it->second;
    if (synthesizer_) return synthesizer_(request);
    throw TransportError("mock backend: no scripted reply for prompt " + sha256_hex(request.prompt) +
                         " (template " + request.template_id + ")");
}

namespace {

std::uint64_t hash64(std::string_view a, std::string_view b = {}) {
    std::string material(a);
    material += '\0';
    material += b;
    return std::strtoull(sha256_hex(material).substr(0, 16).c_str(), nullptr, 16);
}

std::string between(const std::string& text, std::string_view open, std::string_view close) {
    const auto a = text.find(open);
    if (a == std::string::npos) return {};
    const auto start = a + open.size();
    const auto b = text.find(close, start);
    return text.substr(start, b == std::string::npos ? std::string::npos : b - start);
}

/// The fill-in skeleton: the last fenced JSON block of the prompt.
Json skeleton(const std::string& prompt) {
    const auto fence = prompt.rfind("```json");
    if (fence == std::string::npos) return Json::object();
    return extract_json_block(std::string_view(prompt).substr(fence));
}

std::string fenced(const Json& j) { return "```json\n" + j.dump(4) + "\n```"; }

/// Content quality of a response under a concept, 1..7.
int quality(std::string_view concept_name, std::string_view response) {
    return static_cast<int>(hash64(concept_name, response) % 7) + 1;
}

std::vector<std::string> listed_concepts(const std::string& prompt) {
    std::vector<std::string> names;
    static const std::regex line(R"(^- ([^:\n]+): )", std::regex::multiline);
    for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), line); it != std::sregex_iterator(); ++it)
        names.push_back((*it)[1]);
    return names;
}

struct PoolConcept {
    const char* name;
    const char* description;
};

constexpr std::array<PoolConcept, 24> kPool{{
    {"Conciseness", "A good response is brief and avoids unnecessary detail."},
    {"Structure", "A good response is organized into a logical sequence of parts."},
    {"Step-by-step Structure", "A good response walks through the solution in ordered steps."},
    {"Actionability", "A good response gives advice the user can act on immediately."},
    {"Politeness", "A good response is courteous and respectful toward the user."},
    {"Relevancy", "A good response stays on the topic raised in the query."},
    {"Clarity", "A good response is easy to follow."},
    {"Examples", "A good response illustrates its points with concrete examples."},
    {"Humor", "A good response uses light humor where it fits."},
    {"Caution", "A good response warns about risks the user may face."},
    {"Citations", "A good response points to sources that back its claims."},
    {"Personalization", "A good response adapts to the user's stated situation."},
    {"Completeness", "A good response addresses every part of the query."},
    {"Confidence", "A good response states its answer without needless hedging."},
    {"Verbosity", "A bad response is padded with repetitive or filler text."},
    {"Jargon", "A bad response relies on unexplained technical terms."},
    {"Local Knowledge", "A good response reflects familiarity with the specific place or context."},
    {"Legal Disclaimer", "A good response notes that it is not a substitute for professional advice."},
    {"Ingredient Substitutions", "A good response suggests alternatives for hard-to-find ingredients."},
    {"Cost Awareness", "A good response considers the budget implications of its advice."},
    {"Code Correctness", "A good response contains code that runs as intended."},
    {"Formatting", "A good response uses lists and headings to aid reading."},
    {"Originality", "A good response offers a fresh angle rather than a stock answer."},
    {"Tone", "A good response matches the register the user writes in."},
}};

const std::array<const char*, 6> kSubdomains{"general", "technology", "health", "finance", "cooking", "law"};
const std::array<const char*, 5> kTasks{"question answering", "advice", "explanation", "recommendation", "how-to"};

std::string reply_propose_tags(const std::string& prompt) {
    Rng rng(hash64(prompt));
    Json j;
    j["domains"] = Json::array();
    j["tasks"] = Json::array();
    const auto nd = 1 + uniform_index(rng, 2);
    const auto nt = 1 + uniform_index(rng, 2);
    for (std::size_t i : sample_without_replacement(rng, kSubdomains.size(), nd)) j["domains"].push_back(kSubdomains[i]);
    for (std::size_t i : sample_without_replacement(rng, kTasks.size(), nt)) j["tasks"].push_back(kTasks[i]);
    return fenced(j);
}

std::string reply_annotate_tags(const std::string& prompt) {
    Rng rng(hash64(prompt));
    Json j;
    for (const auto& [field, open, close] : {std::tuple{"domains", "Domains:\n", "\n\nTasks:"},
                                             std::tuple{"tasks", "Tasks:\n", "\n\nUser Query:"}}) {
        j[field] = Json::array();
        Json options = Json::array();
        try {
            options = Json::parse(between(prompt, open, close));
        } catch (const std::exception&) {
        }
        for (const auto& o : options)
            if (uniform_unit(rng) < 0.5) j[field].push_back(o);
        if (j[field].empty()) j[field].push_back("None");
    }
    return fenced(j);
}

std::string reply_discover(const std::string& prompt) {
    static const std::regex count(R"(identify and describe (\d+) concepts)");
    std::smatch m;
    std::size_t n = 10;
    if (std::regex_search(prompt, m, count)) n = std::stoul(m[1]);
    Rng rng(hash64(prompt));
    Json j = Json::object();
    for (std::size_t i : sample_without_replacement(rng, kPool.size(), std::min(n, kPool.size())))
        j[kPool[i].name] = kPool[i].description;
    return "Here are the concepts.\n" + fenced(j);
}

std::string reply_duplicates(const std::string& prompt) {
    Json j = skeleton(prompt);
    for (auto& [key, value] : j.items()) {
        const auto bar = key.find(" | ");
        std::string a = key.substr(0, bar), b = bar == std::string::npos ? "" : key.substr(bar + 3);
        auto head = [](std::string s) {
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
            return s.substr(0, 5);
        };
        value = head(a) == head(b);
    }
    return fenced(j);
}

std::string reply_define(const std::string& prompt) {
    Json j = skeleton(prompt);
    for (auto& [key, value] : j.items()) {
        std::string lower = key;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        value = "A high score indicates the response shows strong " + lower + "; A low score indicates the response lacks " +
                lower + ".";
    }
    return fenced(j);
}

std::string reply_relevance(const std::string& prompt) {
    Json j = skeleton(prompt);
    const auto query = between(prompt, "User Query:\n", "\n\nResponse 1:");
    for (auto& [key, value] : j.items()) value = hash64(key, query) % 5 != 0;
    return fenced(j);
}

std::string reply_comp(const std::string& prompt) {
    Json j = skeleton(prompt);
    const auto r1 = between(prompt, "\nResponse 1:\n", "\n\nResponse 2:");
    const auto r2 = between(prompt, "\nResponse 2:\n", "\n\nFill in");
    for (auto& [key, value] : j.items()) {
        const int diff = quality(key, r1) - quality(key, r2);
        const int answer = diff >= 2 ? 1 : diff <= -2 ? 2 : diff == 0 ? 0 : 1;
        value = "Compared on " + key + ". Final answer: " + std::to_string(answer);
    }
    return fenced(j);
}

std::string reply_score(const std::string& prompt) {
    Json j = skeleton(prompt);
    const auto r = between(prompt, "\nResponse:\n", "\n\nFill in");
    for (auto& [key, value] : j.items()) {
        const int score = hash64(key, "relevant:" + r) % 8 == 0 ? 0 : quality(key, r);
        value = "Scored on " + key + ". Final answer: " + std::to_string(score);
    }
    return fenced(j);
}

std::string reply_judge(const std::string& prompt, bool concepts) {
    const auto a = between(prompt, "\nResponse A:\n", "\n\nResponse B:");
    const auto b = between(prompt, "\nResponse B:\n", "\n\nPlease provide");
    std::string answer = "A";
    if (concepts) {
        int qa = 0, qb = 0;
        for (const auto& name : listed_concepts(prompt)) {
            qa += quality(name, a);
            qb += quality(name, b);
        }
        if (qb > qa) answer = "B";
    } else {
        const double la = static_cast<double>(a.size()), lb = static_cast<double>(b.size());
        // Close lengths fall back on position, which flips under a swap.
        if (std::abs(la - lb) > 0.1 * std::max(la, lb)) answer = lb > la ? "B" : "A";
    }
    Json j;
    if (prompt.find("\"explanation\"") != std::string::npos) j["explanation"] = "Compared both responses.";
    j["final_answer"] = answer;
    return fenced(j);
}

std::string reply_generate(const std::string& prompt, bool guided) {
    const auto query = prompt.substr(prompt.rfind("\n\n") + 2);
    std::string text = "Here is a response to: " + query.substr(0, 80);
    if (guided) {
        const auto names = listed_concepts(prompt);
        text += "\nI paid attention to:";
        for (const auto& n : names) text += " " + n + ";";
    }
    return text;
}

}  // namespace

std::string synthesize_reply(const ChatRequest& request) {
    const auto& t = request.template_id;
    const auto& p = request.prompt;
    if (t == "propose_tags") return reply_propose_tags(p);
    if (t == "annotate_tags") return reply_annotate_tags(p);
    if (t == "discover") return reply_discover(p);
    if (t == "duplicates") return reply_duplicates(p);
    if (t == "define") return reply_define(p);
    if (t == "relevance") return reply_relevance(p);
    if (t == "comp") return reply_comp(p);
    if (t == "score") return reply_score(p);
    if (t == "judge") return reply_judge(p, false);
    if (t == "tiebreak") return reply_judge(p, true);
    if (t == "generate") return reply_generate(p, false);
    if (t == "generate_guided") return reply_generate(p, true);
    throw TransportError("mock synthesizer: unknown template '" + t + "'");
}

}  // namespace prefx::llm
