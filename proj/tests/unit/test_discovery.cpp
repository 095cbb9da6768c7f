#include <doctest.h>

#include "prefx/discovery/discovery.hpp"
#include "prefx/discovery/stemmer.hpp"
#include "prefx/llm/mock_backend.hpp"
#include "prefx/util/error.hpp"

#include <algorithm>

using namespace prefx;
using namespace prefx::discovery;

namespace {

llm::GatewayConfig mock_config() {
    llm::GatewayConfig c;
    c.backend = llm::BackendKind::mock;
    c.backoff = std::chrono::milliseconds(0);
    return c;
}

data::PreferenceDataset small_dataset(std::size_t per_domain) {
    std::vector<data::Triplet> ts;
    for (const char* domain : {"code", "travel"})
        for (std::size_t i = 0; i < per_domain; ++i) {
            data::Triplet t;
            t.id = std::string(domain) + "-" + std::to_string(i);
            t.domain = domain;
            t.query = "Question " + std::to_string(i) + " about " + domain + "?";
            t.response_1 = "A short answer " + std::to_string(i);
            t.response_2 = "A considerably longer and more detailed answer number " + std::to_string(i);
            t.labels["human"] = i % 3 == 0 ? 1 : -1;
            ts.push_back(std::move(t));
        }
    return data::PreferenceDataset(std::move(ts));
}

DraftConcept draft(std::string name, std::set<std::string> domains, std::size_t batches, bool fixed = false) {
    DraftConcept d;
    d.name = std::move(name);
    d.domains_found = std::move(domains);
    d.batches = batches;
    d.fixed = fixed;
    d.descriptions = {d.name + " description"};
    return d;
}

}  // namespace

TEST_CASE("porter stemmer matches the classic reference outputs") {
    CHECK(porter_stem("caresses") == "caress");
    CHECK(porter_stem("ponies") == "poni");
    CHECK(porter_stem("hopping") == "hop");
    CHECK(porter_stem("relevance") == "relev");
    CHECK(porter_stem("relevancy") == "relev");
    CHECK(porter_stem("generalizations") == "gener");
    CHECK(porter_stem("conditional") == "condit");
    CHECK(porter_stem("sky") == "sky");
}

TEST_CASE("name stems drop stop words and punctuation") {
    CHECK(name_stems("Clarity of the Explanation") == std::set<std::string>{"clariti", "explan"});
    CHECK(name_stems("Step-by-step") == std::set<std::string>{"stepbystep"});
}

TEST_CASE("flagging pairs names that share a stem") {
    const std::vector<std::string> names{"Relevance", "Query Relevancy", "Humor", "Humorous Tone", "Conciseness"};
    const auto pairs = flag_duplicates(names);
    CHECK(pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}});
    CHECK(flag_duplicates({"Accuracy of Code", "Accuracy"}).size() == 1);
    CHECK(flag_duplicates({"Tone and Style", "Use of Examples"}).empty());
}

TEST_CASE("top tags by count then name") {
    std::map<std::string, std::size_t> counts{{"python", 7}, {"sql", 2}, {"bash", 2}, {"java", 5}};
    CHECK(top_tags(counts, 3) == std::vector<std::string>{"python", "java", "bash"});
    std::map<std::string, std::size_t> many;
    for (int i = 0; i < 12; ++i) many["t" + std::to_string(i)] = 1;
    CHECK(top_tags(many, 10).size() == 10);
}

TEST_CASE("annotation keeps vocabulary tags and always adds None") {
    TagVocabulary vocab{{"python", "sql"}, {"debugging"}};
    const auto tags = parse_query_tags(R"({"domains": ["Python", "rust"], "tasks": ["None"]})", vocab);
    CHECK(tags.subdomains == std::set<std::string>{kNoTag, "python"});
    CHECK(tags.tasks == std::set<std::string>{kNoTag});
    CHECK_THROWS_AS(parse_query_tags("no json here", vocab), ExtractionError);
}

TEST_CASE("pools take the cross product of tags") {
    std::vector<QueryTags> tags(3);
    tags[0].subdomains.insert("python");
    tags[0].tasks.insert("debugging");
    tags[1].subdomains.insert("python");
    const auto pools = tag_pools(tags);
    CHECK(pools.at({kNoTag, kNoTag}) == std::vector<std::size_t>{0, 1, 2});
    CHECK(pools.at({"python", kNoTag}) == std::vector<std::size_t>{0, 1});
    CHECK(pools.at({"python", "debugging"}) == std::vector<std::size_t>{0});
    CHECK(pools.at({kNoTag, "debugging"}) == std::vector<std::size_t>{0});
}

TEST_CASE("batches hold distinct members of one pool") {
    DiscoveryConfig c;
    c.batches_per_domain = 50;
    std::map<TagPair, std::vector<std::size_t>> pools;
    pools[{kNoTag, kNoTag}] = {0, 1, 2, 3, 4, 5, 6};
    pools[{"tiny", kNoTag}] = {0, 1};  // too small to ever be drawn
    const auto batches = build_batches(pools, c, 3);
    REQUIRE(batches.size() == 50);
    for (const auto& b : batches) {
        CHECK(b.pair == TagPair{kNoTag, kNoTag});
        std::set<std::size_t> distinct(b.members.begin(), b.members.end());
        CHECK(distinct.size() == c.batch_size);
        CHECK(*distinct.rbegin() < 7);
    }
    CHECK(build_batches(pools, c, 3)[17].members == batches[17].members);

    std::map<TagPair, std::vector<std::size_t>> small;
    small[{kNoTag, kNoTag}] = {0, 1};
    CHECK_THROWS_AS(build_batches(small, c, 3), ConfigError);
}

TEST_CASE("pools are drawn in proportion to their size") {
    DiscoveryConfig c;
    c.batches_per_domain = 10000;
    std::map<TagPair, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < 80; ++i) pools[{"big", kNoTag}].push_back(i);
    for (std::size_t i = 80; i < 100; ++i) pools[{"small", kNoTag}].push_back(i);
    const auto batches = build_batches(pools, c, 11);
    const auto big = std::count_if(batches.begin(), batches.end(), [](const Batch& b) { return b.pair.first == "big"; });
    CHECK(static_cast<double>(big) / 10000.0 == doctest::Approx(0.8).epsilon(0.025));
}

TEST_CASE("discovery prompts follow the label and framing") {
    const auto ds = small_dataset(5);
    std::vector<const data::Triplet*> members;
    for (std::size_t i = 0; i < 5; ++i) members.push_back(&ds.triplets()[i]);
    DiscoveryConfig c;
    std::set<Framing> seen;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const auto p = build_discovery_prompt(members, {"python", kNoTag}, c, s);
        seen.insert(p.framing);
        const auto& text = p.request.prompt;
        CHECK(text.find("identify and describe 10 concepts") != std::string::npos);
        CHECK(text.find("python") != std::string::npos);
        CHECK((text.find("Chosen Response:") != std::string::npos) == (p.framing != Framing::rejected_only));
        CHECK((text.find("Rejected Response:") != std::string::npos) == (p.framing != Framing::chosen_only));
        if (p.framing == Framing::chosen_vs_rejected) {
            // Triplet 0 has label +1 so response_1 is the chosen one.
            CHECK(text.find("Chosen Response:\n" + members[0]->response_1) != std::string::npos);
            CHECK(text.find("Chosen Response:\n" + members[1]->response_2) != std::string::npos);
        }
        CHECK((text.find("Clarity") != std::string::npos) == p.diverse);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("candidate parsing caps the count and flags fixed names") {
    DiscoveryConfig c;
    DiscoveryPrompt p;
    p.diverse = true;
    std::string reply = "```json\n{";
    for (int i = 0; i < 12; ++i) reply += "\"Concept " + std::to_string(i) + "\": \"d\", ";
    reply += "\"Clarity\": \"clear\"}\n```";
    const auto cands = parse_candidates(reply, p, "code", 4, c);
    REQUIRE(cands.size() == 10);
    CHECK(cands.front().name == "Concept 0");
    CHECK(cands.front().batch == 4);

    const auto fixed = parse_candidates(R"({"Clarity": "clear", "Wit": "funny"})", p, "code", 0, c);
    REQUIRE(fixed.size() == 2);
    CHECK(fixed[0].names_fixed_concept);
    CHECK_FALSE(fixed[1].names_fixed_concept);
    CHECK_THROWS_AS(parse_candidates("nothing", p, "code", 0, c), ExtractionError);
}

TEST_CASE("aggregation puts fixed concepts first, found everywhere") {
    const std::vector<data::DomainId> domains{"a", "b"};
    std::vector<CandidateConcept> cands{{"Wit", "funny", "a", 0}, {"Wit", "humorous", "b", 1}, {"Wit", "funny", "a", 0}};
    const auto drafts = aggregate_candidates(cands, domains);
    const auto nfixed = fixed_concepts().size();
    REQUIRE(drafts.size() == nfixed + 1);
    CHECK(drafts[0].fixed);
    CHECK(drafts[0].domains_found.size() == 2);
    const auto& wit = drafts.back();
    CHECK(wit.batches == 2);
    CHECK(wit.descriptions == std::vector<std::string>{"funny", "humorous"});
}

TEST_CASE("merging keeps the most widespread representative") {
    std::vector<DraftConcept> drafts{draft("Brevity", {"a"}, 9), draft("Brief Answers", {"a", "b", "c"}, 2),
                                     draft("Tone", {"a"}, 1)};
    const auto merged = merge_duplicates(drafts, {{0, 1}}, {true});
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].name == "Brief Answers");
    CHECK(merged[0].batches == 11);
    CHECK(merged[0].descriptions.size() == 2);
    CHECK(merged[1].name == "Tone");

    // A-B and B-C merge transitively; ties fall to the earlier draft.
    std::vector<DraftConcept> chain{draft("A", {"x"}, 1), draft("B", {"x"}, 1), draft("C", {"x"}, 1)};
    const auto one = merge_duplicates(chain, {{0, 1}, {1, 2}}, {true, true});
    REQUIRE(one.size() == 1);
    CHECK(one[0].name == "A");
    CHECK(merge_duplicates(chain, {{0, 1}, {1, 2}}, {false, false}).size() == 3);
}

TEST_CASE("classification follows the half-of-domains rule") {
    std::vector<data::DomainId> domains{"d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8"};
    std::vector<DraftConcept> drafts{draft("Zeal", {"d1", "d2", "d3", "d4"}, 1), draft("Amity", {"d1", "d2", "d3"}, 1)};
    for (auto& d : drafts) d.definition = stub_definition(d.name);
    const auto catalog = classify_shared(drafts, domains);
    CHECK(catalog.at(0).name == "Amity");
    CHECK_FALSE(catalog.at(0).is_shared);
    CHECK(catalog.at(1).is_shared);

    const auto single = classify_shared({draft("Tone", {"only"}, 1)}, {"only"});
    CHECK(single.at(0).is_shared);
}

TEST_CASE("definitions are requested in groups") {
    llm::Gateway gw(mock_config());
    std::vector<DraftConcept> drafts;
    for (int i = 0; i < 7; ++i) drafts.push_back(draft("Concept " + std::to_string(i), {"a"}, 1));
    DiscoveryConfig c;
    const auto warnings = define_concepts(gw, drafts, c);
    CHECK(warnings.empty());
    CHECK(gw.stats().backend_calls == 2);
    for (const auto& d : drafts) CHECK(data::follows_definition_template(d.definition));
    CHECK(data::follows_definition_template(stub_definition("Tone")));
}

TEST_CASE("a mock discovery run is deterministic") {
    const auto ds = small_dataset(40);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    DiscoveryConfig c;
    c.batches_per_domain = 6;
    c.seed = 5;
    llm::Gateway g1(mock_config()), g2(mock_config());
    const auto r1 = run_discovery(g1, ds, all, c);
    const auto r2 = run_discovery(g2, ds, all, c);
    CHECK(r1.catalog == r2.catalog);
    CHECK(r1.report.batches.size() == 12);
    CHECK(r1.report.candidates > 0);
    for (const auto& [name, def] : fixed_concepts()) {
        const auto* concept_ = r1.catalog.find_by_name(name);
        REQUIRE(concept_ != nullptr);
        CHECK(concept_->is_shared);
    }
    CHECK(r1.report.shared + r1.report.specific == r1.catalog.size());
    for (const auto& concept_ : r1.catalog.concepts()) CHECK(data::follows_definition_template(concept_.definition));
}
