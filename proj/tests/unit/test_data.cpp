#include <doctest.h>

#include "prefx/data/catalog.hpp"
#include "prefx/data/concept_vector.hpp"
#include "prefx/data/dataset.hpp"
#include "prefx/data/splits.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/random.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace prefx;
using namespace prefx::data;

namespace {

std::string record(const std::string& id, const std::string& domain, int label) {
    return R"({"id":")" + id + R"(","domain":")" + domain +
           R"(","query":"q","response_1":"a","response_2":"b","labels":{"human":)" + std::to_string(label) + "}}";
}

}  // namespace

TEST_CASE("load_dataset counts domains") {
    auto ds = parse_dataset(record("1", "legal", 1) + "\n" + record("2", "food", -1) + "\n");
    CHECK(ds.domain_count() == 2);
    CHECK(ds.domains() == std::vector<DomainId>{"food", "legal"});
    CHECK(ds.count("food") == 1);
    CHECK(ds.count("legal") == 1);
    CHECK(ds.domain_index("legal") == 1);
}

TEST_CASE("load_dataset rejects empty input") {
    CHECK_THROWS_WITH_AS(parse_dataset(""), "no triplets", ValidationError);
}

TEST_CASE("load_dataset names the offending label field") {
    try {
        parse_dataset(record("1", "legal", 2));
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("labels.human") != std::string::npos);
    }
}

TEST_CASE("load_dataset reports the line of malformed JSON") {
    try {
        parse_dataset(record("1", "legal", 1) + "\n{not json\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("identical responses are rejected") {
    CHECK_THROWS_AS(
        parse_dataset(R"({"id":"1","domain":"d","query":"q","response_1":"a","response_2":"a","labels":{}})"),
        ValidationError);
}

TEST_CASE("dataset serialization round-trips") {
    std::string text = record("1", "legal", 1) + "\n" + record("2", "food", 0) + "\n";
    auto ds = parse_dataset(text);
    auto again = parse_dataset(serialize_dataset(ds));
    CHECK(again.size() == 2);
    CHECK(*again.triplets()[1].label("human") == 0);
    CHECK(ds.decided_indices("human") == std::vector<std::size_t>{0});
}

TEST_CASE("augment_symmetric") {
    ConceptVector a{"t1", "d", RepresentationKind::comp, {{0, 1.0}}};
    SUBCASE("single instance gains its mirror") {
        auto out = augment_symmetric({{a, 1}});
        REQUIRE(out.size() == 2);
        CHECK(out[0].x.values.at(0) == 1.0);
        CHECK(out[0].y == 1);
        CHECK(out[1].x.values.at(0) == -1.0);
        CHECK(out[1].y == -1);
    }
    SUBCASE("empty") { CHECK(augment_symmetric({}).empty()); }
    SUBCASE("tie rejected") { CHECK_THROWS_AS(augment_symmetric({{a, 0}}), ValidationError); }
    SUBCASE("feature and label sums cancel") {
        Rng rng(7);
        std::vector<LabeledVector> data;
        for (int i = 0; i < 100; ++i) {
            ConceptVector v{"t" + std::to_string(i), "d", RepresentationKind::score, {}};
            for (int j = 0; j < 6; ++j)
                if (uniform_unit(rng) < 0.5) v.values[j] = static_cast<double>(uniform_index(rng, 12)) - 6.0;
            std::erase_if(v.values, [](const auto& kv) { return kv.second == 0.0; });
            data.push_back({v, uniform_index(rng, 2) ? 1 : -1});
        }
        auto out = augment_symmetric(data);
        CHECK(out.size() == 200);
        std::vector<double> sums(6, 0.0);
        int label_sum = 0;
        for (const auto& inst : out) {
            for (const auto& [j, v] : inst.x.values) sums[static_cast<std::size_t>(j)] += v;
            label_sum += inst.y;
        }
        for (double s : sums) CHECK(s == 0.0);
        CHECK(label_sum == 0);
    }
}

TEST_CASE("concept vector validation") {
    ConceptVector v{"t", "d", RepresentationKind::comp, {{1, 2.0}}};
    CHECK_THROWS_AS(validate(v), ValidationError);
    v.kind = RepresentationKind::score;
    CHECK_NOTHROW(validate(v));
    v.values[1] = 7.0;
    CHECK_THROWS_AS(validate(v), ValidationError);
    v.values[1] = 2.5;
    CHECK_THROWS_AS(validate(v), ValidationError);
}

namespace {

ConceptCatalog random_catalog(Rng& rng) {
    const std::size_t D = 1 + uniform_index(rng, 5);
    std::vector<DomainId> domains;
    for (std::size_t d = 0; d < D; ++d) domains.push_back("dom" + std::to_string(d));
    std::vector<Concept> concepts;
    const std::size_t c = 1 + uniform_index(rng, 30);
    for (std::size_t j = 0; j < c; ++j) {
        Concept k;
        k.id = static_cast<ConceptId>(j);
        k.name = "Concept \"" + std::to_string(j) + "\" é";
        k.definition = "A high score indicates x; A low score indicates y.";
        for (std::size_t n = uniform_index(rng, 6); n > 0; --n) k.descriptions.push_back("A good response " + std::to_string(n));
        for (const auto& d : domains)
            if (uniform_unit(rng) < 0.4) k.domains_found.insert(d);
        if (k.domains_found.empty()) k.domains_found.insert(domains[uniform_index(rng, D)]);
        k.is_shared = k.domains_found.size() >= shared_threshold(D);
        concepts.push_back(std::move(k));
    }
    return ConceptCatalog(std::move(concepts), domains);
}

}  // namespace

TEST_CASE("catalog round-trips and partitions ids (property)") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        ConceptCatalog cat = random_catalog(rng);
        ConceptCatalog again = parse_catalog(serialize_catalog(cat));
        REQUIRE(again == cat);
        CHECK(catalog_checksum(again) == catalog_checksum(cat));
        std::set<ConceptId> covered(cat.shared_ids().begin(), cat.shared_ids().end());
        for (const auto& d : cat.domains()) {
            for (ConceptId id : cat.specific_ids(d)) {
                CHECK(cat.shared_ids().count(id) == 0);
                covered.insert(id);
            }
        }
        CHECK(covered.size() == cat.size());
    }
}

TEST_CASE("catalog rejects an inconsistent shared flag") {
    Concept k{0, "Clarity", "A high score indicates a; A low score indicates b.", {}, {"a"}, true};
    CHECK_THROWS_AS(ConceptCatalog({k}, {"a", "b", "c"}), ValidationError);
}

TEST_CASE("shared threshold") {
    CHECK(shared_threshold(8) == 4);
    CHECK(shared_threshold(1) == 1);
    CHECK(shared_threshold(3) == 2);
}

TEST_CASE("definition template") {
    CHECK(follows_definition_template("A high score indicates x; A low score indicates y."));
    CHECK(follows_definition_template("a high score indicates x. a low score indicates y"));
    CHECK_FALSE(follows_definition_template("Clarity matters."));
}

TEST_CASE("in-domain splits") {
    std::vector<std::size_t> usable(3200);
    std::iota(usable.begin(), usable.end(), std::size_t{0});
    auto seeds = default_seeds(25);
    auto plan = make_in_domain_splits(usable, seeds);
    REQUIRE(plan.splits.size() == 25);
    for (const auto& s : plan.splits) {
        CHECK(s.train.size() == 2800);
        CHECK(s.test.size() == 400);
        std::vector<std::size_t> both;
        std::set_intersection(s.train.begin(), s.train.end(), s.test.begin(), s.test.end(),
                              std::back_inserter(both));
        CHECK(both.empty());
    }
    auto again = make_in_domain_splits(usable, seeds);
    CHECK(again.splits[3].train == plan.splits[3].train);
    CHECK(again.splits[3].test == plan.splits[3].test);
    CHECK(plan.splits[0].test != plan.splits[1].test);

    std::vector<std::size_t> small(usable.begin(), usable.begin() + 1000);
    auto p2 = make_in_domain_splits(small, seeds, 800, 200);
    CHECK(p2.splits.size() == 25);

    try {
        make_in_domain_splits(small, seeds);
        FAIL("expected sizing error");
    } catch (const SizingError& e) {
        CHECK(e.available() == 1000);
    }
}

TEST_CASE("leave-one-out splits") {
    std::vector<std::size_t> domain_of;
    for (std::size_t d = 0; d < 8; ++d)
        for (int i = 0; i < 400; ++i) domain_of.push_back(d);
    std::vector<std::size_t> usable(domain_of.size());
    std::iota(usable.begin(), usable.end(), std::size_t{0});
    auto plan = make_leave_one_out_splits(usable, domain_of, 8, default_seeds(5));
    CHECK(plan.splits.size() == 40);
    for (const auto& s : plan.splits) {
        CHECK(s.train.size() == 2450);
        CHECK(s.test.size() == 400);
        for (std::size_t i : s.train) CHECK(domain_of[i] != *s.held_out_domain);
        for (std::size_t i : s.test) CHECK(domain_of[i] == *s.held_out_domain);
    }

    std::vector<std::size_t> two{0, 0, 1, 1};
    std::vector<std::size_t> all{0, 1, 2, 3};
    auto p2 = make_leave_one_out_splits(all, two, 2, default_seeds(1), 2);
    REQUIRE(p2.splits.size() == 2);
    CHECK(p2.splits[0].test == std::vector<std::size_t>{0, 1});
    CHECK(p2.splits[0].train == std::vector<std::size_t>{2, 3});

    CHECK_THROWS_AS(make_leave_one_out_splits(all, std::vector<std::size_t>(4, 0), 1, default_seeds(1), 2),
                    ConfigError);
}

TEST_CASE("kfold") {
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto folds = kfold(idx, 5, 3);
    REQUIRE(folds.size() == 5);
    std::multiset<std::size_t> seen;
    for (const auto& f : folds) {
        CHECK(f.validation.size() == 2);
        CHECK(f.train.size() == 8);
        seen.insert(f.validation.begin(), f.validation.end());
    }
    CHECK(seen == std::multiset<std::size_t>(idx.begin(), idx.end()));

    SUBCASE("mirror pairs share a fold") {
        std::vector<std::size_t> ids(40);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::vector<std::size_t> mirror(40);
        for (std::size_t i = 0; i < 40; ++i) mirror[i] = i ^ 1U;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            for (const auto& f : kfold(ids, 5, seed, mirror)) {
                for (std::size_t i : f.validation)
                    CHECK(std::binary_search(f.validation.begin(), f.validation.end(), mirror[i]));
            }
        }
    }
    CHECK_THROWS_AS(kfold(std::vector<std::size_t>{1, 2}, 5, 0), SizingError);
    CHECK_THROWS_AS(kfold(idx, 1, 0), ConfigError);
}
