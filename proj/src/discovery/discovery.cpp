#include "prefx/discovery/discovery.hpp"

#include "prefx/discovery/stemmer.hpp"
#include "prefx/llm/json_extract.hpp"
#include "prefx/llm/template.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/hash.hpp"
#include "prefx/util/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prefx::discovery {

using llm::Json;

void validate(const DiscoveryConfig& c) {
    if (c.batch_size < 1 || c.concepts_per_batch < 1 || c.batches_per_domain < 1)
        throw ConfigError("discovery: batch size, concepts per batch and batch count must be positive");
    if (c.tag_sample_fraction < 0.0 || c.tag_sample_fraction > 1.0 || c.diversity_prompt_fraction < 0.0 ||
        c.diversity_prompt_fraction > 1.0)
        throw ConfigError("discovery: fractions must lie in [0, 1]");
    if (c.max_tags < 1 || c.definitions_per_call < 1 || c.duplicate_pairs_per_call < 1)
        throw ConfigError("discovery: tag and call sizes must be positive");
}

std::vector<std::pair<std::string, std::string>> fixed_concepts() {
    static const auto cached = [] {
        const auto j = llm::extract_json_block(llm::prompt_asset("fixed_concepts.json"));
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [name, def] : j.items()) out.emplace_back(name, def.get<std::string>());
        return out;
    }();
    return cached;
}

namespace {

llm::ChatRequest make_request(std::string prompt, llm::Purpose tag, std::string template_id) {
    llm::ChatRequest r;
    r.prompt = std::move(prompt);
    r.tag = tag;
    r.template_id = std::move(template_id);
    return r;
}

std::vector<std::string> string_list(const Json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.is_object() || !j.contains(key) || !j[key].is_array()) return out;
    for (const auto& v : j[key])
        if (v.is_string()) out.push_back(v.get<std::string>());
    return out;
}

std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Reads a True/False verdict in any of the shapes models produce.
std::optional<bool> as_bool(const Json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const auto s = lower(trim(v.get<std::string>()));
        if (s == "true" || s == "yes") return true;
        if (s == "false" || s == "no") return false;
    }
    return std::nullopt;
}

}  // namespace

std::vector<std::string> top_tags(const std::map<std::string, std::size_t>& counts, std::size_t limit) {
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < items.size() && i < limit; ++i) out.push_back(items[i].first);
    return out;
}

TagVocabulary propose_tags(llm::Gateway& gateway, std::span<const std::string> queries, const DiscoveryConfig& config) {
    if (queries.empty()) throw ConfigError("propose_tags: empty query sample");
    std::vector<llm::ChatRequest> requests;
    for (std::size_t start = 0; start < queries.size(); start += config.batch_size) {
        const auto end = std::min(queries.size(), start + config.batch_size);
        std::string examples;
        for (std::size_t i = start; i < end; ++i)
            examples += (i > start ? "\n\n" : "") + std::string("User Query ") + std::to_string(i - start + 1) + ":\n" +
                        queries[i];
        llm::TemplateVars v;
        v.set("COUNT", std::to_string(end - start)).set("EXAMPLES", examples);
        requests.push_back(make_request(llm::render_asset("propose_tags.txt", v), llm::Purpose::discovery, "propose_tags"));
    }
    std::map<std::string, std::size_t> subdomains, tasks;
    const auto outcomes = gateway.complete_all(requests);
    for (std::size_t b = 0; b < outcomes.size(); ++b) {
        if (!outcomes[b].response)
            throw TransportError("propose_tags batch " + std::to_string(b) + ": " + outcomes[b].error);
        Json j;
        try {
            j = llm::extract_json_block(outcomes[b].response->text);
        } catch (const ExtractionError& e) {
            throw ExtractionError("propose_tags batch " + std::to_string(b) + ": " + e.what(), e.raw());
        }
        for (const auto& s : string_list(j, "domains"))
            if (auto t = lower(trim(s)); !t.empty() && t != lower(kNoTag)) ++subdomains[t];
        for (const auto& s : string_list(j, "tasks"))
            if (auto t = lower(trim(s)); !t.empty() && t != lower(kNoTag)) ++tasks[t];
    }
    return {top_tags(subdomains, config.max_tags), top_tags(tasks, config.max_tags)};
}

QueryTags parse_query_tags(const std::string& reply, const TagVocabulary& vocab) {
    const auto j = llm::extract_json_block(reply);
    QueryTags tags;
    auto keep = [](const std::vector<std::string>& answers, const std::vector<std::string>& allowed,
                   std::set<std::string>& into) {
        for (const auto& a : answers) {
            const auto t = lower(trim(a));
            if (t == lower(kNoTag)) continue;
            if (std::find(allowed.begin(), allowed.end(), t) != allowed.end()) into.insert(t);
            else spdlog::info("discovery: dropping tag '{}' outside the vocabulary", a);
        }
    };
    keep(string_list(j, "domains"), vocab.subdomains, tags.subdomains);
    keep(string_list(j, "tasks"), vocab.tasks, tags.tasks);
    return tags;
}

namespace {

llm::ChatRequest annotate_request(const std::string& query, const TagVocabulary& vocab) {
    llm::TemplateVars v;
    v.set("DOMAINS", Json(vocab.subdomains).dump()).set("TASKS", Json(vocab.tasks).dump()).set("USER_QUERY", query);
    return make_request(llm::render_asset("annotate_tags.txt", v), llm::Purpose::discovery, "annotate_tags");
}

}  // namespace

QueryTags annotate_query_tags(llm::Gateway& gateway, const std::string& query, const TagVocabulary& vocab) {
    if (vocab.subdomains.empty() && vocab.tasks.empty()) throw ConfigError("annotate_query_tags: empty vocabulary");
    return parse_query_tags(gateway.complete(annotate_request(query, vocab)).text, vocab);
}

std::map<TagPair, std::vector<std::size_t>> tag_pools(const std::vector<QueryTags>& tags) {
    std::map<TagPair, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < tags.size(); ++i)
        for (const auto& s : tags[i].subdomains)
            for (const auto& t : tags[i].tasks) pools[{s, t}].push_back(i);
    return pools;
}

std::vector<Batch> build_batches(const std::map<TagPair, std::vector<std::size_t>>& pools,
                                 const DiscoveryConfig& config, std::uint64_t seed) {
    std::vector<const std::pair<const TagPair, std::vector<std::size_t>>*> eligible;
    std::vector<double> weights;
    for (const auto& entry : pools)
        if (entry.second.size() >= config.batch_size) {
            eligible.push_back(&entry);
            weights.push_back(static_cast<double>(entry.second.size()));
        }
    if (eligible.empty())
        throw ConfigError("build_batches: no (subdomain, task) pool holds " + std::to_string(config.batch_size) +
                          " triplets");
    Rng rng(seed);
    std::vector<Batch> batches;
    batches.reserve(config.batches_per_domain);
    for (std::size_t b = 0; b < config.batches_per_domain; ++b) {
        const auto& [pair, pool] = *eligible[weighted_index(rng, weights)];
        Batch batch{pair, {}};
        for (std::size_t k : sample_without_replacement(rng, pool.size(), config.batch_size))
            batch.members.push_back(pool[k]);
        batches.push_back(std::move(batch));
    }
    return batches;
}

DiscoveryPrompt build_discovery_prompt(std::span<const data::Triplet* const> members, const TagPair& pair,
                                       const DiscoveryConfig& config, std::uint64_t variant_seed) {
    Rng rng(variant_seed);
    DiscoveryPrompt out;
    out.framing = static_cast<Framing>(uniform_index(rng, 3));
    out.diverse = uniform_unit(rng) < config.diversity_prompt_fraction;

    const char* kind = "";
    const char* reason = "";
    switch (out.framing) {
        case Framing::chosen_vs_rejected:
            kind = "a user query and two responses. One of the responses was chosen by the user, and the other was rejected";
            reason = "preferred the chosen response over the rejected response";
            break;
        case Framing::chosen_only:
            kind = "a user query and a response that was chosen by the user";
            reason = "chose the response";
            break;
        case Framing::rejected_only:
            kind = "a user query and a response that was rejected by the user";
            reason = "rejected the response";
            break;
    }

    std::string batch;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& t = *members[i];
        const auto label = t.label(config.label_source);
        if (!label || *label == 0)
            throw ValidationError("discovery: triplet " + t.id + " has no decided '" + config.label_source + "' label");
        const auto& chosen = *label == 1 ? t.response_1 : t.response_2;
        const auto& rejected = *label == 1 ? t.response_2 : t.response_1;
        batch += (i ? "\n\n" : "") + std::string("Example ") + std::to_string(i + 1) + ":\nUser Query:\n" + t.query;
        if (out.framing != Framing::rejected_only) batch += "\n\nChosen Response:\n" + chosen;
        if (out.framing != Framing::chosen_only) batch += "\n\nRejected Response:\n" + rejected;
    }

    std::string focus;
    const bool has_sub = pair.first != kNoTag, has_task = pair.second != kNoTag;
    if (has_sub) focus = "the subdomain of all examples is " + pair.first;
    if (has_sub && has_task) focus += ", and ";
    if (has_task) focus += "the NLP task conveyed in all user queries is " + pair.second;

    std::string fixed;
    for (const auto& [name, def] : fixed_concepts()) fixed += "- " + name + ": " + def + "\n";
    fixed.pop_back();

    llm::TemplateVars v;
    v.set("COUNT", std::to_string(members.size()))
        .set("EXAMPLE_KIND", kind)
        .set("N_CONCEPTS", std::to_string(config.concepts_per_batch))
        .set("REASON", reason)
        .set("FIXED_CONCEPTS", fixed)
        .set("BATCH", batch)
        .flag("focus", !focus.empty())
        .flag("diverse", out.diverse);
    if (!focus.empty()) v.set("FOCUS", focus);
    out.request = make_request(llm::render_asset("discover.txt", v), llm::Purpose::discovery, "discover");
    return out;
}

std::vector<CandidateConcept> parse_candidates(const std::string& reply, const DiscoveryPrompt& prompt,
                                               const data::DomainId& domain, std::size_t batch,
                                               const DiscoveryConfig& config) {
    const auto j = llm::extract_json_block(reply);
    if (!j.is_object()) throw ExtractionError("discovery reply is not a JSON object", reply);
    std::set<std::string> fixed_names;
    for (const auto& [name, def] : fixed_concepts()) fixed_names.insert(lower(name));
    std::vector<CandidateConcept> out;
    for (const auto& [key, value] : j.items()) {
        if (out.size() >= config.concepts_per_batch) break;
        auto name = trim(key);
        if (name.empty() || !value.is_string()) continue;
        CandidateConcept c;
        c.name = name;
        c.description = trim(value.get<std::string>());
        c.domain = domain;
        c.batch = batch;
        c.framing = prompt.framing;
        c.diverse_prompt = prompt.diverse;
        c.names_fixed_concept = prompt.diverse && fixed_names.count(lower(name)) > 0;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<DraftConcept> aggregate_candidates(const std::vector<CandidateConcept>& candidates,
                                               const std::vector<data::DomainId>& domains) {
    std::vector<DraftConcept> drafts;
    std::map<std::string, std::size_t> by_name;
    for (const auto& [name, def] : fixed_concepts()) {
        DraftConcept d;
        d.name = name;
        d.definition = def;
        d.domains_found.insert(domains.begin(), domains.end());
        d.fixed = true;
        by_name[name] = drafts.size();
        drafts.push_back(std::move(d));
    }
    std::set<std::tuple<std::string, data::DomainId, std::size_t>> counted;
    for (const auto& c : candidates) {
        auto [it, inserted] = by_name.try_emplace(c.name, drafts.size());
        if (inserted) drafts.push_back({c.name, "", {}, {}, 0, false});
        auto& d = drafts[it->second];
        d.domains_found.insert(c.domain);
        if (counted.insert({c.name, c.domain, c.batch}).second) ++d.batches;
        if (!c.description.empty() && d.descriptions.size() < data::kMaxDescriptions &&
            std::find(d.descriptions.begin(), d.descriptions.end(), c.description) == d.descriptions.end())
            d.descriptions.push_back(c.description);
    }
    return drafts;
}

std::vector<std::pair<std::size_t, std::size_t>> flag_duplicates(const std::vector<std::string>& names) {
    std::vector<std::set<std::string>> stems;
    stems.reserve(names.size());
    for (const auto& n : names) stems.push_back(name_stems(n));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            const bool shared = std::any_of(stems[i].begin(), stems[i].end(),
                                            [&](const std::string& s) { return stems[j].count(s) > 0; });
            if (shared) pairs.emplace_back(i, j);
        }
    return pairs;
}

namespace {

std::string pair_key(const DraftConcept& a, const DraftConcept& b) { return a.name + " | " + b.name; }

std::string summary_line(const DraftConcept& d) {
    const std::string text = !d.definition.empty() ? d.definition : !d.descriptions.empty() ? d.descriptions.front() : "";
    return "- " + d.name + ": " + (text.empty() ? "(no description)" : text);
}

}  // namespace

std::vector<bool> adjudicate_pairs(llm::Gateway& gateway, const std::vector<DraftConcept>& drafts,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                   const DiscoveryConfig& config) {
    std::vector<bool> verdicts(pairs.size(), false);
    std::vector<llm::ChatRequest> requests;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [first, last) into pairs
    for (std::size_t start = 0; start < pairs.size(); start += config.duplicate_pairs_per_call) {
        const auto end = std::min(pairs.size(), start + config.duplicate_pairs_per_call);
        Json skeleton = Json::object();
        std::set<std::size_t> involved;
        for (std::size_t k = start; k < end; ++k) {
            skeleton[pair_key(drafts[pairs[k].first], drafts[pairs[k].second])] = "True or False";
            involved.insert(pairs[k].first);
            involved.insert(pairs[k].second);
        }
        std::string defs;
        for (std::size_t i : involved) defs += summary_line(drafts[i]) + "\n";
        defs.pop_back();
        llm::TemplateVars v;
        v.set("DEFINITIONS", defs).set("PAIRS", skeleton.dump(4));
        requests.push_back(make_request(llm::render_asset("duplicates.txt", v), llm::Purpose::discovery, "duplicates"));
        spans.emplace_back(start, end);
    }
    const auto outcomes = gateway.complete_all(requests);
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        if (!outcomes[r].response) {
            spdlog::warn("discovery: duplicate check {} failed ({}); keeping its pairs apart", r, outcomes[r].error);
            continue;
        }
        Json j;
        try {
            j = llm::extract_json_block(outcomes[r].response->text);
        } catch (const ExtractionError&) {
            spdlog::warn("discovery: unparseable duplicate verdicts in call {}; keeping its pairs apart", r);
            continue;
        }
        for (std::size_t k = spans[r].first; k < spans[r].second; ++k) {
            const auto key = pair_key(drafts[pairs[k].first], drafts[pairs[k].second]);
            if (j.is_object() && j.contains(key))
                if (auto b = as_bool(j[key])) verdicts[k] = *b;
        }
    }
    return verdicts;
}

std::vector<DraftConcept> merge_duplicates(const std::vector<DraftConcept>& drafts,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                           const std::vector<bool>& verdicts) {
    if (pairs.size() != verdicts.size()) throw ValidationError("merge_duplicates: one verdict per pair required");
    std::vector<std::size_t> parent(drafts.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (verdicts[k]) {
            const auto a = find(pairs[k].first), b = find(pairs[k].second);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }

    auto better = [&](std::size_t a, std::size_t b) {
        const auto& x = drafts[a];
        const auto& y = drafts[b];
        if (x.domains_found.size() != y.domains_found.size()) return x.domains_found.size() > y.domains_found.size();
        if (x.batches != y.batches) return x.batches > y.batches;
        if (x.fixed != y.fixed) return x.fixed;
        return a < b;
    };
    std::map<std::size_t, std::vector<std::size_t>> components;
    for (std::size_t i = 0; i < drafts.size(); ++i) components[find(i)].push_back(i);

    std::vector<std::pair<std::size_t, DraftConcept>> kept;  // (first member, merged)
    for (const auto& [root, members] : components) {
        std::size_t rep = members.front();
        for (std::size_t m : members)
            if (better(m, rep)) rep = m;
        DraftConcept merged = drafts[rep];
        for (std::size_t m : members) {
            if (m == rep) continue;
            merged.domains_found.insert(drafts[m].domains_found.begin(), drafts[m].domains_found.end());
            merged.batches += drafts[m].batches;
            for (const auto& d : drafts[m].descriptions)
                if (merged.descriptions.size() < data::kMaxDescriptions &&
                    std::find(merged.descriptions.begin(), merged.descriptions.end(), d) == merged.descriptions.end())
                    merged.descriptions.push_back(d);
        }
        kept.emplace_back(members.front(), std::move(merged));
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<DraftConcept> out;
    for (auto& [first, d] : kept) out.push_back(std::move(d));
    return out;
}

std::string stub_definition(const std::string& name) {
    const auto l = lower(name);
    return "A high score indicates the response demonstrates " + l + "; A low score indicates the response lacks " + l +
           ".";
}

std::vector<std::string> define_concepts(llm::Gateway& gateway, std::vector<DraftConcept>& drafts,
                                         const DiscoveryConfig& config) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < drafts.size(); ++i)
        if (drafts[i].definition.empty()) todo.push_back(i);

    std::vector<std::vector<std::size_t>> groups;
    std::vector<llm::ChatRequest> requests;
    for (std::size_t start = 0; start < todo.size(); start += config.definitions_per_call) {
        std::vector<std::size_t> group(todo.begin() + static_cast<std::ptrdiff_t>(start),
                                       todo.begin() + static_cast<std::ptrdiff_t>(std::min(todo.size(), start + config.definitions_per_call)));
        Json descriptions = Json::object(), skeleton = Json::object();
        for (std::size_t i : group) {
            descriptions[drafts[i].name] = drafts[i].descriptions;
            skeleton[drafts[i].name] = "A high score indicates...; A low score indicates...";
        }
        llm::TemplateVars v;
        v.set("DESCRIPTIONS", descriptions.dump(4)).set("CONCEPTS", skeleton.dump(4));
        requests.push_back(make_request(llm::render_asset("define.txt", v), llm::Purpose::discovery, "define"));
        groups.push_back(std::move(group));
    }

    // A reply is acceptable when every definition in it follows the template;
    // otherwise it is retried once and its usable parts are kept.
    std::vector<std::map<std::string, std::string>> parsed(groups.size());
    auto parse = [&](std::size_t r, const std::string& text) {
        const auto j = llm::extract_json_block(text);
        std::map<std::string, std::string> found;
        bool conforming = true;
        for (std::size_t i : groups[r]) {
            const auto& name = drafts[i].name;
            if (j.is_object() && j.contains(name) && j[name].is_string()) {
                found[name] = trim(j[name].get<std::string>());
                conforming = conforming && data::follows_definition_template(found[name]);
            } else {
                conforming = false;
            }
        }
        if (found.size() >= parsed[r].size()) parsed[r] = std::move(found);
        if (!conforming) throw ValidationError("definitions do not follow the template");
    };
    llm::complete_with_retry(gateway, requests, parse);

    std::vector<std::string> warnings;
    for (std::size_t r = 0; r < groups.size(); ++r)
        for (std::size_t i : groups[r]) {
            auto& d = drafts[i];
            auto it = parsed[r].find(d.name);
            if (it == parsed[r].end() || it->second.empty()) {
                d.definition = stub_definition(d.name);
                warnings.push_back(d.name);
                spdlog::warn("discovery: no definition for '{}'; using a stub", d.name);
            } else {
                d.definition = it->second;
                if (!data::follows_definition_template(d.definition)) {
                    warnings.push_back(d.name);
                    spdlog::warn("discovery: definition of '{}' does not follow the template", d.name);
                }
            }
        }
    return warnings;
}

data::ConceptCatalog classify_shared(const std::vector<DraftConcept>& drafts, const std::vector<data::DomainId>& domains) {
    std::vector<const DraftConcept*> order;
    for (const auto& d : drafts) order.push_back(&d);
    std::stable_sort(order.begin(), order.end(), [](const DraftConcept* a, const DraftConcept* b) {
        if (a->fixed != b->fixed) return a->fixed;
        if (a->fixed) return false;  // keep the bundled order
        return a->name < b->name;
    });
    const auto threshold = data::shared_threshold(domains.size());
    std::vector<data::Concept> concepts;
    for (const auto* d : order) {
        data::Concept c;
        c.id = static_cast<data::ConceptId>(concepts.size());
        c.name = d->name;
        c.definition = d->definition;
        c.descriptions = d->descriptions;
        c.domains_found = d->domains_found;
        c.is_shared = c.domains_found.size() >= threshold;
        concepts.push_back(std::move(c));
    }
    return data::ConceptCatalog(std::move(concepts), domains);
}

DiscoveryResult run_discovery(llm::Gateway& gateway, const data::PreferenceDataset& dataset,
                              std::span<const std::size_t> indices, const DiscoveryConfig& config) {
    validate(config);
    DiscoveryResult result;
    auto& report = result.report;
    const auto& triplets = dataset.triplets();
    std::vector<CandidateConcept> candidates;
    std::vector<data::DomainId> domains;

    for (std::size_t d = 0; d < dataset.domain_count(); ++d) {
        const auto& domain = dataset.domains()[d];
        std::vector<const data::Triplet*> members;
        for (std::size_t i : indices) {
            if (i >= triplets.size()) throw ValidationError("discovery: index out of range");
            const auto& t = triplets[i];
            const auto label = t.label(config.label_source);
            if (t.domain == domain && label && *label != 0) members.push_back(&t);
        }
        if (members.empty()) {
            spdlog::warn("discovery: domain '{}' has no decided '{}' labels; skipped", domain, config.label_source);
            continue;
        }
        domains.push_back(domain);

        // Tags: reuse dataset tags when every member has them, else ask.
        std::vector<QueryTags> tags(members.size());
        TagVocabulary vocab;
        const bool pretagged = std::all_of(members.begin(), members.end(), [](auto* t) { return !t->tags.empty(); });
        if (pretagged) {
            std::map<std::string, std::size_t> subs, tasks;
            for (std::size_t k = 0; k < members.size(); ++k)
                for (const auto& tag : members[k]->tags) {
                    if (!tag.subdomain.empty() && tag.subdomain != kNoTag) {
                        tags[k].subdomains.insert(tag.subdomain);
                        ++subs[tag.subdomain];
                    }
                    if (!tag.task.empty() && tag.task != kNoTag) {
                        tags[k].tasks.insert(tag.task);
                        ++tasks[tag.task];
                    }
                }
            vocab = {top_tags(subs, config.max_tags), top_tags(tasks, config.max_tags)};
        } else {
            Rng rng(mix_seed(config.seed, 2 * d));
            const auto n = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(config.tag_sample_fraction * static_cast<double>(members.size()))));
            std::vector<std::string> sample;
            for (std::size_t k : sample_without_replacement(rng, members.size(), std::min(n, members.size())))
                sample.push_back(members[k]->query);
            vocab = propose_tags(gateway, sample, config);
            if (!vocab.subdomains.empty() || !vocab.tasks.empty()) {
                std::vector<llm::ChatRequest> requests;
                for (const auto* t : members) requests.push_back(annotate_request(t->query, vocab));
                std::vector<std::string> errors;
                const auto replies = llm::complete_with_retry(
                    gateway, requests, [&](std::size_t k, const std::string& text) { tags[k] = parse_query_tags(text, vocab); },
                    &errors);
                for (std::size_t k = 0; k < replies.size(); ++k)
                    if (!replies[k]) spdlog::warn("discovery: tagging {} failed ({}); using None tags", members[k]->id, errors[k]);
            }
        }
        report.vocabularies[domain] = vocab;

        const auto batches = build_batches(tag_pools(tags), config, mix_seed(config.seed, 2 * d + 1));
        std::vector<DiscoveryPrompt> prompts;
        std::vector<llm::ChatRequest> requests;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<const data::Triplet*> batch_members;
            for (std::size_t k : batches[b].members) batch_members.push_back(members[k]);
            prompts.push_back(build_discovery_prompt(batch_members, batches[b].pair, config,
                                                     mix_seed(mix_seed(config.seed, d), b)));
            requests.push_back(prompts.back().request);
        }
        std::vector<std::vector<CandidateConcept>> parsed(batches.size());
        std::vector<std::string> errors;
        const auto replies = llm::complete_with_retry(
            gateway, requests,
            [&](std::size_t b, const std::string& text) { parsed[b] = parse_candidates(text, prompts[b], domain, b, config); },
            &errors);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            BatchStatus status{domain, b, parsed[b].size(), replies[b] ? "" : errors[b]};
            if (replies[b] && parsed[b].empty()) {
                status.error = "no concepts parsed";
                spdlog::warn("discovery: batch {} of '{}' produced no concepts; skipped", b, domain);
            }
            report.batches.push_back(status);
            report.raw_replies.push_back(replies[b].value_or(""));
            candidates.insert(candidates.end(), parsed[b].begin(), parsed[b].end());
        }
    }

    const bool any_ok = std::any_of(report.batches.begin(), report.batches.end(),
                                    [](const BatchStatus& s) { return s.error.empty(); });
    if (!any_ok) {
        std::string detail;
        for (const auto& s : report.batches)
            if (detail.size() < 2000) detail += "\n  " + s.domain + "#" + std::to_string(s.batch) + ": " + s.error;
        throw TransportError("discovery: every batch failed" + detail);
    }

    report.candidates = candidates.size();
    auto drafts = aggregate_candidates(candidates, domains);
    report.distinct_names = drafts.size();
    std::vector<std::string> names;
    for (const auto& d : drafts) names.push_back(d.name);
    const auto pairs = flag_duplicates(names);
    report.flagged_pairs = pairs.size();
    const auto verdicts = adjudicate_pairs(gateway, drafts, pairs, config);
    report.merged_pairs = static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), true));
    drafts = merge_duplicates(drafts, pairs, verdicts);
    report.definition_warnings = define_concepts(gateway, drafts, config);
    result.catalog = classify_shared(drafts, domains);
    report.shared = result.catalog.shared_ids().size();
    report.specific = result.catalog.size() - report.shared;
    return result;
}

}  // namespace prefx::discovery
