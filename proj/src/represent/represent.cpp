#include "prefx/represent/represent.hpp"

#include "prefx/llm/json_extract.hpp"
#include "prefx/llm/template.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace prefx::represent {

using llm::Json;

namespace {

std::string lower_trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    const auto b = s.find_last_not_of(" \t\r\n");
    s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Finds a concept's entry in a reply object: exact name first, then ignoring
/// case and surrounding space.
const Json* entry_for(const Json& reply, const std::string& name) {
    if (!reply.is_object()) return nullptr;
    if (auto it = reply.find(name); it != reply.end()) return &*it;
    const auto wanted = lower_trim(name);
    for (const auto& [key, value] : reply.items())
        if (lower_trim(key) == wanted) return &value;
    return nullptr;
}

Json reply_object(const std::string& text) {
    auto j = llm::extract_json_block(text);
    if (!j.is_object()) throw ExtractionError("reply is not a JSON object", text);
    return j;
}

std::string definitions_block(const data::ConceptCatalog& catalog, std::span<const ConceptId> chunk) {
    std::string out;
    for (ConceptId id : chunk) {
        const auto& c = catalog.at(id);
        if (!out.empty()) out += '\n';
        out += "- " + c.name + ": " + c.definition;
    }
    return out;
}

std::string skeleton(const data::ConceptCatalog& catalog, std::span<const ConceptId> chunk, const std::string& value) {
    Json j = Json::object();
    for (ConceptId id : chunk) j[catalog.at(id).name] = value;
    return j.dump(4);
}

llm::ChatRequest request(std::string prompt, llm::Purpose tag, std::string template_id) {
    llm::ChatRequest r;
    r.prompt = std::move(prompt);
    r.tag = tag;
    r.template_id = std::move(template_id);
    return r;
}

std::string explanation_of(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object())
        for (const char* key : {"explanation", "Explanation", "reason"})
            if (v.contains(key) && v[key].is_string()) return v[key].get<std::string>();
    return v.dump();
}

/// One chunk reply read into (answer, explanation) per concept.
struct ChunkAnswer {
    std::optional<int> answer;
    std::string explanation;
};
using ChunkReply = std::map<ConceptId, ChunkAnswer>;

ChunkReply parse_chunk(const std::string& text, const data::ConceptCatalog& catalog, std::span<const ConceptId> chunk) {
    const auto j = reply_object(text);
    ChunkReply out;
    bool any = false;
    for (ConceptId id : chunk) {
        ChunkAnswer a;
        if (const Json* v = entry_for(j, catalog.at(id).name)) {
            a.answer = parse_final_answer(*v);
            a.explanation = explanation_of(*v);
            any = any || a.answer.has_value();
        }
        out[id] = std::move(a);
    }
    if (!any) throw ExtractionError("no readable answer for any concept in the chunk", text);
    return out;
}

// Batched stages shared by the single-triplet operations and represent_all.

std::vector<RelevanceSet> relevance_round(llm::Gateway& gateway, std::span<const data::Triplet* const> triplets,
                                          const data::ConceptCatalog& catalog) {
    std::vector<RelevanceSet> out(triplets.size());
    std::vector<std::vector<ConceptId>> candidates(triplets.size());
    std::vector<llm::ChatRequest> requests;
    std::vector<std::size_t> asked;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        out[i].triplet_id = triplets[i]->id;
        candidates[i] = catalog.candidates_for(triplets[i]->domain);
        if (candidates[i].empty()) continue;
        requests.push_back(relevance_request(*triplets[i], catalog));
        asked.push_back(i);
    }
    std::vector<std::string> errors;
    llm::complete_with_retry(
        gateway, std::move(requests),
        [&](std::size_t k, const std::string& text) {
            const auto i = asked[k];
            out[i].relevant = parse_relevance(text, catalog, candidates[i]);
        },
        &errors);
    for (std::size_t k = 0; k < asked.size(); ++k) {
        if (errors[k].empty()) continue;
        const auto i = asked[k];
        out[i].relevant = {candidates[i].begin(), candidates[i].end()};
        out[i].fail_open = true;
        spdlog::warn("represent: relevance for {} unreadable ({}); keeping all {} candidates", triplets[i]->id,
                     errors[k], candidates[i].size());
    }
    return out;
}

/// Every (triplet, chunk, variant) call of an annotation round. The variant is
/// the order (comp) or the response scored (score).
struct ChunkCall {
    std::size_t triplet;
    std::vector<ConceptId> chunk;
    int variant;
};

std::vector<std::optional<ChunkReply>> run_chunks(llm::Gateway& gateway, const std::vector<ChunkCall>& calls,
                                                  std::vector<llm::ChatRequest> requests,
                                                  const data::ConceptCatalog& catalog) {
    std::vector<std::optional<ChunkReply>> replies(calls.size());
    std::vector<std::string> errors;
    llm::complete_with_retry(
        gateway, std::move(requests),
        [&](std::size_t k, const std::string& text) { replies[k] = parse_chunk(text, catalog, calls[k].chunk); },
        &errors);
    for (std::size_t k = 0; k < calls.size(); ++k)
        if (!errors[k].empty()) {
            replies[k].reset();
            spdlog::warn("represent: annotation call failed after retry ({}); its concepts are set to 0", errors[k]);
        }
    return replies;
}

std::vector<std::vector<CompAnnotation>> comp_round(llm::Gateway& gateway,
                                                    std::span<const data::Triplet* const> triplets,
                                                    const data::ConceptCatalog& catalog,
                                                    const std::vector<std::set<ConceptId>>& relevant,
                                                    std::size_t chunk_size) {
    std::vector<ChunkCall> calls;
    std::vector<llm::ChatRequest> requests;
    for (std::size_t i = 0; i < triplets.size(); ++i)
        for (const auto& chunk : chunk_concepts(relevant[i], chunk_size))
            for (int swapped : {0, 1}) {
                requests.push_back(comp_request(*triplets[i], catalog, chunk, swapped != 0));
                calls.push_back({i, chunk, swapped});
            }
    const auto replies = run_chunks(gateway, calls, std::move(requests), catalog);

    std::vector<std::vector<CompAnnotation>> out(triplets.size());
    // Calls come in (original, swapped) pairs per chunk.
    for (std::size_t k = 0; k < calls.size(); k += 2) {
        const auto& orig = replies[k];
        const auto& swap = replies[k + 1];
        for (ConceptId id : calls[k].chunk) {
            CompAnnotation a;
            a.concept_id = id;
            auto read = [&](const std::optional<ChunkReply>& r, int& answer, std::string& why) {
                if (!r) {
                    a.flagged = true;
                    return;
                }
                const auto& ans = r->at(id);
                why = ans.explanation;
                if (!ans.answer || *ans.answer < 0 || *ans.answer > 2) {
                    a.flagged = true;
                    return;
                }
                answer = *ans.answer;
            };
            read(orig, a.original, a.explanation_original);
            read(swap, a.swapped, a.explanation_swapped);
            a.merged = a.flagged ? 0 : merge_comp(a.original, a.swapped);
            out[calls[k].triplet].push_back(std::move(a));
        }
    }
    return out;
}

std::vector<std::vector<ScoreAnnotation>> score_round(llm::Gateway& gateway,
                                                      std::span<const data::Triplet* const> triplets,
                                                      const data::ConceptCatalog& catalog,
                                                      const std::vector<std::set<ConceptId>>& relevant,
                                                      std::size_t chunk_size) {
    std::vector<ChunkCall> calls;
    std::vector<llm::ChatRequest> requests;
    for (std::size_t i = 0; i < triplets.size(); ++i)
        for (const auto& chunk : chunk_concepts(relevant[i], chunk_size))
            for (int response : {1, 2}) {
                requests.push_back(score_request(*triplets[i], catalog, chunk, response));
                calls.push_back({i, chunk, response});
            }
    const auto replies = run_chunks(gateway, calls, std::move(requests), catalog);

    std::vector<std::vector<ScoreAnnotation>> out(triplets.size());
    for (std::size_t k = 0; k < calls.size(); k += 2) {
        for (ConceptId id : calls[k].chunk) {
            ScoreAnnotation a;
            a.concept_id = id;
            auto read = [&](const std::optional<ChunkReply>& r, int& score, std::string& why) {
                if (!r) {
                    a.flagged = true;
                    return;
                }
                const auto& ans = r->at(id);
                why = ans.explanation;
                if (!ans.answer) {
                    a.flagged = true;
                    return;
                }
                score = std::clamp(*ans.answer, 0, 7);
                if (score != *ans.answer) a.flagged = true;
            };
            read(replies[k], a.score_1, a.explanation_1);
            read(replies[k + 1], a.score_2, a.explanation_2);
            a.value = score_value(a.score_1, a.score_2);
            out[calls[k].triplet].push_back(std::move(a));
        }
    }
    return out;
}

template <typename Annotation>
data::ConceptVector assemble(const data::Triplet& t, std::span<const Annotation> annotations,
                             data::RepresentationKind kind) {
    data::ConceptVector v;
    v.triplet_id = t.id;
    v.domain = t.domain;
    v.kind = kind;
    std::set<ConceptId> seen;
    for (const auto& a : annotations) {
        if (!seen.insert(a.concept_id).second)
            throw ValidationError("triplet " + t.id + ": concept " + std::to_string(a.concept_id) + " annotated twice");
        int value;
        if constexpr (std::is_same_v<Annotation, CompAnnotation>) value = a.merged;
        else value = a.value;
        if (value != 0) v.values[a.concept_id] = value;
    }
    return v;
}

}  // namespace

llm::ChatRequest relevance_request(const data::Triplet& t, const data::ConceptCatalog& catalog) {
    const auto candidates = catalog.candidates_for(t.domain);
    llm::TemplateVars v;
    v.set("USER_QUERY", t.query)
        .set("RESPONSE_1", t.response_1)
        .set("RESPONSE_2", t.response_2)
        .set("CONCEPTS", skeleton(catalog, candidates, "True or False"));
    return request(llm::render_asset("relevance.txt", v), llm::Purpose::relevance, "relevance");
}

std::set<ConceptId> parse_relevance(const std::string& reply, const data::ConceptCatalog& catalog,
                                    std::span<const ConceptId> candidates) {
    const auto j = reply_object(reply);
    std::set<ConceptId> out;
    for (ConceptId id : candidates) {
        const Json* v = entry_for(j, catalog.at(id).name);
        if (!v) continue;
        bool yes = false;
        if (v->is_boolean()) yes = v->get<bool>();
        else if (v->is_string()) yes = lower_trim(v->get<std::string>()) == "true";
        else if (v->is_number()) yes = v->get<double>() != 0.0;
        if (yes) out.insert(id);
    }
    return out;
}

RelevanceSet predict_relevant(llm::Gateway& gateway, const data::Triplet& t, const data::ConceptCatalog& catalog) {
    const data::Triplet* one[] = {&t};
    return relevance_round(gateway, one, catalog).front();
}

std::vector<std::vector<ConceptId>> chunk_concepts(const std::set<ConceptId>& ids, std::size_t chunk_size) {
    if (chunk_size == 0) throw ConfigError("chunk size must be positive");
    std::vector<std::vector<ConceptId>> out;
    for (ConceptId id : ids) {
        if (out.empty() || out.back().size() == chunk_size) out.emplace_back();
        out.back().push_back(id);
    }
    return out;
}

std::optional<int> parse_final_answer(const Json& value) {
    if (value.is_number_integer()) return value.get<int>();
    if (value.is_number()) {
        const double d = value.get<double>();
        if (d == static_cast<int>(d)) return static_cast<int>(d);
        return std::nullopt;
    }
    if (value.is_object()) {
        for (const char* key : {"final_answer", "final answer", "Final answer", "Final Answer", "answer", "score"})
            if (value.contains(key)) return parse_final_answer(value[key]);
        return std::nullopt;
    }
    if (!value.is_string()) return std::nullopt;
    static const std::regex marker(R"(final\s+answer\s*[:=]?\s*\**\s*(-?\d+))", std::regex::icase);
    const auto text = value.get<std::string>();
    std::optional<int> last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), marker); it != std::sregex_iterator(); ++it)
        last = std::stoi((*it)[1]);
    if (last) return last;
    static const std::regex bare(R"(^\s*(-?\d+)\s*$)");
    std::smatch m;
    if (std::regex_match(text, m, bare)) return std::stoi(m[1]);
    return std::nullopt;
}

int merge_comp(int original, int swapped) {
    if (original == 1 && swapped == 2) return 1;
    if (original == 2 && swapped == 1) return -1;
    return 0;
}

int score_value(int score_1, int score_2) { return score_1 == 0 || score_2 == 0 ? 0 : score_1 - score_2; }

llm::ChatRequest comp_request(const data::Triplet& t, const data::ConceptCatalog& catalog,
                              std::span<const ConceptId> chunk, bool swapped) {
    llm::TemplateVars v;
    v.set("CONCEPT_DEFINITIONS", definitions_block(catalog, chunk))
        .set("USER_QUERY", t.query)
        .set("RESPONSE_1", swapped ? t.response_2 : t.response_1)
        .set("RESPONSE_2", swapped ? t.response_1 : t.response_2)
        .set("CONCEPTS", skeleton(catalog, chunk, "<explanation>. Final answer: <0, 1, or 2>"));
    return request(llm::render_asset("comp.txt", v), llm::Purpose::comp, "comp");
}

llm::ChatRequest score_request(const data::Triplet& t, const data::ConceptCatalog& catalog,
                               std::span<const ConceptId> chunk, int response) {
    if (response != 1 && response != 2) throw ConfigError("score_request: response must be 1 or 2");
    llm::TemplateVars v;
    v.set("CONCEPT_DEFINITIONS", definitions_block(catalog, chunk))
        .set("USER_QUERY", t.query)
        .set("RESPONSE", response == 1 ? t.response_1 : t.response_2)
        .set("CONCEPTS", skeleton(catalog, chunk, "<explanation>. Final answer: <0 to 7>"));
    return request(llm::render_asset("score.txt", v), llm::Purpose::score, "score");
}

std::vector<CompAnnotation> comp_annotate(llm::Gateway& gateway, const data::Triplet& t,
                                          const data::ConceptCatalog& catalog, const std::set<ConceptId>& relevant,
                                          std::size_t chunk_size) {
    const data::Triplet* one[] = {&t};
    return comp_round(gateway, one, catalog, {relevant}, chunk_size).front();
}

std::vector<ScoreAnnotation> score_annotate(llm::Gateway& gateway, const data::Triplet& t,
                                            const data::ConceptCatalog& catalog, const std::set<ConceptId>& relevant,
                                            std::size_t chunk_size) {
    const data::Triplet* one[] = {&t};
    return score_round(gateway, one, catalog, {relevant}, chunk_size).front();
}

data::ConceptVector build_vector(const data::Triplet& t, std::span<const CompAnnotation> annotations) {
    return assemble(t, annotations, data::RepresentationKind::comp);
}

data::ConceptVector build_vector(const data::Triplet& t, std::span<const ScoreAnnotation> annotations) {
    return assemble(t, annotations, data::RepresentationKind::score);
}

namespace {

struct ResumeState {
    std::map<std::string, data::ConceptVector> done;
};

std::string manifest_header(const data::ConceptCatalog& catalog, data::RepresentationKind kind) {
    Json h;
    h["catalog"] = data::catalog_checksum(catalog);
    h["kind"] = data::to_string(kind);
    return h.dump();
}

/// Reads the manifest and the vectors it vouches for. Vector lines without a
/// manifest entry (an interrupted write) are ignored.
ResumeState load_resume(const RepresentOptions& options, const data::ConceptCatalog& catalog) {
    ResumeState state;
    if (options.manifest_path.empty() || !std::filesystem::exists(options.manifest_path)) return state;
    std::istringstream manifest(read_file(options.manifest_path));
    std::string line;
    if (!std::getline(manifest, line)) return state;
    if (line != manifest_header(catalog, options.kind))
        throw ValidationError("resume manifest " + options.manifest_path.string() +
                              " was written for another catalog or representation kind");
    std::set<std::string> ids;
    while (std::getline(manifest, line)) {
        try {
            ids.insert(Json::parse(line).at("id").get<std::string>());
        } catch (const std::exception&) {
            // a torn final line
        }
    }
    if (options.vectors_path.empty() || !std::filesystem::exists(options.vectors_path)) return state;
    std::istringstream vectors(read_file(options.vectors_path));
    while (std::getline(vectors, line)) {
        std::vector<data::ConceptVector> parsed;
        try {
            parsed = data::parse_vectors(line);
        } catch (const std::exception&) {
            continue;
        }
        for (auto& v : parsed)
            if (ids.count(v.triplet_id)) state.done[v.triplet_id] = std::move(v);
    }
    return state;
}

void append_lines(const std::filesystem::path& path, const std::string& text) {
    if (path.empty() || text.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("short write to " + path.string());
}

Json audit_record(const data::Triplet& t, const RelevanceSet& rel, const std::vector<CompAnnotation>& comp,
                  const std::vector<ScoreAnnotation>& score) {
    Json r;
    r["triplet_id"] = t.id;
    r["relevant"] = rel.relevant;
    r["fail_open"] = rel.fail_open;
    Json list = Json::array();
    for (const auto& a : comp)
        list.push_back({{"concept", a.concept_id},
                        {"original", a.original},
                        {"swapped", a.swapped},
                        {"merged", a.merged},
                        {"flagged", a.flagged},
                        {"explanation_original", a.explanation_original},
                        {"explanation_swapped", a.explanation_swapped}});
    for (const auto& a : score)
        list.push_back({{"concept", a.concept_id},
                        {"score_1", a.score_1},
                        {"score_2", a.score_2},
                        {"value", a.value},
                        {"flagged", a.flagged},
                        {"explanation_1", a.explanation_1},
                        {"explanation_2", a.explanation_2}});
    r["annotations"] = std::move(list);
    return r;
}

}  // namespace

RepresentResult represent_all(llm::Gateway& gateway, const data::PreferenceDataset& dataset,
                              std::span<const std::size_t> indices, const data::ConceptCatalog& catalog,
                              const RepresentOptions& options) {
    if (options.round_size == 0) throw ConfigError("represent: round size must be positive");
    if (options.manifest_path.empty() != options.vectors_path.empty())
        throw ConfigError("represent: a resume manifest needs a vectors file and vice versa");
    const auto& triplets = dataset.triplets();
    for (std::size_t i : indices)
        if (i >= triplets.size()) throw ValidationError("represent: index out of range");

    auto state = load_resume(options, catalog);
    if (!options.manifest_path.empty() && !std::filesystem::exists(options.manifest_path)) {
        if (!options.vectors_path.empty() && std::filesystem::exists(options.vectors_path))
            std::filesystem::remove(options.vectors_path);  // no manifest vouches for it
        append_lines(options.manifest_path, manifest_header(catalog, options.kind) + "\n");
    }

    RepresentResult result;
    auto& report = result.report;
    report.triplets = indices.size();

    std::vector<const data::Triplet*> todo;
    std::set<std::string> queued;
    for (std::size_t i : indices) {
        const auto& t = triplets[i];
        if (state.done.count(t.id)) {
            ++report.resumed;
        } else if (queued.insert(t.id).second) {
            todo.push_back(&t);
        }
    }

    if (options.max_new && todo.size() > options.max_new) {
        report.remaining = todo.size() - options.max_new;
        todo.resize(options.max_new);
    }

    std::map<std::string, data::ConceptVector> fresh;
    for (std::size_t start = 0; start < todo.size(); start += options.round_size) {
        const auto end = std::min(todo.size(), start + options.round_size);
        std::span<const data::Triplet* const> round(todo.data() + start, end - start);
        const auto relevance = relevance_round(gateway, round, catalog);
        std::vector<std::set<ConceptId>> relevant;
        for (const auto& r : relevance) relevant.push_back(r.relevant);

        std::vector<std::vector<CompAnnotation>> comp(round.size());
        std::vector<std::vector<ScoreAnnotation>> score(round.size());
        if (options.kind == data::RepresentationKind::comp)
            comp = comp_round(gateway, round, catalog, relevant, options.chunk_size);
        else
            score = score_round(gateway, round, catalog, relevant, options.chunk_size);

        std::string vector_lines, manifest_lines, audit_lines;
        for (std::size_t k = 0; k < round.size(); ++k) {
            const auto& t = *round[k];
            auto v = options.kind == data::RepresentationKind::comp
                         ? build_vector(t, std::span<const CompAnnotation>(comp[k]))
                         : build_vector(t, std::span<const ScoreAnnotation>(score[k]));
            data::validate(v, catalog);
            report.fail_open += relevance[k].fail_open ? 1 : 0;
            for (const auto& a : comp[k]) report.flagged_annotations += a.flagged ? 1 : 0;
            for (const auto& a : score[k]) report.flagged_annotations += a.flagged ? 1 : 0;
            vector_lines += data::serialize_vector(v) + "\n";
            manifest_lines += Json{{"id", t.id}}.dump() + "\n";
            if (!options.audit_path.empty())
                audit_lines += audit_record(t, relevance[k], comp[k], score[k]).dump() + "\n";
            fresh[t.id] = std::move(v);
        }
        // Vectors before the manifest: a crash in between only costs a re-annotation.
        append_lines(options.vectors_path, vector_lines);
        append_lines(options.manifest_path, manifest_lines);
        append_lines(options.audit_path, audit_lines);
        spdlog::info("represent: {}/{} triplets annotated", end, todo.size());
    }

    for (std::size_t i : indices) {
        const auto& id = triplets[i].id;
        const data::ConceptVector* v = nullptr;
        if (auto it = fresh.find(id); it != fresh.end()) v = &it->second;
        else if (auto jt = state.done.find(id); jt != state.done.end()) v = &jt->second;
        if (!v) continue;  // left for a later call
        report.nonzero_entries += v->values.size();
        result.vectors.push_back(*v);
    }
    return result;
}

}  // namespace prefx::represent
