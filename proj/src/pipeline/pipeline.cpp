#include "prefx/pipeline/pipeline.hpp"

#include "prefx/explain/applications.hpp"
#include "prefx/hmdr/trainer.hpp"
#include "prefx/llm/template.hpp"
#include "prefx/represent/represent.hpp"
#include "prefx/selection/cross_validation.hpp"
#include "prefx/selection/evaluation.hpp"
#include "prefx/selection/grid.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/hash.hpp"
#include "prefx/util/random.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace prefx::pipeline {

namespace {

// ---------------------------------------------------------------- config

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
}

std::string kind_name(data::RepresentationKind k) { return data::to_string(k); }

}  // namespace

PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir) {
    reject_unknown(j,
                   {"dataset", "catalog", "output_dir", "seed", "gateway", "discovery", "representation", "mechanisms",
                    "variant", "cv_folds", "evaluation", "applications"},
                   "config");
    PipelineConfig c;
    if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' path");
    c.dataset = resolve(base_dir, get_or<std::string>(j, "dataset", ""));
    c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "out"));
    c.catalog = j.contains("catalog") ? resolve(base_dir, get_or<std::string>(j, "catalog", "")) : fs::path();
    c.seed = get_or<std::uint64_t>(j, "seed", 0);

    nlohmann::json gateway = j.value("gateway", nlohmann::json::object());
    const bool explicit_cache = gateway.contains("cache_dir");
    c.gateway = llm::parse_gateway_config(gateway);
    c.gateway.cache_dir = explicit_cache ? resolve(base_dir, c.gateway.cache_dir) : fs::path();
    c.gateway.mock_script = resolve(base_dir, c.gateway.mock_script);
    if (!explicit_cache) c.gateway.cache_dir = "<output>/cache";  // placed once output_dir is final

    if (j.contains("discovery")) {
        const auto& d = j["discovery"];
        reject_unknown(d,
                       {"per_domain", "batch_size", "concepts_per_batch", "batches_per_domain", "tag_sample_fraction",
                        "max_tags", "diversity_prompt_fraction", "definitions_per_call", "duplicate_pairs_per_call",
                        "label_source"},
                       "discovery");
        auto& dc = c.discovery;
        c.discovery_per_domain = get_or(d, "per_domain", c.discovery_per_domain);
        dc.batch_size = get_or(d, "batch_size", dc.batch_size);
        dc.concepts_per_batch = get_or(d, "concepts_per_batch", dc.concepts_per_batch);
        dc.batches_per_domain = get_or(d, "batches_per_domain", dc.batches_per_domain);
        dc.tag_sample_fraction = get_or(d, "tag_sample_fraction", dc.tag_sample_fraction);
        dc.max_tags = get_or(d, "max_tags", dc.max_tags);
        dc.diversity_prompt_fraction = get_or(d, "diversity_prompt_fraction", dc.diversity_prompt_fraction);
        dc.definitions_per_call = get_or(d, "definitions_per_call", dc.definitions_per_call);
        dc.duplicate_pairs_per_call = get_or(d, "duplicate_pairs_per_call", dc.duplicate_pairs_per_call);
        dc.label_source = get_or(d, "label_source", dc.label_source);
    }
    if (j.contains("representation")) {
        const auto& r = j["representation"];
        reject_unknown(r, {"kinds", "chunk_size", "round_size", "max_new_triplets"}, "representation");
        if (r.contains("kinds")) {
            c.kinds.clear();
            for (const auto& k : get_or<std::vector<std::string>>(r, "kinds", {}))
                c.kinds.push_back(data::parse_representation_kind(k));
        }
        c.chunk_size = get_or(r, "chunk_size", c.chunk_size);
        c.round_size = get_or(r, "round_size", c.round_size);
        c.max_new_triplets = get_or(r, "max_new_triplets", c.max_new_triplets);
    }
    c.mechanisms = get_or(j, "mechanisms", c.mechanisms);
    c.variant = hmdr::parse_variant(get_or<std::string>(j, "variant", "hmdr"));
    c.cv_folds = get_or(j, "cv_folds", c.cv_folds);
    if (j.contains("evaluation")) {
        const auto& e = j["evaluation"];
        reject_unknown(e,
                       {"protocols", "variants", "seeds", "train_size", "test_size", "loo_seeds", "loo_train_size",
                        "folds", "threads"},
                       "evaluation");
        auto& ec = c.evaluation;
        ec.protocols = get_or(e, "protocols", ec.protocols);
        for (const auto& v : get_or<std::vector<std::string>>(e, "variants", {}))
            ec.variants.push_back(hmdr::parse_variant(v));
        ec.seeds = get_or(e, "seeds", ec.seeds);
        ec.train_size = get_or(e, "train_size", ec.train_size);
        ec.test_size = get_or(e, "test_size", ec.test_size);
        ec.loo_seeds = get_or(e, "loo_seeds", ec.loo_seeds);
        ec.loo_train_size = get_or(e, "loo_train_size", ec.loo_train_size);
        ec.folds = get_or(e, "folds", ec.folds);
        ec.threads = get_or(e, "threads", ec.threads);
        for (const auto& p : ec.protocols)
            if (p != "in_domain" && p != "leave_one_out")
                throw ConfigError("unknown protocol '" + p + "' (expected in_domain or leave_one_out)");
    }
    if (j.contains("applications")) {
        const auto& a = j["applications"];
        reject_unknown(a, {"judge", "reference", "top_k", "mode", "cot", "hack_queries"}, "applications");
        auto& ac = c.applications;
        ac.judge = get_or(a, "judge", ac.judge);
        ac.reference = get_or(a, "reference", ac.reference);
        ac.top_k = get_or(a, "top_k", ac.top_k);
        ac.mode = explain::parse_top_k_mode(get_or<std::string>(a, "mode", "diff"));
        ac.cot = get_or(a, "cot", ac.cot);
        ac.hack_queries = get_or(a, "hack_queries", ac.hack_queries);
    }

    if (c.kinds.empty()) throw ConfigError("representation.kinds is empty");
    if (c.mechanisms.empty()) throw ConfigError("mechanisms is empty");
    if (c.chunk_size == 0 || c.round_size == 0) throw ConfigError("chunk_size and round_size must be positive");
    if (c.cv_folds < 2 || c.evaluation.folds < 2) throw ConfigError("folds must be at least 2");
    discovery::validate(c.discovery);
    llm::validate(c.gateway);
    apply(c, {});
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw InputError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

void apply(PipelineConfig& c, const Overrides& o) {
    const bool default_catalog = c.catalog.empty() || c.catalog == c.output_dir / "catalog.json";
    const bool default_cache = c.gateway.cache_dir == "<output>/cache" || c.gateway.cache_dir == c.output_dir / "cache";
    if (o.seed) c.seed = *o.seed;
    if (o.output_dir) c.output_dir = fs::absolute(*o.output_dir).lexically_normal();
    if (o.mock) c.gateway.backend = llm::BackendKind::mock;
    if (default_catalog) c.catalog = c.output_dir / "catalog.json";
    if (default_cache) c.gateway.cache_dir = c.output_dir / "cache";
    c.discovery.seed = c.seed;
}

Json to_json(const PipelineConfig& c) {
    Json j;
    j["dataset"] = c.dataset.string();
    j["catalog"] = c.catalog.string();
    j["output_dir"] = c.output_dir.string();
    j["seed"] = c.seed;
    j["gateway"] = llm::to_json(c.gateway);
    const auto& d = c.discovery;
    j["discovery"] = {{"per_domain", c.discovery_per_domain},
                      {"batch_size", d.batch_size},
                      {"concepts_per_batch", d.concepts_per_batch},
                      {"batches_per_domain", d.batches_per_domain},
                      {"tag_sample_fraction", d.tag_sample_fraction},
                      {"max_tags", d.max_tags},
                      {"diversity_prompt_fraction", d.diversity_prompt_fraction},
                      {"definitions_per_call", d.definitions_per_call},
                      {"duplicate_pairs_per_call", d.duplicate_pairs_per_call},
                      {"label_source", d.label_source}};
    Json kinds = Json::array();
    for (auto k : c.kinds) kinds.push_back(kind_name(k));
    j["representation"] = {{"kinds", kinds},
                           {"chunk_size", c.chunk_size},
                           {"round_size", c.round_size},
                           {"max_new_triplets", c.max_new_triplets}};
    j["mechanisms"] = c.mechanisms;
    j["variant"] = hmdr::to_string(c.variant);
    j["cv_folds"] = c.cv_folds;
    const auto& e = c.evaluation;
    Json variants = Json::array();
    for (auto v : e.variants) variants.push_back(hmdr::to_string(v));
    j["evaluation"] = {{"protocols", e.protocols},   {"variants", variants},
                       {"seeds", e.seeds},           {"train_size", e.train_size},
                       {"test_size", e.test_size},   {"loo_seeds", e.loo_seeds},
                       {"loo_train_size", e.loo_train_size}, {"folds", e.folds},
                       {"threads", e.threads}};
    const auto& a = c.applications;
    j["applications"] = {{"judge", a.judge},
                         {"reference", a.reference},
                         {"top_k", a.top_k},
                         {"mode", a.mode == explain::TopKMode::diff ? "diff" : "self"},
                         {"cot", a.cot},
                         {"hack_queries", a.hack_queries}};
    return j;
}

Partition partition(const data::PreferenceDataset& dataset, std::size_t per_domain, std::uint64_t seed) {
    std::map<data::DomainId, std::vector<std::size_t>> by_domain;
    const auto& ts = dataset.triplets();
    for (std::size_t i = 0; i < ts.size(); ++i) by_domain[ts[i].domain].push_back(i);
    Partition p;
    for (auto& [domain, members] : by_domain) {
        Rng rng(mix_seed(seed, dataset.domain_index(domain)));
        auto order = members;
        shuffle(order, rng);
        const auto cut = std::min(per_domain, order.size());
        p.discovery.insert(p.discovery.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
        p.modeling.insert(p.modeling.end(), order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    }
    std::sort(p.discovery.begin(), p.discovery.end());
    std::sort(p.modeling.begin(), p.modeling.end());
    return p;
}

fs::path vectors_path(const PipelineConfig& c, data::RepresentationKind kind) {
    return c.output_dir / ("vectors_" + kind_name(kind) + ".jsonl");
}

fs::path model_path(const PipelineConfig& c, const std::string& mechanism, data::RepresentationKind kind) {
    return c.output_dir / ("model_" + mechanism + "_" + kind_name(kind) + "_" + hmdr::to_string(c.variant) + ".json");
}

namespace {

// ---------------------------------------------------------------- stages

std::string file_hash(const fs::path& p) {
    if (!fs::exists(p)) throw InputError("missing input: " + p.string());
    return sha256_file(p);
}

/// Fingerprint bookkeeping for one command.
class Stage {
public:
    Stage(const PipelineConfig& c, std::string name) : c_(c), name_(std::move(name)) {
        fs::create_directories(c.output_dir);
        fingerprint_input_["command"] = name_;
    }

    void input_file(const std::string& key, const fs::path& p) { fingerprint_input_["files"][key] = file_hash(p); }
    void setting(const std::string& key, Json value) { fingerprint_input_["settings"][key] = std::move(value); }
    void output(const fs::path& p) { outputs_.push_back(p); }

    fs::path summary_path() const { return c_.output_dir / (name_ + "_summary.json"); }
    std::string fingerprint() const { return sha256_hex(fingerprint_input_.dump()); }

    /// The previous summary when it was produced from identical inputs and
    /// every recorded output is still present.
    std::optional<Json> previous() const {
        if (!fs::exists(summary_path())) return std::nullopt;
        Json old;
        try {
            old = Json::parse(read_file(summary_path()));
        } catch (const std::exception&) {
            return std::nullopt;
        }
        if (old.value("fingerprint", "") != fingerprint()) return std::nullopt;
        for (const auto& p : outputs_)
            if (!fs::exists(p)) return std::nullopt;
        if (old.contains("outputs"))
            for (const auto& [name, hash] : old["outputs"].items())
                if (!fs::exists(c_.output_dir / name) || sha256_file(c_.output_dir / name) != hash) return std::nullopt;
        return old;
    }

    CommandResult finish(Json summary) const {
        Json doc;
        doc["command"] = name_;
        doc["fingerprint"] = fingerprint();
        Json outs = Json::object();
        for (const auto& p : outputs_)
            if (fs::exists(p)) outs[fs::relative(p, c_.output_dir).generic_string()] = sha256_file(p);
        doc["outputs"] = std::move(outs);
        for (auto& [k, v] : summary.items()) doc[k] = v;
        write_file_atomic(summary_path(), doc.dump(2) + "\n");
        return {doc, false};
    }

private:
    const PipelineConfig& c_;
    std::string name_;
    Json fingerprint_input_;
    std::vector<fs::path> outputs_;
};

std::optional<CommandResult> up_to_date(const Stage& stage) {
    if (auto old = stage.previous()) {
        spdlog::info("{} is up to date", stage.summary_path().filename().string());
        return CommandResult{*old, true};
    }
    return std::nullopt;
}

data::PreferenceDataset load_inputs_dataset(const PipelineConfig& c) {
    if (!fs::exists(c.dataset)) throw InputError("dataset not found: " + c.dataset.string());
    return data::load_dataset(c.dataset);
}

data::ConceptCatalog load_inputs_catalog(const PipelineConfig& c) {
    if (!fs::exists(c.catalog)) throw InputError("catalog not found: " + c.catalog.string() + " (run discover first)");
    return data::load_catalog(c.catalog);
}

Json gateway_identity(const PipelineConfig& c) {
    // The cache location does not change results; the backend does.
    Json g = llm::to_json(c.gateway);
    g.erase("cache_dir");
    g.erase("max_parallel");
    if (!c.gateway.mock_script.empty() && fs::exists(c.gateway.mock_script))
        g["mock_script"] = sha256_file(c.gateway.mock_script);
    return g;
}

Json section(const PipelineConfig& c, const char* key) { return to_json(c)[key]; }

/// Vectors of `kind` joined with `mechanism` labels; labels missing count as ties.
std::vector<data::LabeledVector> labeled(const std::vector<data::ConceptVector>& vectors,
                                         const data::PreferenceDataset& dataset, const std::string& mechanism) {
    std::vector<data::LabeledVector> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) {
        const auto* t = dataset.find(v.triplet_id);
        if (!t) throw InputError("vectors mention triplet " + v.triplet_id + " which is not in the dataset");
        out.push_back({v, t->label(mechanism).value_or(0)});
    }
    return out;
}

/// Reads a finished vectors file and checks it against the catalog.
std::vector<data::ConceptVector> load_checked_vectors(const PipelineConfig& c, data::RepresentationKind kind,
                                                      const data::ConceptCatalog& catalog) {
    const auto path = vectors_path(c, kind);
    if (!fs::exists(path)) throw InputError("missing " + path.string() + " (run represent first)");
    const auto summary_path = c.output_dir / "represent_summary.json";
    if (fs::exists(summary_path)) {
        const auto s = Json::parse(read_file(summary_path));
        if (s.value("catalog_checksum", "") != data::catalog_checksum(catalog))
            throw InputError(path.string() + " was built from a different catalog; rerun represent");
    }
    auto vectors = data::load_vectors(path);
    for (const auto& v : vectors) {
        if (v.kind != kind) throw InputError(path.string() + " holds vectors of another kind");
        try {
            data::validate(v, catalog);
        } catch (const ValidationError& e) {
            throw InputError(path.string() + " does not match the catalog: " + e.what());
        }
    }
    return vectors;
}

hmdr::HmdrModel load_checked_model(const fs::path& path, const data::ConceptCatalog& catalog) {
    if (!fs::exists(path)) throw InputError("missing model " + path.string() + " (run train first)");
    auto m = hmdr::load_model(path);
    if (m.catalog_checksum != data::catalog_checksum(catalog))
        throw InputError("model " + path.string() + " was trained on a different catalog; rerun train");
    return m;
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
    std::string text;
    for (const auto& r : rows) text += r.dump() + "\n";
    write_file_atomic(path, text);
}

Json report_json(const discovery::DiscoveryReport& r) {
    Json j;
    j["candidates"] = r.candidates;
    j["distinct_names"] = r.distinct_names;
    j["flagged_pairs"] = r.flagged_pairs;
    j["merged_pairs"] = r.merged_pairs;
    j["shared"] = r.shared;
    j["specific"] = r.specific;
    Json vocab = Json::object();
    for (const auto& [d, v] : r.vocabularies) vocab[d] = {{"subdomains", v.subdomains}, {"tasks", v.tasks}};
    j["vocabularies"] = vocab;
    Json batches = Json::array();
    for (const auto& b : r.batches)
        batches.push_back({{"domain", b.domain}, {"batch", b.batch}, {"candidates", b.candidates}, {"error", b.error}});
    j["batches"] = batches;
    j["definition_warnings"] = r.definition_warnings;
    return j;
}

hmdr::TrainConfig final_train_config(std::uint64_t seed) {
    hmdr::TrainConfig t;
    t.seed = seed;
    return t;
}

}  // namespace

// ---------------------------------------------------------------- commands

CommandResult cmd_discover(const PipelineConfig& c) {
    Stage stage(c, "discover");
    stage.input_file("dataset", c.dataset);
    stage.setting("discovery", section(c, "discovery"));
    stage.setting("seed", c.seed);
    stage.setting("gateway", gateway_identity(c));
    const auto report_path = c.output_dir / "discovery_report.json";
    stage.output(c.catalog);
    stage.output(report_path);
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto part = partition(dataset, c.discovery_per_domain, c.seed);
    if (part.discovery.empty()) throw ConfigError("discovery partition is empty (discovery.per_domain = 0)");
    llm::Gateway gateway(c.gateway);
    const auto result = discovery::run_discovery(gateway, dataset, part.discovery, c.discovery);

    data::save_catalog(result.catalog, c.catalog);
    auto report = report_json(result.report);
    write_file_atomic(report_path, report.dump(2) + "\n");
    std::vector<Json> raw;
    for (std::size_t i = 0; i < result.report.raw_replies.size(); ++i)
        raw.push_back({{"batch", i}, {"reply", result.report.raw_replies[i]}});
    write_jsonl(c.output_dir / "discovery_raw.jsonl", raw);

    std::size_t failed = 0;
    for (const auto& b : result.report.batches) failed += b.error.empty() ? 0 : 1;
    Json summary;
    summary["catalog"] = c.catalog.string();
    summary["catalog_checksum"] = data::catalog_checksum(result.catalog);
    summary["concepts"] = result.catalog.size();
    summary["candidates"] = result.report.candidates;
    summary["merged_pairs"] = result.report.merged_pairs;
    summary["shared"] = result.report.shared;
    summary["specific"] = result.report.specific;
    summary["failed_batches"] = failed;
    summary["discovery_triplets"] = part.discovery.size();
    return stage.finish(summary);
}

CommandResult cmd_represent(const PipelineConfig& c) {
    Stage stage(c, "represent");
    stage.input_file("dataset", c.dataset);
    stage.input_file("catalog", c.catalog);
    stage.setting("representation", section(c, "representation"));
    stage.setting("partition", {{"per_domain", c.discovery_per_domain}, {"seed", c.seed}});
    stage.setting("gateway", gateway_identity(c));
    for (auto k : c.kinds) stage.output(vectors_path(c, k));
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto catalog = load_inputs_catalog(c);
    const auto part = partition(dataset, c.discovery_per_domain, c.seed);
    if (part.modeling.empty()) throw ConfigError("no triplets left for modeling after the discovery partition");
    llm::Gateway gateway(c.gateway);

    Json kinds = Json::object();
    std::size_t remaining = 0;
    for (auto kind : c.kinds) {
        const auto work = c.output_dir / "represent";
        represent::RepresentOptions opt;
        opt.kind = kind;
        opt.chunk_size = c.chunk_size;
        opt.round_size = c.round_size;
        opt.max_new = c.max_new_triplets;
        opt.vectors_path = work / (kind_name(kind) + ".partial.jsonl");
        opt.manifest_path = work / (kind_name(kind) + ".manifest.jsonl");
        opt.audit_path = work / (kind_name(kind) + ".audit.jsonl");
        const auto result = represent::represent_all(gateway, dataset, part.modeling, catalog, opt);
        const auto& r = result.report;
        remaining += r.remaining;
        if (r.remaining == 0) write_file_atomic(vectors_path(c, kind), data::serialize_vectors(result.vectors));
        kinds[kind_name(kind)] = {{"triplets", r.triplets},
                                  {"resumed", r.resumed},
                                  {"remaining", r.remaining},
                                  {"fail_open", r.fail_open},
                                  {"flagged_annotations", r.flagged_annotations},
                                  {"nonzero_entries", r.nonzero_entries}};
    }
    Json summary;
    summary["catalog_checksum"] = data::catalog_checksum(catalog);
    summary["kinds"] = kinds;
    if (remaining > 0) {
        // Not final: leave no summary behind so the next call resumes.
        summary["resume_hint"] = std::to_string(remaining) + " triplet annotations remain; rerun represent to continue";
        spdlog::warn("{}", summary["resume_hint"].get<std::string>());
        return {summary, false};
    }
    return stage.finish(summary);
}

CommandResult cmd_train(const PipelineConfig& c) {
    Stage stage(c, "train");
    stage.input_file("dataset", c.dataset);
    stage.input_file("catalog", c.catalog);
    for (auto k : c.kinds) stage.input_file("vectors_" + kind_name(k), vectors_path(c, k));
    stage.setting("mechanisms", c.mechanisms);
    stage.setting("variant", hmdr::to_string(c.variant));
    stage.setting("cv_folds", c.cv_folds);
    stage.setting("seed", c.seed);
    for (const auto& m : c.mechanisms)
        for (auto k : c.kinds) stage.output(model_path(c, m, k));
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto catalog = load_inputs_catalog(c);
    Json models = Json::array();
    for (auto kind : c.kinds) {
        const auto vectors = load_checked_vectors(c, kind, catalog);
        for (const auto& mechanism : c.mechanisms) {
            const auto data = hmdr::drop_ties(labeled(vectors, dataset, mechanism));
            if (data.empty()) throw InputError("no decided '" + mechanism + "' labels among the modeled triplets");
            std::set<data::DomainId> present;
            for (const auto& lv : data) present.insert(lv.x.domain);
            const auto grid = selection::grid_for(c.variant, present.size());
            selection::CvOptions cv;
            cv.folds = c.cv_folds;
            cv.seed = c.seed;
            const auto chosen = selection::cross_validate(data, catalog, grid, cv);
            auto model = hmdr::fit(data, catalog, chosen.best, final_train_config(c.seed));
            model.catalog_checksum = data::catalog_checksum(catalog);
            hmdr::save_model(model, model_path(c, mechanism, kind));

            Json nnz = Json::object();
            for (const auto& d : model.domains()) nnz[d] = model.nonzero_specific(d);
            models.push_back({{"mechanism", mechanism},
                              {"kind", kind_name(kind)},
                              {"variant", hmdr::to_string(c.variant)},
                              {"file", model_path(c, mechanism, kind).filename().string()},
                              {"instances", data.size()},
                              {"alpha", chosen.best.alpha},
                              {"lambda_b", chosen.best.lambda_b},
                              {"lambda_s", chosen.best.lambda_s},
                              {"cv_accuracy", chosen.scores[chosen.best_index].mean_accuracy},
                              {"nonzero_shared", model.nonzero_shared()},
                              {"nonzero_specific", nnz},
                              {"converged", model.info().converged}});
        }
    }
    Json summary;
    summary["models"] = models;
    return stage.finish(summary);
}

CommandResult cmd_evaluate(const PipelineConfig& c) {
    Stage stage(c, "evaluate");
    stage.input_file("dataset", c.dataset);
    stage.input_file("catalog", c.catalog);
    for (auto k : c.kinds) stage.input_file("vectors_" + kind_name(k), vectors_path(c, k));
    stage.setting("evaluation", section(c, "evaluation"));
    stage.setting("mechanisms", c.mechanisms);
    stage.setting("variant", hmdr::to_string(c.variant));
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto catalog = load_inputs_catalog(c);
    const auto& e = c.evaluation;
    auto variants = e.variants.empty() ? std::vector<hmdr::Variant>{c.variant} : e.variants;
    Json rows = Json::array();
    for (auto kind : c.kinds) {
        const auto vectors = load_checked_vectors(c, kind, catalog);
        for (const auto& mechanism : c.mechanisms) {
            const auto data = labeled(vectors, dataset, mechanism);
            for (auto variant : variants)
                for (const auto& protocol : e.protocols) {
                    selection::ProtocolOptions opt;
                    opt.folds = e.folds;
                    opt.threads = e.threads;
                    opt.final_train = final_train_config(c.seed);
                    selection::EvalReport report;
                    if (protocol == "in_domain") {
                        opt.seeds = data::default_seeds(e.seeds);
                        opt.train_size = e.train_size;
                        opt.test_size = e.test_size;
                        report = selection::run_in_domain(data, catalog, variant, opt);
                    } else {
                        if (variant == hmdr::Variant::specific_only) {
                            spdlog::warn("evaluate: specific_only has no shared weights; skipped for leave_one_out");
                            continue;
                        }
                        opt.seeds = data::default_seeds(e.loo_seeds);
                        opt.train_size = e.loo_train_size;
                        report = selection::run_out_of_domain(data, catalog, variant, opt);
                    }
                    const auto name = "eval_" + mechanism + "_" + kind_name(kind) + "_" + hmdr::to_string(variant) +
                                      "_" + protocol + ".json";
                    selection::save_report(report, c.output_dir / name);
                    stage.output(c.output_dir / name);
                    rows.push_back({{"mechanism", mechanism},
                                    {"kind", kind_name(kind)},
                                    {"variant", hmdr::to_string(variant)},
                                    {"protocol", protocol},
                                    {"splits", report.splits.size()},
                                    {"mean_accuracy", report.overall_mean},
                                    {"domain_mean", report.domain_mean},
                                    {"file", name}});
                }
        }
    }
    Json summary;
    summary["evaluations"] = rows;
    return stage.finish(summary);
}

CommandResult cmd_explain(const PipelineConfig& c) {
    Stage stage(c, "explain");
    stage.input_file("catalog", c.catalog);
    for (const auto& m : c.mechanisms)
        for (auto k : c.kinds) stage.input_file("model_" + m + "_" + kind_name(k), model_path(c, m, k));
    if (auto done = up_to_date(stage)) return *done;

    const auto catalog = load_inputs_catalog(c);
    Json files = Json::array();
    for (const auto& mechanism : c.mechanisms)
        for (auto kind : c.kinds) {
            const auto model = load_checked_model(model_path(c, mechanism, kind), catalog);
            std::vector<explain::Explanation> explanations;
            explanations.push_back(explain::explain_global(model, mechanism, std::nullopt));
            for (const auto& d : model.domains()) explanations.push_back(explain::explain_global(model, mechanism, d));
            const auto stem = "explanations_" + mechanism + "_" + kind_name(kind);
            explain::emit_report(explanations, catalog, explain::ReportFormat::structured,
                                 c.output_dir / (stem + ".json"));
            explain::emit_report(explanations, catalog, explain::ReportFormat::svg, c.output_dir / (stem + ".svg"));
            stage.output(c.output_dir / (stem + ".json"));
            stage.output(c.output_dir / (stem + ".svg"));
            Json top = Json::object();
            for (const auto& e : explanations) {
                Json names = Json::array();
                for (std::size_t i = 0; i < e.lifts.size() && i < 5; ++i)
                    names.push_back({{"concept", catalog.at(e.lifts[i].concept_id).name},
                                     {"lift", e.lifts[i].lift_percent}});
                top[e.domain.value_or("(shared)")] = names;
            }
            files.push_back({{"mechanism", mechanism}, {"kind", kind_name(kind)}, {"file", stem + ".json"}, {"top", top}});
        }
    Json summary;
    summary["explanations"] = files;
    return stage.finish(summary);
}

namespace {

std::vector<data::Concept> concepts_of(const data::ConceptCatalog& catalog, const std::vector<data::ConceptId>& ids) {
    std::vector<data::Concept> out;
    for (auto id : ids) out.push_back(catalog.at(id));
    return out;
}

Json names_of(const std::vector<data::Concept>& concepts) {
    Json j = Json::array();
    for (const auto& c : concepts) j.push_back(c.name);
    return j;
}

}  // namespace

CommandResult cmd_tiebreak(const PipelineConfig& c) {
    const auto& app = c.applications;
    const auto kind = c.kinds.front();
    Stage stage(c, "tiebreak");
    stage.input_file("dataset", c.dataset);
    stage.input_file("catalog", c.catalog);
    stage.input_file("vectors", vectors_path(c, kind));
    stage.input_file("judge_model", model_path(c, app.judge, kind));
    if (app.mode == explain::TopKMode::diff) stage.input_file("reference_model", model_path(c, app.reference, kind));
    stage.setting("applications", section(c, "applications"));
    stage.setting("partition", {{"per_domain", c.discovery_per_domain}, {"seed", c.seed}});
    stage.setting("gateway", gateway_identity(c));
    const auto prompts_path = c.output_dir / "tiebreak_prompts.jsonl";
    const auto results_path = c.output_dir / "tiebreak.json";
    stage.output(prompts_path);
    stage.output(results_path);
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto catalog = load_inputs_catalog(c);
    const auto vectors = load_checked_vectors(c, kind, catalog);

    // Ties of the judge that the reference mechanism decided.
    std::set<std::string> tie_ids;
    for (const auto& v : vectors) {
        const auto* t = dataset.find(v.triplet_id);
        if (t && t->label(app.judge).value_or(0) == 0 && t->label(app.reference).value_or(0) != 0) tie_ids.insert(t->id);
    }

    // Retrain without the ties being resolved, keeping the selected penalties.
    auto retrain = [&](const std::string& mechanism) {
        const auto trained = load_checked_model(model_path(c, mechanism, kind), catalog);
        const auto data = hmdr::drop_ties(explain::excluding(labeled(vectors, dataset, mechanism), tie_ids));
        if (data.empty()) throw InputError("no '" + mechanism + "' labels left after excluding the ties");
        auto m = hmdr::fit(data, catalog, trained.params(), final_train_config(c.seed));
        m.catalog_checksum = trained.catalog_checksum;
        return m;
    };
    const auto judge_model = retrain(app.judge);
    std::optional<hmdr::HmdrModel> reference_model;
    if (app.mode == explain::TopKMode::diff) reference_model = retrain(app.reference);

    std::map<data::DomainId, std::vector<data::Concept>> guidance;
    for (const auto& d : dataset.domains()) {
        const auto judge_expl = explain::explain_global(judge_model, app.judge, d);
        std::vector<data::ConceptId> ids;
        if (reference_model) {
            const auto ref_expl = explain::explain_global(*reference_model, app.reference, d);
            ids = explain::top_k_concepts(ref_expl, &judge_expl, app.top_k, explain::TopKMode::diff);
        } else {
            ids = explain::top_k_concepts(judge_expl, nullptr, app.top_k, explain::TopKMode::self);
        }
        guidance[d] = concepts_of(catalog, ids);
    }

    llm::Gateway gateway(c.gateway);
    std::vector<Json> prompts;
    std::size_t resolved = 0, agree = 0, skipped = 0;
    std::vector<int> before, after, gold;
    for (const auto& v : vectors) {
        const auto* t = dataset.find(v.triplet_id);
        const int ref = t->label(app.reference).value_or(0);
        if (ref == 0) continue;
        const int judged = t->label(app.judge).value_or(0);
        int updated = judged;
        if (tie_ids.count(t->id)) {
            const auto& concepts = guidance[t->domain];
            if (concepts.empty()) {
                ++skipped;
            } else {
                prompts.push_back({{"triplet_id", t->id},
                                   {"domain", t->domain},
                                   {"concepts", names_of(concepts)},
                                   {"prompt", explain::build_tiebreak_prompt(*t, concepts, app.cot)}});
                if (auto label = explain::resolve_tie(gateway, *t, concepts, app.cot)) {
                    updated = *label;
                    ++resolved;
                    agree += *label == ref ? 1 : 0;
                }
            }
        }
        before.push_back(judged);
        after.push_back(updated);
        gold.push_back(ref);
    }
    write_jsonl(prompts_path, prompts);

    Json guidance_json = Json::object();
    for (const auto& [d, cs] : guidance) guidance_json[d] = names_of(cs);
    Json results;
    results["judge"] = app.judge;
    results["reference"] = app.reference;
    results["mode"] = app.mode == explain::TopKMode::diff ? "diff" : "self";
    results["concepts"] = guidance_json;
    results["ties"] = tie_ids.size();
    results["resolved"] = resolved;
    results["skipped_without_concepts"] = skipped;
    results["agreement_on_resolved"] = resolved ? static_cast<double>(agree) / static_cast<double>(resolved) : 0.0;
    if (!gold.empty()) {
        results["accuracy_before"] = selection::accuracy_with_ties(before, gold);
        results["accuracy_after"] = selection::accuracy_with_ties(after, gold);
    }
    write_file_atomic(results_path, results.dump(2) + "\n");
    return stage.finish(results);
}

CommandResult cmd_hack(const PipelineConfig& c) {
    const auto& app = c.applications;
    const auto kind = c.kinds.front();
    Stage stage(c, "hack");
    stage.input_file("dataset", c.dataset);
    stage.input_file("catalog", c.catalog);
    stage.input_file("judge_model", model_path(c, app.judge, kind));
    stage.setting("applications", section(c, "applications"));
    stage.setting("partition", {{"per_domain", c.discovery_per_domain}, {"seed", c.seed}});
    stage.setting("gateway", gateway_identity(c));
    const auto results_path = c.output_dir / "hack.json";
    stage.output(results_path);
    if (auto done = up_to_date(stage)) return *done;

    const auto dataset = load_inputs_dataset(c);
    const auto catalog = load_inputs_catalog(c);
    const auto model = load_checked_model(model_path(c, app.judge, kind), catalog);
    const auto part = partition(dataset, c.discovery_per_domain, c.seed);
    llm::Gateway gateway(c.gateway);

    auto generate = [&](const std::string& prompt, const char* template_id) {
        llm::ChatRequest r;
        r.prompt = prompt;
        r.tag = llm::Purpose::generation;
        r.template_id = template_id;
        return gateway.complete(r).text;
    };

    Json domains = Json::object();
    std::vector<explain::Outcome> all;
    for (const auto& d : dataset.domains()) {
        const auto expl = explain::explain_global(model, app.judge, d);
        const auto concepts = concepts_of(catalog, explain::top_k_concepts(expl, nullptr, app.top_k, explain::TopKMode::self));
        std::vector<std::string> queries;
        std::set<std::string> seen;
        for (auto i : part.modeling) {
            const auto& t = dataset.triplets()[i];
            if (t.domain == d && queries.size() < app.hack_queries && seen.insert(t.query).second) queries.push_back(t.query);
        }
        std::vector<explain::Outcome> outcomes;
        for (const auto& q : queries) {
            const auto vanilla = generate(explain::build_guided_generation_prompt(q, {}), "generate");
            const auto guided = generate(explain::build_guided_generation_prompt(q, concepts),
                                         concepts.empty() ? "generate" : "generate_guided");
            outcomes.push_back(explain::judge_pair(gateway, q, guided, vanilla, app.cot));
        }
        all.insert(all.end(), outcomes.begin(), outcomes.end());
        std::size_t win = 0, tie = 0, lose = 0;
        for (auto o : outcomes) (o == explain::Outcome::win ? win : o == explain::Outcome::tie ? tie : lose)++;
        domains[d] = {{"concepts", names_of(concepts)},
                      {"queries", outcomes.size()},
                      {"win", win},
                      {"tie", tie},
                      {"lose", lose},
                      {"win_rate", outcomes.empty() ? Json(nullptr) : Json(explain::win_rate(outcomes))}};
    }
    Json results;
    results["judge"] = app.judge;
    results["domains"] = domains;
    results["win_rate"] = all.empty() ? Json(nullptr) : Json(explain::win_rate(all));
    write_file_atomic(results_path, results.dump(2) + "\n");
    return stage.finish(results);
}

CommandResult cmd_report(const PipelineConfig& c) {
    Stage stage(c, "report");
    stage.input_file("catalog", c.catalog);
    std::vector<std::pair<std::string, fs::path>> parts;
    for (const char* name : {"discover", "represent", "train", "evaluate", "explain", "tiebreak", "hack"}) {
        const auto p = c.output_dir / (std::string(name) + "_summary.json");
        if (fs::exists(p)) {
            stage.input_file(name, p);
            parts.emplace_back(name, p);
        }
    }
    const auto json_path = c.output_dir / "report.json";
    const auto md_path = c.output_dir / "report.md";
    stage.output(json_path);
    stage.output(md_path);
    if (auto done = up_to_date(stage)) return *done;

    const auto catalog = load_inputs_catalog(c);
    Json report;
    report["catalog_checksum"] = data::catalog_checksum(catalog);
    report["concepts"] = catalog.size();
    report["shared"] = catalog.shared_ids().size();
    for (const auto& [name, p] : parts) {
        auto s = Json::parse(read_file(p));
        s.erase("outputs");
        report[name] = s;
    }
    write_file_atomic(json_path, report.dump(2) + "\n");

    std::string md = "# Preference explanation report\n\n";
    md += "Catalog: " + std::to_string(catalog.size()) + " concepts, " + std::to_string(catalog.shared_ids().size()) +
          " shared.\n";
    if (report.contains("train")) {
        md += "\n## Models\n\n| mechanism | kind | variant | alpha | lambda_b | lambda_s | CV accuracy | nonzero shared |\n"
              "|---|---|---|---|---|---|---|---|\n";
        for (const auto& m : report["train"]["models"])
            md += fmt::format("| {} | {} | {} | {:.4g} | {:.4g} | {:.4g} | {:.3f} | {} |\n", m["mechanism"].get<std::string>(),
                              m["kind"].get<std::string>(), m["variant"].get<std::string>(), m["alpha"].get<double>(),
                              m["lambda_b"].get<double>(), m["lambda_s"].get<double>(), m["cv_accuracy"].get<double>(),
                              m["nonzero_shared"].get<std::size_t>());
    }
    if (report.contains("evaluate")) {
        md += "\n## Evaluation\n\n| mechanism | kind | variant | protocol | splits | mean accuracy |\n|---|---|---|---|---|---|\n";
        for (const auto& r : report["evaluate"]["evaluations"])
            md += fmt::format("| {} | {} | {} | {} | {} | {:.3f} |\n", r["mechanism"].get<std::string>(),
                              r["kind"].get<std::string>(), r["variant"].get<std::string>(),
                              r["protocol"].get<std::string>(), r["splits"].get<std::size_t>(),
                              r["mean_accuracy"].get<double>());
    }
    if (report.contains("explain")) {
        md += "\n## Top concepts by lift (%)\n";
        for (const auto& e : report["explain"]["explanations"]) {
            md += "\n### " + e["mechanism"].get<std::string>() + " (" + e["kind"].get<std::string>() + ")\n\n";
            for (const auto& [domain, lifts] : e["top"].items()) {
                md += "- " + domain + ":";
                for (const auto& l : lifts) md += fmt::format(" {} {:+.1f};", l["concept"].get<std::string>(), l["lift"].get<double>());
                md += "\n";
            }
        }
    }
    if (report.contains("tiebreak")) {
        const auto& t = report["tiebreak"];
        md += fmt::format("\n## Tie break\n\n{} ties, {} resolved, agreement {:.3f}.\n", t["ties"].get<std::size_t>(),
                          t["resolved"].get<std::size_t>(), t["agreement_on_resolved"].get<double>());
    }
    if (report.contains("hack") && !report["hack"]["win_rate"].is_null())
        md += fmt::format("\n## Judge hack\n\nWin rate of guided over vanilla responses: {:.1f}.\n",
                          report["hack"]["win_rate"].get<double>());
    write_file_atomic(md_path, md);

    Json summary;
    summary["report"] = json_path.filename().string();
    summary["markdown"] = md_path.filename().string();
    summary["sections"] = Json::array();
    for (const auto& [name, p] : parts) summary["sections"].push_back(name);
    return stage.finish(summary);
}

}  // namespace prefx::pipeline
