#pragma once

#include "prefx/data/concept_vector.hpp"
#include "prefx/data/dataset.hpp"
#include "prefx/discovery/discovery.hpp"
#include "prefx/explain/lift.hpp"
#include "prefx/hmdr/model.hpp"
#include "prefx/llm/gateway.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace prefx::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct EvaluationConfig {
    std::vector<std::string> protocols{"in_domain"};  // in_domain, leave_one_out
    std::vector<hmdr::Variant> variants;               // empty: the pipeline variant
    std::size_t seeds = 25;
    std::size_t train_size = 2800;
    std::size_t test_size = 400;
    std::size_t loo_seeds = 5;
    std::size_t loo_train_size = 2450;
    std::size_t folds = 5;
    std::size_t threads = 1;
};

struct ApplicationConfig {
    std::string judge = "judge";
    std::string reference = "human";
    std::size_t top_k = 4;
    explain::TopKMode mode = explain::TopKMode::diff;
    bool cot = false;
    /// Queries per domain for the judge hack.
    std::size_t hack_queries = 50;
};

struct PipelineConfig {
    /// Relative paths in the file are resolved against its directory.
    fs::path dataset;
    /// Defaults to <output_dir>/catalog.json.
    fs::path catalog;
    fs::path output_dir = "out";
    std::uint64_t seed = 0;
    llm::GatewayConfig gateway;
    discovery::DiscoveryConfig discovery;
    /// Triplets per domain reserved for discovery; the rest are modeled.
    std::size_t discovery_per_domain = 400;
    std::vector<data::RepresentationKind> kinds{data::RepresentationKind::comp};
    std::size_t chunk_size = 20;
    std::size_t round_size = 64;
    /// Stop a representation run after this many new triplets; 0 = no limit.
    std::size_t max_new_triplets = 0;
    std::vector<std::string> mechanisms{"human"};
    hmdr::Variant variant = hmdr::Variant::hmdr;
    std::size_t cv_folds = 5;
    EvaluationConfig evaluation;
    ApplicationConfig applications;
};

/// ConfigError on unknown keys or bad values.
PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);
Json to_json(const PipelineConfig& c);

struct Overrides {
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::optional<fs::path> output_dir;
};
void apply(PipelineConfig& c, const Overrides& o);

/// Per-domain split of the dataset: the first `per_domain` triplets of a
/// seeded shuffle go to discovery, the rest are modeled. Both lists ascend.
struct Partition {
    std::vector<std::size_t> discovery;
    std::vector<std::size_t> modeling;
};
Partition partition(const data::PreferenceDataset& dataset, std::size_t per_domain, std::uint64_t seed);

/// What a command did, printed as JSON by the CLI.
struct CommandResult {
    Json summary;
    bool up_to_date = false;
};

// Each command writes its artifacts under output_dir plus <name>_summary.json
// carrying a fingerprint of its inputs; unchanged inputs make it a no-op.
// Missing or mismatched upstream artifacts raise InputError.
CommandResult cmd_discover(const PipelineConfig& c);
CommandResult cmd_represent(const PipelineConfig& c);
CommandResult cmd_train(const PipelineConfig& c);
CommandResult cmd_evaluate(const PipelineConfig& c);
CommandResult cmd_explain(const PipelineConfig& c);
CommandResult cmd_tiebreak(const PipelineConfig& c);
CommandResult cmd_hack(const PipelineConfig& c);
CommandResult cmd_report(const PipelineConfig& c);

/// Artifact names, shared by commands and tests.
fs::path vectors_path(const PipelineConfig& c, data::RepresentationKind kind);
fs::path model_path(const PipelineConfig& c, const std::string& mechanism, data::RepresentationKind kind);

}  // namespace prefx::pipeline
