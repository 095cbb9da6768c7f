// prefx: discover concepts, represent preferences, fit and explain models.
#include "prefx/pipeline/pipeline.hpp"
#include "prefx/util/error.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>
#include <map>

namespace {

using namespace prefx;

int run(int argc, char** argv) {
    CLI::App app{"Explain preference mechanisms with interpretable concepts"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::string output;
    std::string log_level = "info";
    app.add_option("-c,--config", config_path, "pipeline configuration (JSON)")->required();
    app.add_option("--seed", seed, "override the configured seed");
    app.add_flag("--mock", mock, "use the deterministic mock LLM backend");
    app.add_option("-o,--output", output, "override the output directory");
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    using Command = std::function<pipeline::CommandResult(const pipeline::PipelineConfig&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"discover", "build the concept catalog from the discovery partition", pipeline::cmd_discover},
        {"represent", "annotate modeling triplets into concept vectors", pipeline::cmd_represent},
        {"train", "select penalties by cross-validation and fit the final models", pipeline::cmd_train},
        {"evaluate", "run the in-domain and leave-one-domain-out protocols", pipeline::cmd_evaluate},
        {"explain", "write global concept lifts per domain (JSON and SVG)", pipeline::cmd_explain},
        {"tiebreak", "resolve judge ties with explanation-guided prompts", pipeline::cmd_tiebreak},
        {"hack", "compare concept-guided and vanilla responses under the judge", pipeline::cmd_hack},
        {"report", "collect every summary into report.json and report.md", pipeline::cmd_report},
    };
    std::map<CLI::App*, Command> handlers;
    for (const auto& [name, help, fn] : commands) handlers[app.add_subcommand(name, help)] = fn;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("prefx"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    auto config = pipeline::load_config(config_path);
    pipeline::Overrides overrides;
    overrides.seed = seed;
    overrides.mock = mock;
    if (!output.empty()) overrides.output_dir = output;
    pipeline::apply(config, overrides);

    for (auto* sub : app.get_subcommands()) {
        const auto result = handlers.at(sub)(config);
        auto summary = result.summary;
        summary["up_to_date"] = result.up_to_date;
        std::cout << summary.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const prefx::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const prefx::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
