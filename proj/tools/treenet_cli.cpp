#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <treenet/orchestrator.hpp>
#include <treenet/profiler.hpp>

using namespace treenet;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    std::string command;
    std::string config_path;
    std::string run_dir;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<int> batch;
    bool force = false;
    bool quiet = false;
    bool measure_memory = false;
    bool config_only = false;
};

/// --seed, --epochs and --batch expand to overrides for every phase.
std::vector<std::string> all_overrides(const Invocation& inv)
{
    std::vector<std::string> out;
    if (inv.seed)
        out.push_back("seed=" + std::to_string(*inv.seed));
    for (const char* phase : {"encoder", "decoder", "bridge", "baseline"}) {
        if (inv.epochs)
            out.push_back(std::string(phase) + ".epochs=" + std::to_string(*inv.epochs));
        if (inv.batch)
            out.push_back(std::string(phase) + ".batch=" + std::to_string(*inv.batch));
    }
    if (inv.batch)
        out.push_back("evaluation.batch=" + std::to_string(*inv.batch));
    out.insert(out.end(), inv.overrides.begin(), inv.overrides.end());
    return out;
}

ExperimentConfig resolve_config(const Invocation& inv)
{
    if (inv.config_path.empty())
        return config_from_json(nullptr, all_overrides(inv));
    return load_config(inv.config_path, all_overrides(inv));
}

void print_phase(const PhaseArtifacts& a)
{
    std::cout << to_string(a.phase) << ": " << (a.skipped ? "skipped (up to date)" : "trained")
              << ", best epoch " << a.best_epoch << ", " << a.checkpoint.string() << '\n';
}

std::vector<ProfileFamily> profile_families(const ExperimentConfig& cfg, bool config_only)
{
    ProfileFamily mine{cfg.name + " (" + to_string(cfg.bridge.backbone.name) + ")", cfg.bridge.backbone, cfg.shapes,
                       cfg.encoder.parameter_budget, cfg.encoder_spec(), cfg.decoder_spec()};
    std::vector<ProfileFamily> out{mine};
    if (!config_only)
        for (auto& f : default_families())
            out.push_back(std::move(f));
    return out;
}

int dispatch(const Invocation& inv)
{
    const ExperimentConfig cfg = resolve_config(inv);
    RunOptions opt;
    opt.force = inv.force;
    if (!inv.quiet)
        opt.progress = [](const std::string& line) { std::cerr << line << std::endl; };
    RunContext run(cfg, inv.run_dir.empty() ? fs::path("runs") / cfg.name : fs::path(inv.run_dir), opt);
    nlohmann::json entry{{"command", inv.command}, {"config_path", inv.config_path}, {"overrides", all_overrides(inv)},
                         {"force", inv.force}};

    const std::string& c = inv.command;
    if (c == "prepare-data") {
        const auto& d = run.data();
        std::cout << d.records.size() << " samples; split " << d.split.boundaries[0] << "/" << d.split.boundaries[1]
                  << "/" << d.split.boundaries[2] << " written to " << run.split_path().string() << '\n';
    } else if (c == "train-encoder") {
        print_phase(autoencoder_phase(run, Phase::encoder));
    } else if (c == "train-decoder") {
        print_phase(autoencoder_phase(run, Phase::decoder));
    } else if (c == "train-bridge") {
        print_phase(bridge_phase(run));
    } else if (c == "run-pipeline") {
        const auto result = run_pipeline(run);
        for (const auto& a : result.phases)
            print_phase(a);
        std::cout << '\n' << render_metrics_table(result.metrics);
        entry["dice"] = result.metrics.front().mean_dice();
    } else if (c == "assemble") {
        const auto model = load_assembled(run);
        const auto path = run.root() / "treenet.bin";
        save_network(path, model.network(),
                     {{"shapes", model.shapes()},
                      {"provenance", model.provenance()},
                      {"part_parameters", model.part_parameters()}});
        const auto& parts = model.part_parameters();
        std::cout << "assembled " << model.graph().input_shape().str() << " -> " << model.graph().output_shape().str()
                  << ", " << model.parameter_count() << " parameters (encoder half " << parts[0] << ", bridge "
                  << parts[1] << ", decoder half " << parts[2] << ")\nwritten to " << path.string() << '\n';
    } else if (c == "evaluate") {
        std::cout << render_metrics_table(evaluate_run(run));
    } else if (c == "profile") {
        const auto report = compare(profile_families(cfg, inv.config_only), inv.measure_memory);
        write_ndjson(run.efficiency_path(), report.to_records());
        std::cout << render_efficiency_table(report);
    } else if (c == "report") {
        const bool have_metrics = fs::exists(run.metrics_path());
        const bool have_efficiency = fs::exists(run.efficiency_path());
        require(have_metrics || have_efficiency, ErrorKind::stale,
                "no report rows under " + (run.root() / "report").string() + "; run evaluate or profile first");
        if (have_metrics)
            std::cout << render_metrics_table(MetricsReport::from_records(read_ndjson(run.metrics_path())));
        if (have_metrics && have_efficiency)
            std::cout << '\n';
        if (have_efficiency)
            std::cout << render_efficiency_table(ComparisonReport::from_records(read_ndjson(run.efficiency_path())));
    }
    entry["status"] = "ok";
    run.record_invocation(entry);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tree-NET: bottleneck-supervised segmentation training, assembly and profiling"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Invocation inv;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"prepare-data", "Generate or ingest the dataset and persist the split index"},
        {"train-encoder", "Train the input autoencoder"},
        {"train-decoder", "Train the label autoencoder"},
        {"train-bridge", "Train the bridge on encoded pairs"},
        {"run-pipeline", "Run all phases, assemble and evaluate"},
        {"assemble", "Write the assembled network to <run-dir>/treenet.bin"},
        {"evaluate", "Evaluate the assembled model on the test split"},
        {"profile", "FLOPs, parameters and optional peak memory"},
        {"report", "Render tables from the persisted report rows"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", inv.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--run-dir", inv.run_dir, "Run directory (default runs/<name>)");
        sub->add_option("--set", inv.overrides, "Override a config key: dotted.key=value")->take_all();
        sub->add_option("--seed", inv.seed, "Experiment seed");
        sub->add_option("--epochs", inv.epochs, "Epochs for every phase")->check(CLI::PositiveNumber);
        sub->add_option("--batch", inv.batch, "Batch size for every phase")->check(CLI::PositiveNumber);
        sub->add_flag("--force", inv.force, "Accept stale upstream checkpoints");
        sub->add_flag("-q,--quiet", inv.quiet, "No progress output");
        if (name == "profile") {
            sub->add_flag("--measure-memory", inv.measure_memory, "Run inference passes to measure peak memory");
            sub->add_flag("--config-only", inv.config_only, "Profile only the configured backbone");
        }
        sub->callback([&inv, name = name] { inv.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        return dispatch(inv);
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << to_string(e.kind()) << ": " << msg << std::endl;
        return e.kind() == ErrorKind::usage ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << std::endl;
        return 1;
    }
}
