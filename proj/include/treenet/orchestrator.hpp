#ifndef TREENET_ORCHESTRATOR_HPP
#define TREENET_ORCHESTRATOR_HPP

#include <cerrno>
#include <csignal>
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archive.hpp"
#include "assembly.hpp"
#include "autoencoder.hpp"
#include "backbones.hpp"
#include "bridge.hpp"
#include "config.hpp"
#include "data.hpp"
#include "image_io.hpp"

namespace treenet {

#ifdef TREENET_VERSION
inline constexpr const char* kVersion = TREENET_VERSION;
#else
inline constexpr const char* kVersion = "unknown";
#endif

// ----------------------------------------------------------------- ndjson

inline void write_ndjson(const std::filesystem::path& path, const std::vector<nlohmann::json>& records)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    require(f.good(), ErrorKind::io, "cannot write " + path.string());
    for (const auto& r : records)
        f << r.dump() << '\n';
}

inline std::vector<nlohmann::json> read_ndjson(const std::filesystem::path& path)
{
    std::ifstream f(path);
    require(f.good(), ErrorKind::io, "cannot read " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    for (int n = 1; std::getline(f, line); ++n) {
        if (line.empty())
            continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), ErrorKind::io, path.string() + ":" + std::to_string(n) + ": malformed record");
        out.push_back(std::move(j));
    }
    return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp);
        require(f.good(), ErrorKind::io, "cannot write " + path.string());
        f << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<nlohmann::json> read_json(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f.good())
        return std::nullopt;
    auto j = nlohmann::json::parse(f, nullptr, false);
    require(!j.is_discarded(), ErrorKind::io, path.string() + " is not valid JSON");
    return j;
}

// ------------------------------------------------------------------- lock

/// Exclusive lock on a run directory. A lock left by a dead process is
/// taken over.
class RunLock {
public:
    RunLock() = default;

    explicit RunLock(std::filesystem::path path) : path_(std::move(path))
    {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const std::string pid = std::to_string(::getpid()) + "\n";
                const auto written = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                require(written == static_cast<ssize_t>(pid.size()), ErrorKind::io,
                        "cannot write lock " + path_.string());
                held_ = true;
                return;
            }
            require(errno == EEXIST, ErrorKind::io, "cannot create lock " + path_.string());
            long owner = 0;
            std::ifstream(path_) >> owner;
            const bool alive = owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM);
            require(!alive, ErrorKind::locked,
                    "run directory is in use by process " + std::to_string(owner) + " (" + path_.string() + ")");
            std::filesystem::remove(path_);
        }
        fail(ErrorKind::locked, "could not acquire " + path_.string());
    }

    RunLock(RunLock&& o) noexcept : path_(std::move(o.path_)), held_(std::exchange(o.held_, false)) {}
    RunLock& operator=(RunLock&& o) noexcept
    {
        release();
        path_ = std::move(o.path_);
        held_ = std::exchange(o.held_, false);
        return *this;
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() { release(); }

private:
    void release() noexcept
    {
        if (held_) {
            std::error_code ec;
            std::filesystem::remove(path_, ec);
            held_ = false;
        }
    }

    std::filesystem::path path_;
    bool held_ = false;
};

// -------------------------------------------------------------------- run

enum class Phase { encoder, decoder, bridge, baseline };

inline const char* to_string(Phase p)
{
    switch (p) {
    case Phase::encoder: return "encoder";
    case Phase::decoder: return "decoder";
    case Phase::bridge: return "bridge";
    case Phase::baseline: return "baseline";
    }
    return "?";
}

struct PhaseArtifacts {
    Phase phase = Phase::encoder;
    std::filesystem::path checkpoint; // phase record (checkpoint.json)
    std::string phase_hash;
    nlohmann::json weights = nlohmann::json::object(); // network name -> weights hash
    bool skipped = false;
    int best_epoch = 0;
    std::filesystem::path log;

    nlohmann::json to_json() const
    {
        return {{"phase", to_string(phase)},   {"checkpoint", checkpoint.string()}, {"phase_hash", phase_hash},
                {"weights", weights},          {"skipped", skipped},                {"best_epoch", best_epoch},
                {"log", log.string()}};
    }
};

struct Dataset {
    std::vector<SampleRecord> records;
    SplitIndex split;

    std::vector<const SampleRecord*> select(Split s) const { return treenet::select(records, split, s); }
};

struct RunOptions {
    bool force = false; // accept stale upstream artifacts
    std::function<void(const std::string&)> progress;
};

/// One invocation's view of a run directory:
/// <root>/{encoder,decoder,bridge,baseline}/, manifest.json,
/// split_index.json, logs/, report/.
class RunContext {
public:
    RunContext(ExperimentConfig cfg, std::filesystem::path root, RunOptions opt = {})
        : cfg_(std::move(cfg)), root_(std::move(root)), opt_(std::move(opt))
    {
        cfg_.validate();
        std::filesystem::create_directories(root_);
        lock_ = RunLock(root_ / ".lock");
        for (const char* d : {"logs", "report"})
            std::filesystem::create_directories(root_ / d);
    }

    const ExperimentConfig& config() const { return cfg_; }
    const RunOptions& options() const { return opt_; }
    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path dir(Phase p) const { return root_ / to_string(p); }
    std::filesystem::path record_path(Phase p) const { return dir(p) / "checkpoint.json"; }
    std::filesystem::path log_path(Phase p) const { return root_ / "logs" / (std::string(to_string(p)) + ".ndjson"); }
    std::filesystem::path split_path() const { return root_ / "split_index.json"; }
    std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }
    std::filesystem::path metrics_path() const { return root_ / "report" / "metrics.ndjson"; }
    std::filesystem::path efficiency_path() const { return root_ / "report" / "efficiency.ndjson"; }

    void say(const std::string& line) const
    {
        if (opt_.progress)
            opt_.progress(line);
    }

    /// Records of the configured dataset with the persisted split.
    const Dataset& data()
    {
        if (data_)
            return *data_;
        Dataset d;
        const auto& ds = cfg_.dataset;
        std::optional<SplitIndex> presplit;
        if (ds.source == DataSource::synthetic) {
            d.records = generate_synthetic(ds.count, cfg_.shapes.N, cfg_.seed);
        } else {
            auto ingested = ingest_directory(ds.path, cfg_.shapes.N, cfg_.seed);
            d.records = std::move(ingested.records);
            presplit = std::move(ingested.presplit);
        }
        if (presplit) {
            d.split = std::move(*presplit);
        } else {
            std::vector<std::string> ids;
            for (const auto& r : d.records)
                ids.push_back(r.id);
            d.split = make_split(ids, ds.ratios, cfg_.seed);
        }
        const auto existing = std::filesystem::exists(split_path()) ? std::optional(SplitIndex::load(split_path()))
                                                                    : std::nullopt;
        if (!existing || !(*existing == d.split))
            d.split.save(split_path());
        say("data: " + std::to_string(d.records.size()) + " samples, split " +
            std::to_string(d.split.boundaries[0]) + "/" + std::to_string(d.split.boundaries[1]) + "/" +
            std::to_string(d.split.boundaries[2]));
        data_ = std::move(d);
        return *data_;
    }

    nlohmann::json manifest() const
    {
        auto m = read_json(manifest_path());
        return m ? *m : nlohmann::json::object();
    }

    void update_manifest(const std::function<void(nlohmann::json&)>& edit) const
    {
        nlohmann::json m = manifest();
        m["name"] = cfg_.name;
        m["version"] = kVersion;
        m["config_hash"] = config_hash(cfg_);
        m["config"] = canonical(cfg_);
        m["split_index"] = split_path().filename().string();
        if (!m.contains("phases"))
            m["phases"] = nlohmann::json::object();
        if (!m.contains("invocations"))
            m["invocations"] = nlohmann::json::array();
        edit(m);
        write_json(manifest_path(), m);
    }

    /// Appends an invocation entry (command, overrides, seed, config hash,
    /// version, status).
    void record_invocation(nlohmann::json entry) const
    {
        entry["config_hash"] = config_hash(cfg_);
        entry["seed"] = cfg_.seed;
        entry["version"] = kVersion;
        entry["time"] = std::time(nullptr);
        update_manifest([&](nlohmann::json& m) { m["invocations"].push_back(entry); });
    }

private:
    ExperimentConfig cfg_;
    std::filesystem::path root_;
    RunOptions opt_;
    RunLock lock_;
    std::optional<Dataset> data_;
};

// ----------------------------------------------------------------- phases

namespace detail {

inline std::uint64_t phase_seed(const ExperimentConfig& cfg, Phase p)
{
    return derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(p));
}

inline EpochCallback epoch_logger(const RunContext& run, Phase p, int epochs, std::vector<nlohmann::json>& lines)
{
    return [&run, p, epochs, &lines](const EpochRecord& r) {
        nlohmann::json j = r.to_json();
        j["phase"] = to_string(p);
        lines.push_back(j);
        write_ndjson(run.log_path(p), lines);
        std::ostringstream s;
        s << to_string(p) << ": epoch " << r.epoch << "/" << epochs << " train " << r.train_loss;
        if (!std::isnan(r.val_loss))
            s << " val " << r.val_loss;
        run.say(s.str());
    };
}

inline std::optional<nlohmann::json> read_record(const RunContext& run, Phase p)
{
    return read_json(run.record_path(p));
}

inline PhaseArtifacts artifacts_from(const RunContext& run, Phase p, const nlohmann::json& rec, bool skipped)
{
    PhaseArtifacts a;
    a.phase = p;
    a.checkpoint = run.record_path(p);
    a.phase_hash = rec.value("phase_hash", "");
    a.weights = rec.value("weights", nlohmann::json::object());
    a.best_epoch = rec.value("best_epoch", 0);
    a.skipped = skipped;
    a.log = run.log_path(p);
    return a;
}

inline void publish(const RunContext& run, const PhaseArtifacts& a)
{
    run.update_manifest([&](nlohmann::json& m) { m["phases"][to_string(a.phase)] = a.to_json(); });
}

inline std::optional<Autoencoder> load_autoencoder_files(const RunContext& run, Phase p, const AutoencoderSpec& spec,
                                                         const nlohmann::json& rec)
{
    const auto enc_path = run.dir(p) / "encoder_half.bin";
    const auto dec_path = run.dir(p) / "decoder_half.bin";
    if (!std::filesystem::exists(enc_path) || !std::filesystem::exists(dec_path))
        return std::nullopt;
    const int base = rec.at("base_width").get<int>();
    auto e = load_network(enc_path);
    auto d = load_network(dec_path);
    require(e.net.graph().to_json() == spec.encoder_graph(base).to_json() &&
                d.net.graph().to_json() == spec.decoder_graph(base).to_json(),
            ErrorKind::stale, std::string(to_string(p)) + " checkpoint does not match the configured shapes");
    return Autoencoder{spec, base, std::move(e.net), std::move(d.net)};
}

} // namespace detail

/// Trained autoencoder of `p` (encoder or decoder) from the run directory.
/// Missing artifacts, or artifacts trained under a different config, are
/// stale errors unless the run allows stale upstream.
inline Autoencoder load_autoencoder(const RunContext& run, Phase p)
{
    const auto& cfg = run.config();
    const auto spec = p == Phase::encoder ? cfg.encoder_spec() : cfg.decoder_spec();
    const auto rec = detail::read_record(run, p);
    const std::string hint = std::string("; run train-") + to_string(p) + " or run-pipeline first";
    require(rec.has_value(), ErrorKind::stale, std::string(to_string(p)) + " checkpoint is missing" + hint);
    require(run.options().force || rec->value("phase_hash", "") == phase_hash(cfg, to_string(p)), ErrorKind::stale,
            std::string(to_string(p)) + " checkpoint was trained with a different configuration" + hint +
                " (or pass --force)");
    auto ae = detail::load_autoencoder_files(run, p, spec, *rec);
    require(ae.has_value(), ErrorKind::stale, std::string(to_string(p)) + " weights are missing" + hint);
    return std::move(*ae);
}

/// Phase 1 (input autoencoder) or phase 2 (label autoencoder). Skipped when
/// a checkpoint with the same phase hash exists.
inline PhaseArtifacts autoencoder_phase(RunContext& run, Phase p)
{
    require(p == Phase::encoder || p == Phase::decoder, ErrorKind::config, "autoencoder_phase: bad phase");
    const auto& cfg = run.config();
    const auto spec = p == Phase::encoder ? cfg.encoder_spec() : cfg.decoder_spec();
    const std::string hash = phase_hash(cfg, to_string(p));
    if (const auto rec = detail::read_record(run, p); rec && rec->value("phase_hash", "") == hash) {
        try {
            if (detail::load_autoencoder_files(run, p, spec, *rec)) {
                run.say(std::string(to_string(p)) + ": up to date, skipped");
                auto a = detail::artifacts_from(run, p, *rec, true);
                detail::publish(run, a);
                return a;
            }
        } catch (const Error&) {
            // unreadable or mismatched weights: retrain
        }
    }

    const Dataset& data = run.data();
    const auto stack = [&](Split s) {
        const auto part = data.select(s);
        return p == Phase::encoder ? stack_images(part) : stack_masks(part);
    };
    const Tensor<float> train = stack(Split::train);
    const Tensor<float> val = stack(Split::val);
    TrainOptions opt = p == Phase::encoder ? cfg.encoder.train : cfg.decoder.train;
    opt.seed = detail::phase_seed(cfg, p);
    run.say(std::string(to_string(p)) + ": training " + spec.label() + " on " + std::to_string(train.shape().n) +
            " samples");
    std::filesystem::remove(run.record_path(p));
    std::vector<nlohmann::json> lines;
    auto trained = train_autoencoder(build_autoencoder(spec, opt.seed), train, &val, opt,
                                     detail::epoch_logger(run, p, opt.epochs, lines));

    std::filesystem::create_directories(run.dir(p));
    save_network(run.dir(p) / "encoder_half.bin", trained.model.encoder_half);
    save_network(run.dir(p) / "decoder_half.bin", trained.model.decoder_half);
    const nlohmann::json rec{{"phase", to_string(p)},
                             {"phase_hash", hash},
                             {"config_hash", config_hash(cfg)},
                             {"spec", spec},
                             {"base_width", trained.model.base_width},
                             {"parameters", trained.model.parameter_count()},
                             {"weights",
                              {{"encoder_half", weights_hash(trained.model.encoder_half)},
                               {"decoder_half", weights_hash(trained.model.decoder_half)}}},
                             {"best_epoch", trained.best_epoch},
                             {"initial_loss", trained.initial_loss}};
    write_json(run.record_path(p), rec);
    auto a = detail::artifacts_from(run, p, rec, false);
    detail::publish(run, a);
    return a;
}

inline Network<float> load_bridge(const RunContext& run)
{
    const auto& cfg = run.config();
    const auto rec = detail::read_record(run, Phase::bridge);
    const std::string hint = "; run train-bridge or run-pipeline first";
    require(rec.has_value(), ErrorKind::stale, "bridge checkpoint is missing" + hint);
    require(run.options().force || rec->value("phase_hash", "") == phase_hash(cfg, "bridge"), ErrorKind::stale,
            "bridge checkpoint was trained with a different configuration" + hint + " (or pass --force)");
    return load_network(run.dir(Phase::bridge) / "bridge.bin").net;
}

/// Phase 3: bridge backbone on encoded (image, mask) pairs. Reruns when its
/// own inputs change, when either autoencoder differs from the weights it
/// was trained against, or when `upstream_reran` is set.
inline PhaseArtifacts bridge_phase(RunContext& run, bool upstream_reran = false)
{
    const auto& cfg = run.config();
    const Autoencoder enc = load_autoencoder(run, Phase::encoder);
    const Autoencoder dec = load_autoencoder(run, Phase::decoder);
    const nlohmann::json upstream{{"encoder_half", weights_hash(enc.encoder_half)},
                                  {"label_encoder_half", weights_hash(dec.encoder_half)},
                                  {"decoder_half", weights_hash(dec.decoder_half)}};
    const std::string hash = phase_hash(cfg, "bridge");
    const auto rec = detail::read_record(run, Phase::bridge);
    const bool upstream_changed = upstream_reran || (rec && rec->value("upstream", nlohmann::json()) != upstream);
    if (rec && !upstream_changed && rec->value("phase_hash", "") == hash &&
        std::filesystem::exists(run.dir(Phase::bridge) / "bridge.bin")) {
        run.say("bridge: up to date, skipped");
        auto a = detail::artifacts_from(run, Phase::bridge, *rec, true);
        detail::publish(run, a);
        return a;
    }

    const Dataset& data = run.data();
    const auto dir = run.dir(Phase::bridge);
    std::filesystem::create_directories(dir);
    const CacheMode mode = (upstream_changed || !rec) ? CacheMode::refresh : CacheMode::reuse_or_error;
    run.say("bridge: encoding training pairs");
    const auto train = materialize_cached(dir / "train_set.bin", enc, dec, data.select(Split::train), mode);
    const auto val = materialize_cached(dir / "val_set.bin", enc, dec, data.select(Split::val), mode);

    const BackboneSpec spec = cfg.bridge_spec();
    BridgeOptions opt{cfg.bridge.train, cfg.bridge.scales, cfg.bridge.boundary};
    opt.train.seed = detail::phase_seed(cfg, Phase::bridge);
    run.say(std::string("bridge: training ") + to_string(spec.name) + " " + contract_string(spec) + " on " +
            std::to_string(train.size()) + " pairs");
    std::filesystem::remove(run.record_path(Phase::bridge));
    std::vector<nlohmann::json> lines;
    auto trained = train_bridge(build_backbone(spec, opt.train.seed), train, &val, opt, downsampling_factor(spec),
                                detail::epoch_logger(run, Phase::bridge, opt.train.epochs, lines));
    save_network(dir / "bridge.bin", trained.net);
    const nlohmann::json out{{"phase", "bridge"},
                             {"phase_hash", hash},
                             {"config_hash", config_hash(cfg)},
                             {"spec", spec},
                             {"parameters", trained.net.parameter_count()},
                             {"weights", {{"bridge", weights_hash(trained.net)}}},
                             {"upstream", upstream},
                             {"best_epoch", trained.best_epoch}};
    write_json(run.record_path(Phase::bridge), out);
    auto a = detail::artifacts_from(run, Phase::bridge, out, false);
    detail::publish(run, a);
    return a;
}

/// The configured backbone trained at full resolution on the same split.
inline PhaseArtifacts baseline_phase(RunContext& run)
{
    const auto& cfg = run.config();
    const std::string hash = phase_hash(cfg, "baseline");
    if (const auto rec = detail::read_record(run, Phase::baseline);
        rec && rec->value("phase_hash", "") == hash && std::filesystem::exists(run.dir(Phase::baseline) / "baseline.bin")) {
        run.say("baseline: up to date, skipped");
        auto a = detail::artifacts_from(run, Phase::baseline, *rec, true);
        detail::publish(run, a);
        return a;
    }
    const Dataset& data = run.data();
    const auto as_set = [](const std::vector<const SampleRecord*>& part) {
        BridgeTrainingSet s;
        for (const auto* r : part)
            s.ids.push_back(r->id);
        s.inputs = stack_images(part);
        s.targets = stack_masks(part);
        return s;
    };
    const auto train = as_set(data.select(Split::train));
    const auto val = as_set(data.select(Split::val));
    const BackboneSpec spec = cfg.baseline_spec();
    BridgeOptions opt{cfg.baseline.train, cfg.baseline.scales, cfg.bridge.boundary};
    opt.train.seed = detail::phase_seed(cfg, Phase::baseline);
    run.say(std::string("baseline: training ") + to_string(spec.name) + " " + contract_string(spec));
    std::filesystem::remove(run.record_path(Phase::baseline));
    std::vector<nlohmann::json> lines;
    auto trained = train_bridge(build_backbone(spec, opt.train.seed), train, &val, opt, downsampling_factor(spec),
                                detail::epoch_logger(run, Phase::baseline, opt.train.epochs, lines), "baseline");
    std::filesystem::create_directories(run.dir(Phase::baseline));
    save_network(run.dir(Phase::baseline) / "baseline.bin", trained.net);
    const nlohmann::json out{{"phase", "baseline"},
                             {"phase_hash", hash},
                             {"config_hash", config_hash(cfg)},
                             {"spec", spec},
                             {"parameters", trained.net.parameter_count()},
                             {"weights", {{"baseline", weights_hash(trained.net)}}},
                             {"best_epoch", trained.best_epoch}};
    write_json(run.record_path(Phase::baseline), out);
    auto a = detail::artifacts_from(run, Phase::baseline, out, false);
    detail::publish(run, a);
    return a;
}

inline Network<float> load_baseline(const RunContext& run)
{
    const auto rec = detail::read_record(run, Phase::baseline);
    require(rec.has_value(), ErrorKind::stale, "baseline checkpoint is missing; enable baseline and run-pipeline");
    require(run.options().force || rec->value("phase_hash", "") == phase_hash(run.config(), "baseline"),
            ErrorKind::stale, "baseline checkpoint was trained with a different configuration (or pass --force)");
    return load_network(run.dir(Phase::baseline) / "baseline.bin").net;
}

/// Assembled model from the three current checkpoints.
inline AssembledTreeNet load_assembled(const RunContext& run)
{
    const auto& cfg = run.config();
    const Autoencoder enc = load_autoencoder(run, Phase::encoder);
    const Autoencoder dec = load_autoencoder(run, Phase::decoder);
    const Network<float> bridge = load_bridge(run);
    return assemble(enc, bridge, dec,
                    {phase_hash(cfg, "encoder"), phase_hash(cfg, "bridge"), phase_hash(cfg, "decoder")});
}

inline std::string baseline_name(const ExperimentConfig& cfg)
{
    return std::string(to_string(cfg.bridge.backbone.name)) + " (full resolution)";
}

/// Evaluates the assembled model (and the baseline when enabled) on the
/// test split and writes report/metrics.ndjson.
inline std::vector<MetricsReport> evaluate_run(RunContext& run)
{
    const auto& cfg = run.config();
    const auto model = load_assembled(run);
    const auto test = run.data().select(Split::test);
    std::vector<MetricsReport> reports;
    reports.push_back(evaluate(model, test, cfg.evaluation.threshold, "Tree-NET", cfg.name, cfg.evaluation.batch));
    if (cfg.baseline.enabled) {
        const auto net = load_baseline(run);
        reports.push_back(evaluate(
            baseline_name(cfg), cfg.name, [&](const Tensor<float>& x) { return net.infer(x); }, test,
            cfg.evaluation.threshold, cfg.evaluation.batch));
    }
    std::vector<nlohmann::json> records;
    for (const auto& r : reports) {
        run.say("evaluate: " + r.model + " mean Dice " + std::to_string(r.mean_dice()) + " IoU " +
                std::to_string(r.mean_iou()) + " Acc " + std::to_string(r.mean_acc()));
        for (auto& j : r.to_records())
            records.push_back(std::move(j));
    }
    write_ndjson(run.metrics_path(), records);
    return reports;
}

struct PipelineResult {
    std::vector<PhaseArtifacts> phases;
    AssembledTreeNet model;
    std::vector<MetricsReport> metrics;
};

/// encoder -> decoder -> bridge (-> baseline), then assembly and test-split
/// evaluation. Phases whose inputs are unchanged are skipped.
inline PipelineResult run_pipeline(RunContext& run)
{
    PipelineResult out;
    out.phases.push_back(autoencoder_phase(run, Phase::encoder));
    out.phases.push_back(autoencoder_phase(run, Phase::decoder));
    out.phases.push_back(bridge_phase(run, !out.phases[0].skipped || !out.phases[1].skipped));
    if (run.config().baseline.enabled)
        out.phases.push_back(baseline_phase(run));
    out.model = load_assembled(run);
    out.metrics = evaluate_run(run);
    return out;
}

inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& root,
                                   RunOptions opt = {})
{
    RunContext run(cfg, root, std::move(opt));
    return run_pipeline(run);
}

} // namespace treenet

#endif // TREENET_ORCHESTRATOR_HPP
