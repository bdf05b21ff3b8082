#ifndef TREENET_CONFIG_HPP
#define TREENET_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoencoder.hpp"
#include "backbones.hpp"
#include "data.hpp"
#include "digest.hpp"
#include "losses.hpp"
#include "training.hpp"

namespace treenet {

enum class DataSource { synthetic, directory };

/// target_size 0 means "use shapes.N".
struct DatasetConfig {
    DataSource source = DataSource::synthetic;
    std::string path;
    int count = 256;
    int target_size = 0;
    SplitRatios ratios;
};

struct AutoencoderPhaseConfig {
    int parameter_budget = 50000;
    int base_width = 0;
    TrainOptions train{1e-3, 1e-4, 8, 100, 42};
};

struct BridgePhaseConfig {
    BackboneSpec backbone;
    TrainOptions train{1e-4, 1e-4, 8, 100, 42};
    std::vector<double> scales{0.75, 1.0, 1.25};
    BoundaryWeightOptions boundary;
};

/// Full-resolution backbone trained on the same split for comparison.
struct BaselineConfig {
    bool enabled = false;
    TrainOptions train{1e-4, 1e-4, 8, 100, 42};
    std::vector<double> scales{0.75, 1.0, 1.25};
};

struct EvaluationConfig {
    double threshold = 0.5;
    int batch = 8;
};

struct ExperimentConfig {
    std::string name = "default";
    std::uint64_t seed = 42;
    DatasetConfig dataset;
    ShapeSpec shapes;
    AutoencoderPhaseConfig encoder;
    AutoencoderPhaseConfig decoder;
    BridgePhaseConfig bridge;
    BaselineConfig baseline;
    EvaluationConfig evaluation;

    int image_size() const { return dataset.target_size > 0 ? dataset.target_size : shapes.N; }

    AutoencoderSpec encoder_spec() const
    {
        return {AutoencoderKind::input_encoder, shapes, encoder.parameter_budget, encoder.base_width};
    }

    AutoencoderSpec decoder_spec() const
    {
        return {AutoencoderKind::label_decoder, shapes, decoder.parameter_budget, decoder.base_width};
    }

    /// Backbone spec with its contract filled in from the shape chain.
    BackboneSpec bridge_spec() const
    {
        const auto in = shapes.encoder_bottleneck();
        const auto out = shapes.decoder_bottleneck();
        BackboneSpec b = with_contract(bridge.backbone, in.c, in.h, out.c, out.h);
        b.param_target = bridge.backbone.param_target;
        return b;
    }

    /// The same backbone at full resolution: 3xNxN -> 1xNxN.
    BackboneSpec baseline_spec() const { return with_contract(bridge.backbone, 3, shapes.N, 1, shapes.N); }

    TrainOptions phase_train(const TrainOptions& t) const
    {
        TrainOptions o = t;
        o.seed = seed;
        return o;
    }

    void validate() const
    {
        require(!name.empty(), ErrorKind::config, "config: name must not be empty");
        shapes.validate();
        require(image_size() == shapes.N, ErrorKind::config,
                "config: dataset.target_size " + std::to_string(image_size()) + " differs from shapes.N " +
                    std::to_string(shapes.N));
        require(dataset.source != DataSource::synthetic || dataset.count >= 1, ErrorKind::config,
                "config: dataset.count must be >= 1");
        require(dataset.source != DataSource::directory || !dataset.path.empty(), ErrorKind::config,
                "config: dataset.path is required for directory sources");
        const auto& r = dataset.ratios;
        require(r.train > 0 && r.val >= 0 && r.test > 0 && std::abs(r.train + r.val + r.test - 1) < 1e-9,
                ErrorKind::config, "config: split ratios must be positive and sum to 1");
        encoder.train.validate("encoder");
        decoder.train.validate("decoder");
        bridge.train.validate("bridge");
        baseline.train.validate("baseline");
        require(!bridge.scales.empty(), ErrorKind::config, "config: bridge.scales must not be empty");
        require(evaluation.threshold > 0 && evaluation.threshold < 1 && evaluation.batch >= 1, ErrorKind::config,
                "config: evaluation threshold must lie in (0, 1) and batch >= 1");
    }
};

// ------------------------------------------------------------------- json

NLOHMANN_JSON_SERIALIZE_ENUM(DataSource, {{DataSource::synthetic, "synthetic"}, {DataSource::directory, "directory"}})

inline void to_json(nlohmann::json& j, const TrainOptions& t)
{
    j = {{"lr", t.lr}, {"weight_decay", t.weight_decay}, {"batch", t.batch}, {"epochs", t.epochs}};
}

inline void from_json(const nlohmann::json& j, TrainOptions& t)
{
    t.lr = j.value("lr", t.lr);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.batch = j.value("batch", t.batch);
    t.epochs = j.value("epochs", t.epochs);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c)
{
    const auto phase = [](const AutoencoderPhaseConfig& p, const char* loss) {
        nlohmann::json o = p.train;
        o["parameter_budget"] = p.parameter_budget;
        o["base_width"] = p.base_width;
        o["loss"] = loss;
        return o;
    };
    nlohmann::json bridge = c.bridge.train;
    bridge["backbone"] = c.bridge.backbone;
    bridge["scales"] = c.bridge.scales;
    bridge["boundary_kernel"] = c.bridge.boundary.kernel;
    bridge["boundary_amplification"] = c.bridge.boundary.amplification;
    bridge["loss"] = "wiou+wbce";
    nlohmann::json baseline = c.baseline.train;
    baseline["enabled"] = c.baseline.enabled;
    baseline["scales"] = c.baseline.scales;
    j = {{"name", c.name},
         {"seed", c.seed},
         {"dataset",
          {{"source", c.dataset.source},
           {"path", c.dataset.path},
           {"count", c.dataset.count},
           {"target_size", c.dataset.target_size},
           {"split_ratios", {c.dataset.ratios.train, c.dataset.ratios.val, c.dataset.ratios.test}}}},
         {"shapes", c.shapes},
         {"encoder", phase(c.encoder, "euclidean")},
         {"decoder", phase(c.decoder, "euclidean")},
         {"bridge", bridge},
         {"baseline", baseline},
         {"evaluation", {{"threshold", c.evaluation.threshold}, {"batch", c.evaluation.batch}}}};
}

namespace detail {

inline void check_loss_name(const nlohmann::json& j, const char* phase, const char* expected)
{
    if (j.contains("loss"))
        require(j.at("loss") == expected, ErrorKind::config,
                std::string("config: ") + phase + ".loss must be \"" + expected + "\"");
}

/// Every key of `user` must exist in `defaults`, recursively. Free-form
/// subtrees (a custom backbone graph) are copied as they are.
inline void merge_strict(nlohmann::json& defaults, const nlohmann::json& user, const std::string& where)
{
    require(user.is_object(), ErrorKind::config, "config: " + (where.empty() ? "root" : where) + " must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        require(defaults.contains(key), ErrorKind::config, "config: unknown key '" + path + "'");
        auto& slot = defaults[key];
        if (slot.is_object() && path != "bridge.backbone.graph")
            merge_strict(slot, value, path);
        else
            slot = value;
    }
}

} // namespace detail

inline void from_json(const nlohmann::json& j, ExperimentConfig& c)
{
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (d.contains("source")) {
            const auto src = d.at("source").get<std::string>();
            require(src == "synthetic" || src == "directory", ErrorKind::config,
                    "config: dataset.source must be \"synthetic\" or \"directory\", got \"" + src + "\"");
            c.dataset.source = d.at("source").get<DataSource>();
        }
        c.dataset.path = d.value("path", c.dataset.path);
        c.dataset.count = d.value("count", c.dataset.count);
        c.dataset.target_size = d.value("target_size", c.dataset.target_size);
        if (d.contains("split_ratios")) {
            const auto& r = d.at("split_ratios");
            require(r.is_array() && r.size() == 3, ErrorKind::config, "config: split_ratios needs three values");
            c.dataset.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        }
    }
    c.shapes = j.value("shapes", c.shapes);
    for (auto [key, phase] : {std::pair{"encoder", &c.encoder}, std::pair{"decoder", &c.decoder}})
        if (j.contains(key)) {
            const auto& p = j.at(key);
            detail::check_loss_name(p, key, "euclidean");
            phase->train = p.get<TrainOptions>();
            phase->parameter_budget = p.value("parameter_budget", phase->parameter_budget);
            phase->base_width = p.value("base_width", phase->base_width);
        }
    if (j.contains("bridge")) {
        const auto& b = j.at("bridge");
        detail::check_loss_name(b, "bridge", "wiou+wbce");
        from_json(b, c.bridge.train);
        c.bridge.backbone = b.value("backbone", c.bridge.backbone);
        c.bridge.scales = b.value("scales", c.bridge.scales);
        c.bridge.boundary.kernel = b.value("boundary_kernel", c.bridge.boundary.kernel);
        c.bridge.boundary.amplification = b.value("boundary_amplification", c.bridge.boundary.amplification);
    }
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        from_json(b, c.baseline.train);
        c.baseline.enabled = b.value("enabled", c.baseline.enabled);
        c.baseline.scales = b.value("scales", c.baseline.scales);
    }
    if (j.contains("evaluation")) {
        c.evaluation.threshold = j.at("evaluation").value("threshold", c.evaluation.threshold);
        c.evaluation.batch = j.at("evaluation").value("batch", c.evaluation.batch);
    }
}

// ---------------------------------------------------------------- presets

/// Full-scale defaults: N=384, e=d=4, E=D=3, U-Net bridge (base 32,
/// depth 4), autoencoder lr 1e-3, bridge lr 1e-4, batch 8, 100 epochs.
inline ExperimentConfig default_config() { return {}; }

/// Small synthetic run for a single CPU: 256 samples at 96 px, e=d=2,
/// shallow U-Net bridge (base 32, depth 2), 20 epochs per phase.
inline ExperimentConfig desk_config()
{
    ExperimentConfig c;
    c.name = "desk";
    c.dataset.count = 256;
    c.shapes = {96, 2, 2, 3, 3};
    for (auto* p : {&c.encoder, &c.decoder}) {
        p->parameter_budget = 6000;
        p->train.epochs = 20;
    }
    c.bridge.backbone.depth = 2;
    c.bridge.train.epochs = 20;
    c.baseline.train.epochs = 20;
    return c;
}

/// The toy U-Net used for static cost comparisons.
inline BackboneSpec toy_unet()
{
    BackboneSpec b;
    b.depth = 2;
    b.base_width = 32;
    return b;
}

// ------------------------------------------------------------- overrides

namespace detail {

inline nlohmann::json parse_override_value(const std::string& text)
{
    auto v = nlohmann::json::parse(text, nullptr, false);
    return v.is_discarded() ? nlohmann::json(text) : v;
}

} // namespace detail

/// Applies "dotted.key=value" to a config document. Values parse as JSON
/// when they can (numbers, booleans, arrays) and as strings otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::usage,
            "override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    std::vector<std::string> parts;
    for (std::size_t start = 0;;) {
        const auto dot = key.find('.', start);
        parts.push_back(key.substr(start, dot - start));
        require(!parts.back().empty(), ErrorKind::usage, "override key '" + key + "' has an empty component");
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    nlohmann::json patch = detail::parse_override_value(assignment.substr(eq + 1));
    for (auto it = parts.rbegin(); it != parts.rend(); ++it)
        patch = nlohmann::json{{*it, std::move(patch)}};
    nlohmann::json merged = doc;
    detail::merge_strict(merged, patch, "");
    doc = std::move(merged);
}

/// Parses a config document on top of the defaults, rejecting unknown keys.
inline ExperimentConfig config_from_json(const nlohmann::json& user, const std::vector<std::string>& overrides = {},
                                         const ExperimentConfig& base = {})
{
    nlohmann::json doc = base;
    try {
        if (!user.is_null())
            detail::merge_strict(doc, user, "");
        for (const auto& o : overrides)
            apply_override(doc, o);
        ExperimentConfig c = doc.get<ExperimentConfig>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {})
{
    std::ifstream f(path);
    require(f.good(), ErrorKind::io, "cannot read config " + path.string());
    const auto doc = nlohmann::json::parse(f, nullptr, false);
    require(!doc.is_discarded(), ErrorKind::config, "config " + path.string() + " is not valid JSON");
    return config_from_json(doc, overrides);
}

// ----------------------------------------------------------------- hashes

inline nlohmann::json canonical(const ExperimentConfig& c) { return c; }

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(canonical(c).dump()); }

/// Inputs that determine the output of each phase. Downstream phases
/// include their upstream inputs, so any change reruns everything after it.
inline std::string phase_hash(const ExperimentConfig& c, const std::string& phase)
{
    const nlohmann::json j = canonical(c);
    nlohmann::json key{{"seed", j["seed"]}, {"dataset", j["dataset"]}, {"shapes", j["shapes"]}};
    if (phase == "encoder" || phase == "bridge")
        key["encoder"] = j["encoder"];
    if (phase == "decoder" || phase == "bridge")
        key["decoder"] = j["decoder"];
    if (phase == "bridge")
        key["bridge"] = j["bridge"];
    if (phase == "baseline") {
        key["baseline"] = j["baseline"];
        key["backbone"] = j["bridge"]["backbone"];
    }
    require(key.size() > 3 || phase == "data", ErrorKind::config, "unknown phase '" + phase + "'");
    key["phase"] = phase;
    return sha256_hex(key.dump());
}

} // namespace treenet

#endif // TREENET_CONFIG_HPP
