#ifndef TREENET_PROFILER_HPP
#define TREENET_PROFILER_HPP

#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "assembly.hpp"
#include "autoencoder.hpp"
#include "backbones.hpp"
#include "cost.hpp"
#include "memory.hpp"

namespace treenet {

inline constexpr const char* kMemoryMethod = "tensor allocator high-water mark, inference forward";

/// Peak bytes held by tensors while running one inference pass of `net` on
/// a zero input of `input` shape, plus the parameter bytes. Tensors that
/// were live before the call are not counted.
inline std::size_t measure_peak_bytes(const Network<float>& net, Shape4 input)
{
    auto& tracker = MemoryTracker::instance();
    const std::size_t before = tracker.current();
    {
        const Tensor<float> x(input);
        tracker.reset_peak();
        const Tensor<float> y = net.infer(x);
    }
    return tracker.peak() - before + net.parameter_count() * sizeof(float);
}

inline double measure_peak_memory(const Network<float>& net, Shape4 input)
{
    return double(measure_peak_bytes(net, input)) / 1e9;
}

struct EfficiencyRow {
    std::string model;
    std::string variant; // "treenet" or "original"
    int batch = 1;
    double flops_g = 0;
    double params_m = 0;
    std::optional<double> peak_mem_gb; // empty: not measured
    std::string memory_method = "unavailable";

    nlohmann::json to_json() const
    {
        return {{"type", "efficiency"},
                {"model", model},
                {"variant", variant},
                {"batch", batch},
                {"flops_g", flops_g},
                {"params_m", params_m},
                {"peak_mem_gb", peak_mem_gb ? nlohmann::json(*peak_mem_gb) : nlohmann::json(nullptr)},
                {"memory_method", memory_method}};
    }

    static EfficiencyRow from_json(const nlohmann::json& j)
    {
        EfficiencyRow r;
        r.model = j.at("model").get<std::string>();
        r.variant = j.at("variant").get<std::string>();
        r.batch = j.at("batch").get<int>();
        r.flops_g = j.at("flops_g").get<double>();
        r.params_m = j.at("params_m").get<double>();
        if (!j.at("peak_mem_gb").is_null())
            r.peak_mem_gb = j.at("peak_mem_gb").get<double>();
        r.memory_method = j.value("memory_method", r.memory_method);
        return r;
    }
};

/// A backbone family compared at full resolution and inside Tree-NET.
struct ProfileFamily {
    std::string name;
    BackboneSpec backbone; // architecture; contracts are derived from shapes
    ShapeSpec shapes;
    int autoencoder_budget = 50000;
    std::optional<AutoencoderSpec> encoder; // exact specs, e.g. from a config
    std::optional<AutoencoderSpec> decoder;

    AutoencoderSpec encoder_spec() const
    {
        return encoder ? *encoder : AutoencoderSpec{AutoencoderKind::input_encoder, shapes, autoencoder_budget, 0};
    }
    AutoencoderSpec decoder_spec() const
    {
        return decoder ? *decoder : AutoencoderSpec{AutoencoderKind::label_decoder, shapes, autoencoder_budget, 0};
    }
    BackboneSpec original_spec() const { return with_contract(backbone, 3, shapes.N, 1, shapes.N); }
    BackboneSpec bridge_spec() const
    {
        const auto in = shapes.encoder_bottleneck();
        const auto out = shapes.decoder_bottleneck();
        return with_contract(backbone, in.c, in.h, out.c, out.h);
    }
};

/// unet, unetpp and the shallow toy U-Net with e=d=4 and 3-channel
/// bottlenecks; pvt_stub with e=4, d=16 and a 16x24x24 label bottleneck.
inline std::vector<ProfileFamily> default_families(int N = 384)
{
    BackboneSpec unet;
    BackboneSpec unetpp;
    unetpp.name = BackboneKind::unetpp;
    BackboneSpec pvt;
    pvt.name = BackboneKind::pvt_stub;
    BackboneSpec toy;
    toy.depth = 2;
    return {{"U-NET", unet, {N, 4, 4, 3, 3}},
            {"U-NET++", unetpp, {N, 4, 4, 3, 3}},
            {"PVT-stub", pvt, {N, 4, 16, 3, 16}},
            {"toy U-NET", toy, {N, 4, 4, 3, 3}}};
}

/// Static cost of the three deployed parts and of the original.
struct FamilyCost {
    std::string name;
    LayerGraph original;
    LayerGraph encoder_half;
    LayerGraph bridge;
    LayerGraph decoder_half;

    LayerGraph treenet() const
    {
        return LayerGraph::chain(LayerGraph::chain(encoder_half, bridge, "treenet"), decoder_half, "treenet");
    }

    std::uint64_t treenet_flops(int batch = 1) const
    {
        return count_flops(encoder_half, batch) + count_flops(bridge, batch) + count_flops(decoder_half, batch);
    }

    std::uint64_t treenet_params() const
    {
        return count_params(encoder_half) + count_params(bridge) + count_params(decoder_half);
    }

    double flop_ratio() const { return double(count_flops(original, 1)) / double(treenet_flops(1)); }
};

inline FamilyCost family_cost(const ProfileFamily& f)
{
    const auto enc = f.encoder_spec();
    const auto dec = f.decoder_spec();
    return {f.name, backbone_graph(f.original_spec()), enc.encoder_graph(enc.resolve_base_width()),
            backbone_graph(f.bridge_spec()), dec.decoder_graph(dec.resolve_base_width())};
}

struct ComparisonReport {
    std::vector<EfficiencyRow> rows;
    std::vector<std::pair<std::string, double>> flop_ratios; // original / treenet per family

    std::vector<nlohmann::json> to_records() const
    {
        std::vector<nlohmann::json> out;
        for (const auto& r : rows)
            out.push_back(r.to_json());
        for (const auto& [name, ratio] : flop_ratios)
            out.push_back({{"type", "flop_ratio"}, {"model", name}, {"ratio", ratio}});
        return out;
    }

    static ComparisonReport from_records(const std::vector<nlohmann::json>& records)
    {
        ComparisonReport c;
        for (const auto& j : records) {
            const auto type = j.value("type", "");
            if (type == "efficiency")
                c.rows.push_back(EfficiencyRow::from_json(j));
            else if (type == "flop_ratio")
                c.flop_ratios.emplace_back(j.at("model").get<std::string>(), j.at("ratio").get<double>());
        }
        return c;
    }
};

/// Rows for batch 1 and 8 of every family in both variants. Peak memory is
/// measured only when `measure_memory` is set; the networks are then built
/// with seeded random weights (weights do not affect memory).
inline ComparisonReport compare(const std::vector<ProfileFamily>& families, bool measure_memory = false,
                                const std::vector<int>& batches = {1, 8})
{
    ComparisonReport report;
    for (const auto& f : families) {
        const FamilyCost cost = family_cost(f);
        std::optional<Network<float>> original;
        std::optional<AssembledTreeNet> tree;
        if (measure_memory) {
            original.emplace(cost.original, 1);
            tree.emplace(build_autoencoder(f.encoder_spec(), 2), Network<float>(cost.bridge, 3),
                         build_autoencoder(f.decoder_spec(), 4));
        }
        for (int b : batches) {
            for (const bool is_tree : {true, false}) {
                EfficiencyRow r;
                r.model = f.name;
                r.variant = is_tree ? "treenet" : "original";
                r.batch = b;
                r.flops_g = to_giga(is_tree ? cost.treenet_flops(b) : count_flops(cost.original, b));
                r.params_m = double(is_tree ? cost.treenet_params() : count_params(cost.original)) / 1e6;
                if (measure_memory) {
                    const Network<float>& net = is_tree ? tree->network() : *original;
                    r.peak_mem_gb = measure_peak_memory(net, Shape4(b, 3, f.shapes.N, f.shapes.N));
                    r.memory_method = kMemoryMethod;
                }
                report.rows.push_back(std::move(r));
            }
        }
        report.flop_ratios.emplace_back(f.name, cost.flop_ratio());
    }
    return report;
}

inline std::string render_efficiency_table(const ComparisonReport& report)
{
    std::size_t width = 5;
    for (const auto& r : report.rows)
        width = std::max(width, r.model.size());
    std::ostringstream out;
    out << std::left << std::setw(int(width)) << "Model" << " | " << std::setw(8) << "Variant" << " | " << std::setw(5)
        << "Batch" << " | " << std::setw(11) << "FLOPs (G)" << " | " << std::setw(10) << "Params (M)" << " | "
        << "Peak Memory (GB)" << '\n'
        << std::string(width + 70, '-') << '\n';
    for (const auto& r : report.rows) {
        out << std::setw(int(width)) << r.model << " | " << std::setw(8) << r.variant << " | " << std::setw(5)
            << r.batch << " | " << std::fixed << std::setprecision(3) << std::setw(11) << r.flops_g << " | "
            << std::setw(10) << r.params_m << " | ";
        if (r.peak_mem_gb)
            out << std::setprecision(4) << *r.peak_mem_gb;
        else
            out << "unavailable";
        out << '\n';
    }
    if (!report.flop_ratios.empty()) {
        out << '\n';
        for (const auto& [name, ratio] : report.flop_ratios)
            out << "FLOP reduction " << name << ": " << std::setprecision(2) << ratio << "x\n";
    }
    const auto measured = std::find_if(report.rows.begin(), report.rows.end(),
                                       [](const EfficiencyRow& r) { return r.peak_mem_gb.has_value(); });
    if (measured != report.rows.end())
        out << "Memory: " << measured->memory_method << '\n';
    return out.str();
}

} // namespace treenet

#endif // TREENET_PROFILER_HPP
