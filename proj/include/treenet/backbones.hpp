#ifndef TREENET_BACKBONES_HPP
#define TREENET_BACKBONES_HPP

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cost.hpp"
#include "layer_graph.hpp"
#include "network.hpp"

namespace treenet {

enum class BackboneKind { unet, unetpp, pvt_stub, custom };

NLOHMANN_JSON_SERIALIZE_ENUM(BackboneKind, {{BackboneKind::unet, "unet"},
                                            {BackboneKind::unetpp, "unetpp"},
                                            {BackboneKind::pvt_stub, "pvt_stub"},
                                            {BackboneKind::custom, "custom"}})

inline const char* to_string(BackboneKind k)
{
    switch (k) {
    case BackboneKind::unet: return "unet";
    case BackboneKind::unetpp: return "unetpp";
    case BackboneKind::pvt_stub: return "pvt_stub";
    case BackboneKind::custom: return "custom";
    }
    return "unknown";
}

/// Segmentation backbone contract: in_channels x in_size^2 ->
/// out_channels x out_size^2. depth/base_width/batch_norm shape the
/// built-in families; `graph` holds the layer graph of a custom backbone.
struct BackboneSpec {
    BackboneKind name = BackboneKind::unet;
    int in_channels = 3;
    int out_channels = 3;
    int in_size = 96;
    int out_size = 96;
    int depth = 4;
    int base_width = 32;
    bool batch_norm = true;
    std::uint64_t param_target = 0; // 0: unchecked; otherwise +-20%
    nlohmann::json graph;           // custom only

    bool operator==(const BackboneSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const BackboneSpec& s)
{
    j = {{"name", s.name},       {"in_channels", s.in_channels}, {"out_channels", s.out_channels},
         {"in_size", s.in_size}, {"out_size", s.out_size},       {"depth", s.depth},
         {"base_width", s.base_width}, {"batch_norm", s.batch_norm}, {"param_target", s.param_target}};
    j["graph"] = s.graph;
}

inline void from_json(const nlohmann::json& j, BackboneSpec& s)
{
    if (j.contains("name")) {
        const auto name = j.at("name").get<std::string>();
        bool known = false;
        for (auto k : {BackboneKind::unet, BackboneKind::unetpp, BackboneKind::pvt_stub, BackboneKind::custom})
            if (name == to_string(k)) {
                s.name = k;
                known = true;
            }
        require(known, ErrorKind::config, "unknown backbone '" + name + "' (unet, unetpp, pvt_stub, custom)");
    }
    s.in_channels = j.value("in_channels", s.in_channels);
    s.out_channels = j.value("out_channels", s.out_channels);
    s.in_size = j.value("in_size", s.in_size);
    s.out_size = j.value("out_size", s.out_size);
    s.depth = j.value("depth", s.depth);
    s.base_width = j.value("base_width", s.base_width);
    s.batch_norm = j.value("batch_norm", s.batch_norm);
    s.param_target = j.value("param_target", s.param_target);
    s.graph = j.value("graph", nlohmann::json());
}

inline std::string contract_string(const BackboneSpec& s)
{
    return std::to_string(s.in_channels) + "x" + std::to_string(s.in_size) + "x" + std::to_string(s.in_size) + " -> " +
           std::to_string(s.out_channels) + "x" + std::to_string(s.out_size) + "x" + std::to_string(s.out_size);
}

/// Spatial divisor every training size must respect.
inline int downsampling_factor(const BackboneSpec& s)
{
    switch (s.name) {
    case BackboneKind::unet:
    case BackboneKind::unetpp: return 1 << s.depth;
    case BackboneKind::pvt_stub: return 4;
    case BackboneKind::custom: return 1;
    }
    return 1;
}

namespace detail {

inline int conv_block(LayerGraph& g, int x, int channels, bool bn, const std::string& name)
{
    for (int r = 0; r < 2; ++r) {
        const std::string n = name + "_" + std::to_string(r);
        x = g.conv2d(x, channels, 3, 1, 1, n);
        if (bn)
            x = g.norm(x, n + "_bn");
        x = g.activation(x, Activation::relu, n + "_relu");
    }
    return x;
}

/// Optional rational resize from the current size to `out_size`, then the
/// output sigmoid.
inline void finish(LayerGraph& g, int x, int out_size)
{
    const int cur = g.shape_of(x).h;
    if (cur != out_size) {
        const int k = std::gcd(cur, out_size);
        x = g.upsample(x, ResizeMode::bilinear, out_size / k, cur / k, "resize");
    }
    g.activation(x, Activation::sigmoid, "output_sigmoid");
}

inline void check_contract(const BackboneSpec& s)
{
    require(s.in_channels >= 1 && s.out_channels >= 1, ErrorKind::config, "backbone: channel counts must be positive");
    require(s.in_size >= 1 && s.out_size >= 1, ErrorKind::config, "backbone: sizes must be positive");
    if (s.name == BackboneKind::unet || s.name == BackboneKind::unetpp) {
        require(s.depth >= 1 && s.base_width >= 1, ErrorKind::config, "backbone: depth and base width must be >= 1");
        require(s.depth < 30 && (s.in_size >> s.depth) >= 1, ErrorKind::shape,
                std::string(to_string(s.name)) + ": depth " + std::to_string(s.depth) + " collapses " +
                    std::to_string(s.in_size) + " px below 1 px (spatial collapse)");
        require(s.in_size % (1 << s.depth) == 0, ErrorKind::shape,
                std::string(to_string(s.name)) + ": input size " + std::to_string(s.in_size) +
                    " is not divisible by 2^depth = " + std::to_string(1 << s.depth));
    }
}

inline LayerGraph unet_graph(const BackboneSpec& s)
{
    LayerGraph g({s.in_channels, s.in_size, s.in_size}, "unet");
    std::vector<int> skips;
    int x = g.input();
    for (int l = 0; l < s.depth; ++l) {
        x = conv_block(g, x, s.base_width << l, s.batch_norm, "enc" + std::to_string(l));
        skips.push_back(x);
        x = g.pool(x, PoolMode::max, 2, 2, "pool" + std::to_string(l));
    }
    x = conv_block(g, x, s.base_width << s.depth, s.batch_norm, "mid");
    for (int l = s.depth - 1; l >= 0; --l) {
        x = g.transposed_conv2d(x, s.base_width << l, 2, 2, 0, "up" + std::to_string(l));
        x = g.concat({x, skips[static_cast<std::size_t>(l)]}, "cat" + std::to_string(l));
        x = conv_block(g, x, s.base_width << l, s.batch_norm, "dec" + std::to_string(l));
    }
    x = g.conv2d(x, s.out_channels, 1, 1, 0, "head");
    finish(g, x, s.out_size);
    return g;
}

/// Nested U-Net: node (i, j) sees every earlier node of row i plus the
/// upsampled node (i+1, j-1).
inline LayerGraph unetpp_graph(const BackboneSpec& s)
{
    LayerGraph g({s.in_channels, s.in_size, s.in_size}, "unetpp");
    const int L = s.depth;
    std::vector<std::vector<int>> X(static_cast<std::size_t>(L + 1));
    const auto tag = [](int i, int j) { return "x" + std::to_string(i) + std::to_string(j); };
    for (int i = 0; i <= L; ++i) {
        const int in = i == 0 ? g.input() : g.pool(X[i - 1][0], PoolMode::max, 2, 2, "pool" + std::to_string(i - 1));
        X[i].push_back(conv_block(g, in, s.base_width << i, s.batch_norm, tag(i, 0)));
    }
    for (int j = 1; j <= L; ++j)
        for (int i = 0; i + j <= L; ++i) {
            std::vector<int> parts = X[i];
            parts.push_back(g.upsample(X[i + 1][j - 1], ResizeMode::nearest, 2, 1, tag(i, j) + "_up"));
            const int cat = g.concat(parts, tag(i, j) + "_cat");
            X[i].push_back(conv_block(g, cat, s.base_width << i, s.batch_norm, tag(i, j)));
        }
    const int x = g.conv2d(X[0][static_cast<std::size_t>(L)], s.out_channels, 1, 1, 0, "head");
    finish(g, x, s.out_size);
    return g;
}

/// Convolutional stand-in for a pyramid-transformer segmenter: a /4 stem,
/// three 3x3 blocks at 128 channels, a 1x1 head and a resize to out_size.
inline LayerGraph pvt_stub_graph(const BackboneSpec& s)
{
    require(s.in_size % 4 == 0, ErrorKind::shape,
            "pvt_stub: input size " + std::to_string(s.in_size) + " is not divisible by 4");
    LayerGraph g({s.in_channels, s.in_size, s.in_size}, "pvt_stub");
    int x = g.conv2d(g.input(), 64, 3, 2, 1, "stem0");
    x = g.activation(x, Activation::relu, "stem0_relu");
    x = g.conv2d(x, 128, 3, 2, 1, "stem1");
    x = g.activation(x, Activation::relu, "stem1_relu");
    for (int b = 0; b < 3; ++b) {
        const std::string n = "block" + std::to_string(b);
        x = g.conv2d(x, 128, 3, 1, 1, n);
        if (s.batch_norm)
            x = g.norm(x, n + "_bn");
        x = g.activation(x, Activation::relu, n + "_relu");
    }
    x = g.conv2d(x, s.out_channels, 1, 1, 0, "head");
    finish(g, x, s.out_size);
    return g;
}

} // namespace detail

/// Layer graph for a backbone spec; enforces the shape contract and the
/// optional parameter target.
inline LayerGraph backbone_graph(const BackboneSpec& s)
{
    detail::check_contract(s);
    LayerGraph g;
    switch (s.name) {
    case BackboneKind::unet: g = detail::unet_graph(s); break;
    case BackboneKind::unetpp: g = detail::unetpp_graph(s); break;
    case BackboneKind::pvt_stub: g = detail::pvt_stub_graph(s); break;
    case BackboneKind::custom:
        require(!s.graph.is_null(), ErrorKind::config, "custom backbone needs a layer graph");
        g = LayerGraph::from_json(s.graph);
        break;
    }
    const TensorShape want_in{s.in_channels, s.in_size, s.in_size};
    const TensorShape want_out{s.out_channels, s.out_size, s.out_size};
    require(g.input_shape() == want_in && g.output_shape() == want_out, ErrorKind::shape,
            std::string(to_string(s.name)) + ": graph maps " + g.input_shape().str() + " -> " + g.output_shape().str() +
                ", contract is " + want_in.str() + " -> " + want_out.str());
    if (s.param_target > 0) {
        const double p = double(count_params(g));
        const double t = double(s.param_target);
        require(p >= 0.8 * t && p <= 1.2 * t, ErrorKind::config,
                std::string(to_string(s.name)) + ": " + std::to_string(std::uint64_t(p)) +
                    " parameters, outside +-20% of the target " + std::to_string(s.param_target));
    }
    return g;
}

inline Network<float> build_backbone(const BackboneSpec& s, std::uint64_t seed)
{
    return Network<float>(backbone_graph(s), seed);
}

/// Same architecture re-targeted to a different contract (e.g. the
/// full-resolution original of a bridge backbone).
inline BackboneSpec with_contract(BackboneSpec s, int in_channels, int in_size, int out_channels, int out_size)
{
    s.in_channels = in_channels;
    s.in_size = in_size;
    s.out_channels = out_channels;
    s.out_size = out_size;
    s.param_target = 0;
    return s;
}

} // namespace treenet

#endif // TREENET_BACKBONES_HPP
