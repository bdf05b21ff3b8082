#ifndef TREENET_COST_HPP
#define TREENET_COST_HPP

#include <cstdint>

#include "layer_graph.hpp"

namespace treenet {

/// Analytical operation count of one node for a single sample.
/// Multiply-accumulates count as 2 ops; elementwise layers as 1 op per
/// output element. Transposed convolutions are counted over their input
/// positions, which is where their multiply-accumulates happen.
inline std::uint64_t node_flops(const LayerNode& node, TensorShape in)
{
    const std::uint64_t out_elems = node.out.size();
    const std::uint64_t k2 = static_cast<std::uint64_t>(node.kernel) * node.kernel;
    switch (node.kind) {
    case LayerKind::input:
    case LayerKind::concat:
        return 0;
    case LayerKind::conv2d:
        return 2 * k2 * in.c * static_cast<std::uint64_t>(node.channels) * node.out.h * node.out.w;
    case LayerKind::transposed_conv2d:
        return 2 * k2 * in.c * static_cast<std::uint64_t>(node.channels) * in.h * in.w;
    case LayerKind::dense:
        return 2 * in.size() * static_cast<std::uint64_t>(node.channels);
    case LayerKind::pool:
    case LayerKind::upsample:
    case LayerKind::nonlinearity:
    case LayerKind::norm:
        return out_elems;
    case LayerKind::add:
        return out_elems * (node.inputs.size() - 1);
    }
    fail(ErrorKind::config, "count_flops: unknown layer kind in '" + node.name + "'");
}

/// Total operations for a forward pass over `batch` samples.
inline std::uint64_t count_flops(const LayerGraph& g, int batch = 1)
{
    require(batch >= 1, ErrorKind::config, "count_flops: batch must be >= 1");
    g.validate();
    std::uint64_t total = 0;
    for (const auto& node : g.nodes()) {
        const TensorShape in = node.inputs.empty() ? node.out : g.shape_of(node.inputs.front());
        total += node_flops(node, in);
    }
    return total * static_cast<std::uint64_t>(batch);
}

inline double to_giga(std::uint64_t ops) { return static_cast<double>(ops) * 1e-9; }

/// Trainable parameters implied by the graph (weights + biases; gamma and
/// beta for norms).
inline std::uint64_t count_params(const LayerGraph& g)
{
    std::uint64_t total = 0;
    for (const auto& node : g.nodes()) {
        const TensorShape in = node.inputs.empty() ? node.out : g.shape_of(node.inputs.front());
        const std::uint64_t k2 = static_cast<std::uint64_t>(node.kernel) * node.kernel;
        switch (node.kind) {
        case LayerKind::conv2d:
        case LayerKind::transposed_conv2d:
            total += k2 * in.c * node.channels + node.channels;
            break;
        case LayerKind::dense:
            total += in.size() * node.channels + node.channels;
            break;
        case LayerKind::norm:
            total += 2 * static_cast<std::uint64_t>(in.c);
            break;
        default:
            break;
        }
    }
    return total;
}

} // namespace treenet

#endif // TREENET_COST_HPP
