#ifndef TREENET_LAYER_GRAPH_HPP
#define TREENET_LAYER_GRAPH_HPP

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "tensor.hpp"

namespace treenet {

enum class LayerKind { input, conv2d, transposed_conv2d, dense, pool, upsample, nonlinearity, norm, add, concat };
enum class Activation { relu, sigmoid };
enum class PoolMode { max, avg };
enum class ResizeMode { nearest, bilinear };

NLOHMANN_JSON_SERIALIZE_ENUM(LayerKind, {{LayerKind::input, "input"},
                                         {LayerKind::conv2d, "conv2d"},
                                         {LayerKind::transposed_conv2d, "transposed_conv2d"},
                                         {LayerKind::dense, "dense"},
                                         {LayerKind::pool, "pool"},
                                         {LayerKind::upsample, "upsample"},
                                         {LayerKind::nonlinearity, "nonlinearity"},
                                         {LayerKind::norm, "norm"},
                                         {LayerKind::add, "add"},
                                         {LayerKind::concat, "concat"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::relu, "relu"}, {Activation::sigmoid, "sigmoid"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PoolMode, {{PoolMode::max, "max"}, {PoolMode::avg, "avg"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ResizeMode, {{ResizeMode::nearest, "nearest"}, {ResizeMode::bilinear, "bilinear"}})

inline const char* to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::transposed_conv2d: return "transposed_conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::pool: return "pool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::nonlinearity: return "nonlinearity";
    case LayerKind::norm: return "norm";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
    }
    return "?";
}

/// One typed layer. Fields that do not apply to a kind keep their defaults.
struct LayerNode {
    LayerKind kind = LayerKind::input;
    std::string name;
    std::vector<int> inputs;

    int channels = 0; // output channels (conv, transposed conv) or output features (dense)
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    Activation activation = Activation::relu;
    PoolMode pool_mode = PoolMode::max;
    ResizeMode resize_mode = ResizeMode::nearest;
    int scale_num = 1; // upsample factor scale_num / scale_den
    int scale_den = 1;

    TensorShape out; // declared output shape at the graph's nominal input size
};

/// Output shape of `node` given the shapes of its inputs. Throws a shape
/// error naming the node when the inputs are incompatible or collapse.
inline TensorShape infer_node_shape(const LayerNode& node, const std::vector<TensorShape>& in)
{
    const auto where = [&] { return "layer '" + node.name + "' (" + to_string(node.kind) + "): "; };
    const auto need_inputs = [&](std::size_t lo, std::size_t hi) {
        require(in.size() >= lo && in.size() <= hi, ErrorKind::shape, where() + "wrong number of inputs");
    };
    const auto positive = [&](TensorShape s) {
        require(s.c >= 1 && s.h >= 1 && s.w >= 1, ErrorKind::shape,
                where() + "spatial collapse, output would be " + s.str());
        return s;
    };

    switch (node.kind) {
    case LayerKind::input:
        fail(ErrorKind::shape, where() + "input node cannot be inferred");
    case LayerKind::conv2d: {
        need_inputs(1, 1);
        require(node.kernel >= 1 && node.stride >= 1 && node.padding >= 0 && node.channels >= 1, ErrorKind::shape,
                where() + "invalid convolution parameters");
        const int h = in[0].h + 2 * node.padding - node.kernel;
        const int w = in[0].w + 2 * node.padding - node.kernel;
        require(h >= 0 && w >= 0, ErrorKind::shape, where() + "kernel larger than padded input " + in[0].str());
        return positive({node.channels, h / node.stride + 1, w / node.stride + 1});
    }
    case LayerKind::transposed_conv2d: {
        need_inputs(1, 1);
        require(node.kernel >= 1 && node.stride >= 1 && node.padding >= 0 && node.channels >= 1, ErrorKind::shape,
                where() + "invalid transposed convolution parameters");
        const int h = (in[0].h - 1) * node.stride - 2 * node.padding + node.kernel;
        const int w = (in[0].w - 1) * node.stride - 2 * node.padding + node.kernel;
        return positive({node.channels, h, w});
    }
    case LayerKind::dense:
        need_inputs(1, 1);
        require(node.channels >= 1, ErrorKind::shape, where() + "dense layer needs output features");
        return {node.channels, 1, 1};
    case LayerKind::pool: {
        need_inputs(1, 1);
        require(node.kernel >= 1 && node.stride >= 1, ErrorKind::shape, where() + "invalid pool parameters");
        require(in[0].h >= node.kernel && in[0].w >= node.kernel, ErrorKind::shape,
                where() + "spatial collapse, input " + in[0].str() + " smaller than pool window");
        return positive({in[0].c, (in[0].h - node.kernel) / node.stride + 1, (in[0].w - node.kernel) / node.stride + 1});
    }
    case LayerKind::upsample: {
        need_inputs(1, 1);
        require(node.scale_num >= 1 && node.scale_den >= 1, ErrorKind::shape, where() + "invalid scale");
        if (node.resize_mode == ResizeMode::nearest)
            require(node.scale_den == 1, ErrorKind::shape, where() + "nearest upsampling needs an integer factor");
        require(in[0].h * node.scale_num % node.scale_den == 0 && in[0].w * node.scale_num % node.scale_den == 0,
                ErrorKind::shape,
                where() + "input " + in[0].str() + " not divisible by scale " + std::to_string(node.scale_num) + "/" +
                    std::to_string(node.scale_den));
        return positive({in[0].c, in[0].h * node.scale_num / node.scale_den, in[0].w * node.scale_num / node.scale_den});
    }
    case LayerKind::nonlinearity:
    case LayerKind::norm:
        need_inputs(1, 1);
        return in[0];
    case LayerKind::add:
        need_inputs(2, 64);
        for (const auto& s : in)
            require(s == in[0], ErrorKind::shape, where() + "mismatched inputs " + s.str() + " vs " + in[0].str());
        return in[0];
    case LayerKind::concat: {
        need_inputs(2, 64);
        int c = 0;
        for (const auto& s : in) {
            require(s.h == in[0].h && s.w == in[0].w, ErrorKind::shape,
                    where() + "spatial mismatch " + s.str() + " vs " + in[0].str());
            c += s.c;
        }
        return {c, in[0].h, in[0].w};
    }
    }
    fail(ErrorKind::shape, where() + "unknown layer kind");
}

/// Declarative network description: an ordered DAG of typed layers whose
/// node 0 is the input and whose last node is the output. Used to build
/// executable networks and for analytical cost accounting.
class LayerGraph {
public:
    LayerGraph() : LayerGraph(TensorShape{1, 1, 1}) {}

    explicit LayerGraph(TensorShape input, std::string name = "graph") : name_(std::move(name))
    {
        require(input.c >= 1 && input.h >= 1 && input.w >= 1, ErrorKind::shape, "invalid graph input " + input.str());
        LayerNode node;
        node.kind = LayerKind::input;
        node.name = "input";
        node.channels = input.c;
        node.out = input;
        nodes_.push_back(std::move(node));
    }

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    const std::vector<LayerNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    const LayerNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }

    int input() const { return 0; }
    int output() const { return static_cast<int>(nodes_.size()) - 1; }
    TensorShape input_shape() const { return nodes_.front().out; }
    TensorShape output_shape() const { return nodes_.back().out; }
    TensorShape shape_of(int i) const { return node(i).out; }

    int conv2d(int from, int channels, int kernel, int stride, int padding, std::string name = {})
    {
        LayerNode n = make(LayerKind::conv2d, {from}, std::move(name));
        n.channels = channels;
        n.kernel = kernel;
        n.stride = stride;
        n.padding = padding;
        return push(std::move(n));
    }

    int transposed_conv2d(int from, int channels, int kernel, int stride, int padding, std::string name = {})
    {
        LayerNode n = make(LayerKind::transposed_conv2d, {from}, std::move(name));
        n.channels = channels;
        n.kernel = kernel;
        n.stride = stride;
        n.padding = padding;
        return push(std::move(n));
    }

    int dense(int from, int features, std::string name = {})
    {
        LayerNode n = make(LayerKind::dense, {from}, std::move(name));
        n.channels = features;
        return push(std::move(n));
    }

    int pool(int from, PoolMode mode, int kernel, int stride, std::string name = {})
    {
        LayerNode n = make(LayerKind::pool, {from}, std::move(name));
        n.pool_mode = mode;
        n.kernel = kernel;
        n.stride = stride;
        return push(std::move(n));
    }

    int upsample(int from, ResizeMode mode, int scale_num, int scale_den = 1, std::string name = {})
    {
        LayerNode n = make(LayerKind::upsample, {from}, std::move(name));
        n.resize_mode = mode;
        n.scale_num = scale_num;
        n.scale_den = scale_den;
        return push(std::move(n));
    }

    int activation(int from, Activation act, std::string name = {})
    {
        LayerNode n = make(LayerKind::nonlinearity, {from}, std::move(name));
        n.activation = act;
        return push(std::move(n));
    }

    int norm(int from, std::string name = {}) { return push(make(LayerKind::norm, {from}, std::move(name))); }

    int add(std::vector<int> from, std::string name = {})
    {
        return push(make(LayerKind::add, std::move(from), std::move(name)));
    }

    int concat(std::vector<int> from, std::string name = {})
    {
        return push(make(LayerKind::concat, std::move(from), std::move(name)));
    }

    /// Per-node output shapes for a given input shape.
    std::vector<TensorShape> infer(TensorShape input) const
    {
        require(input.c == input_shape().c, ErrorKind::shape,
                name_ + ": expected " + std::to_string(input_shape().c) + " input channels, got " + input.str());
        std::vector<TensorShape> shapes(nodes_.size());
        shapes[0] = input;
        std::vector<TensorShape> in;
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            in.clear();
            for (int j : nodes_[i].inputs)
                in.push_back(shapes[static_cast<std::size_t>(j)]);
            shapes[i] = infer_node_shape(nodes_[i], in);
        }
        return shapes;
    }

    /// Every node's declared output equals the inferred one.
    void validate() const
    {
        const auto shapes = infer(input_shape());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const LayerNode& n = nodes_[i];
            require(shapes[i] == n.out, ErrorKind::shape,
                    "layer '" + n.name + "' declares " + n.out.str() + " but infers " + shapes[i].str());
            for (int j : n.inputs)
                require(j >= 0 && static_cast<std::size_t>(j) < i, ErrorKind::shape,
                        "layer '" + n.name + "' references a later or invalid node");
        }
    }

    /// Same topology re-declared for a different input spatial size.
    LayerGraph with_input(TensorShape input) const
    {
        const auto shapes = infer(input);
        LayerGraph g = *this;
        for (std::size_t i = 0; i < g.nodes_.size(); ++i)
            g.nodes_[i].out = shapes[i];
        return g;
    }

    /// Index of the last node that consumes each node's output (the graph
    /// output counts as consumed at the end).
    std::vector<int> last_use() const
    {
        std::vector<int> last(nodes_.size(), -1);
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            for (int j : nodes_[i].inputs)
                last[static_cast<std::size_t>(j)] = static_cast<int>(i);
        last.back() = static_cast<int>(nodes_.size());
        return last;
    }

    /// `first` followed by `second`, with second's input replaced by first's
    /// output. Throws naming the junction when the shapes disagree.
    static LayerGraph chain(const LayerGraph& first, const LayerGraph& second, std::string name = {})
    {
        require(first.output_shape() == second.input_shape(), ErrorKind::shape,
                "junction " + first.name() + " -> " + second.name() + ": " + first.name() + " emits " +
                    first.output_shape().str() + " but " + second.name() + " expects " + second.input_shape().str());
        LayerGraph g = first;
        g.name_ = name.empty() ? first.name() + "+" + second.name() : std::move(name);
        const int offset = static_cast<int>(first.nodes_.size()) - 1;
        for (std::size_t i = 1; i < second.nodes_.size(); ++i) {
            LayerNode n = second.nodes_[i];
            for (int& j : n.inputs)
                j = j == 0 ? first.output() : j + offset;
            n.name = second.name() + "." + n.name;
            g.nodes_.push_back(std::move(n));
        }
        return g;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : nodes_) {
            nlohmann::json j{{"kind", n.kind}, {"name", n.name}, {"inputs", n.inputs},
                             {"out", {n.out.c, n.out.h, n.out.w}}};
            switch (n.kind) {
            case LayerKind::conv2d:
            case LayerKind::transposed_conv2d:
                j["channels"] = n.channels;
                j["kernel"] = n.kernel;
                j["stride"] = n.stride;
                j["padding"] = n.padding;
                break;
            case LayerKind::dense:
                j["channels"] = n.channels;
                break;
            case LayerKind::pool:
                j["mode"] = n.pool_mode;
                j["kernel"] = n.kernel;
                j["stride"] = n.stride;
                break;
            case LayerKind::upsample:
                j["mode"] = n.resize_mode;
                j["scale"] = {n.scale_num, n.scale_den};
                break;
            case LayerKind::nonlinearity:
                j["activation"] = n.activation;
                break;
            default:
                break;
            }
            nodes.push_back(std::move(j));
        }
        return {{"name", name_}, {"nodes", std::move(nodes)}};
    }

    static LayerGraph from_json(const nlohmann::json& j)
    {
        const auto& nodes = j.at("nodes");
        require(nodes.is_array() && !nodes.empty(), ErrorKind::config, "layer graph has no nodes");
        const auto shape_of_json = [](const nlohmann::json& s) {
            return TensorShape{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
        };
        const auto kind_of = [](const nlohmann::json& node) {
            static const std::vector<std::string> known{"input", "conv2d", "transposed_conv2d", "dense", "pool",
                                                        "upsample", "nonlinearity", "norm", "add", "concat"};
            const auto s = node.at("kind").get<std::string>();
            require(std::find(known.begin(), known.end(), s) != known.end(), ErrorKind::config,
                    "unknown layer kind '" + s + "'");
            return node.at("kind").get<LayerKind>();
        };
        require(kind_of(nodes.at(0)) == LayerKind::input, ErrorKind::config, "first node must be the input");
        LayerGraph g(shape_of_json(nodes.at(0).at("out")), j.value("name", std::string("graph")));
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const auto& jn = nodes[i];
            LayerNode n;
            n.kind = kind_of(jn);
            require(n.kind != LayerKind::input, ErrorKind::config, "only node 0 may be an input");
            n.name = jn.at("name").get<std::string>();
            n.inputs = jn.at("inputs").get<std::vector<int>>();
            n.channels = jn.value("channels", 0);
            n.kernel = jn.value("kernel", 1);
            n.stride = jn.value("stride", 1);
            n.padding = jn.value("padding", 0);
            if (n.kind == LayerKind::pool)
                n.pool_mode = jn.at("mode").get<PoolMode>();
            if (n.kind == LayerKind::upsample) {
                n.resize_mode = jn.at("mode").get<ResizeMode>();
                n.scale_num = jn.at("scale").at(0).get<int>();
                n.scale_den = jn.at("scale").at(1).get<int>();
            }
            if (n.kind == LayerKind::nonlinearity)
                n.activation = jn.at("activation").get<Activation>();
            const TensorShape declared = jn.contains("out") ? shape_of_json(jn.at("out")) : TensorShape{};
            g.push(std::move(n));
            if (jn.contains("out"))
                require(g.nodes_.back().out == declared, ErrorKind::shape,
                        "layer '" + g.nodes_.back().name + "' declares " + declared.str() + " but infers " +
                            g.nodes_.back().out.str());
        }
        return g;
    }

private:
    LayerNode make(LayerKind kind, std::vector<int> inputs, std::string name) const
    {
        LayerNode n;
        n.kind = kind;
        n.inputs = std::move(inputs);
        n.name = name.empty() ? std::string(to_string(kind)) + "_" + std::to_string(nodes_.size()) : std::move(name);
        return n;
    }

    int push(LayerNode n)
    {
        std::vector<TensorShape> in;
        for (int j : n.inputs) {
            require(j >= 0 && static_cast<std::size_t>(j) < nodes_.size(), ErrorKind::shape,
                    "layer '" + n.name + "' references unknown node " + std::to_string(j));
            in.push_back(nodes_[static_cast<std::size_t>(j)].out);
        }
        n.out = infer_node_shape(n, in);
        nodes_.push_back(std::move(n));
        return output();
    }

    std::string name_;
    std::vector<LayerNode> nodes_;
};

} // namespace treenet

#endif // TREENET_LAYER_GRAPH_HPP
