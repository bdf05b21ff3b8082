#ifndef TREENET_NETWORK_HPP
#define TREENET_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kernels.hpp"
#include "layer_graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace treenet {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true; // false for batch-norm running statistics
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;

/// Executable network built from a LayerGraph. Forward/backward walk the
/// graph in node order; the graph may be re-run at any input size its
/// layers accept (multi-scale training).
///
/// infer() is const and thread-safe; forward()/backward() cache
/// activations and belong to a single training thread.
template <typename T>
class Network {
public:
    Network() = default;

    Network(LayerGraph graph, std::uint64_t seed) : graph_(std::move(graph))
    {
        graph_.validate();
        slots_.resize(graph_.size());
        for (std::size_t i = 1; i < graph_.size(); ++i)
            allocate(static_cast<int>(i), seed);
    }

    const LayerGraph& graph() const { return graph_; }

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }

    /// Trainable scalar count, enumerated from the allocated tensors.
    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (p.trainable)
                n += p.value.size();
        return n;
    }

    void zero_grad()
    {
        for (auto& p : params_)
            if (p.trainable)
                p.grad.fill(T(0));
    }

    /// Inference (running statistics for norms, no caching). Intermediate
    /// activations are released as soon as their last consumer has run.
    Tensor<T> infer(const Tensor<T>& x) const { return run(x, false, nullptr); }

    /// Training-mode forward: caches what backward() needs and updates
    /// norm running statistics.
    Tensor<T> forward(const Tensor<T>& x)
    {
        cache_ = Cache{};
        Tensor<T> y = run(x, true, &cache_);
        for (std::size_t i = 1; i < graph_.size(); ++i) {
            const Slot& s = slots_[i];
            if (graph_.nodes()[i].kind != LayerKind::norm)
                continue;
            Tensor<T>& mean = params_[static_cast<std::size_t>(s.mean)].value;
            Tensor<T>& var = params_[static_cast<std::size_t>(s.var)].value;
            const auto& bm = cache_.batch_mean[i];
            const auto& bv = cache_.batch_var[i];
            for (std::size_t c = 0; c < bm.size(); ++c) {
                mean[c] = static_cast<T>((1 - kNormMomentum) * mean[c] + kNormMomentum * bm[c]);
                var[c] = static_cast<T>((1 - kNormMomentum) * var[c] + kNormMomentum * bv[c]);
            }
        }
        return y;
    }

    /// Back-propagate dL/dy of the last forward(). Parameter gradients are
    /// accumulated; returns dL/dx when requested (empty tensor otherwise).
    Tensor<T> backward(const Tensor<T>& grad_out, bool want_input_grad = false)
    {
        require(cache_.valid, ErrorKind::config, graph_.name() + ": backward() without a preceding forward()");
        const auto& nodes = graph_.nodes();
        const std::size_t n = nodes.size();
        require(grad_out.shape() == cache_.acts.back().shape(), ErrorKind::shape,
                graph_.name() + ": output gradient " + grad_out.shape().str() + " does not match output " +
                    cache_.acts.back().shape().str());
        std::vector<Tensor<T>> grads(n);
        grads[n - 1] = grad_out;
        for (std::size_t i = n - 1; i >= 1; --i) {
            if (grads[i].empty())
                continue;
            backward_node(static_cast<int>(i), grads, want_input_grad);
            grads[i].release();
        }
        cache_ = Cache{};
        return want_input_grad ? std::move(grads[0]) : Tensor<T>{};
    }

    template <typename U>
    Network<U> cast() const
    {
        Network<U> out;
        out.graph_ = graph_;
        out.slots_.resize(slots_.size());
        for (std::size_t i = 0; i < slots_.size(); ++i)
            out.slots_[i] = {slots_[i].weight, slots_[i].bias, slots_[i].mean, slots_[i].var};
        for (const auto& p : params_)
            out.params_.push_back({p.name, p.value.template cast<U>(), Tensor<U>(p.value.shape()), p.trainable});
        return out;
    }

private:
    template <typename>
    friend class Network;

    // Parameter indices per node; for norms weight/bias are gamma/beta.
    struct Slot {
        int weight = -1;
        int bias = -1;
        int mean = -1;
        int var = -1;
    };

    struct Cache {
        bool valid = false;
        Tensor<T> input;
        std::vector<Tensor<T>> acts;
        std::vector<std::vector<std::int32_t>> argmax;
        std::vector<Tensor<T>> xhat;
        std::vector<std::vector<double>> inv_std;
        std::vector<std::vector<double>> batch_mean;
        std::vector<std::vector<double>> batch_var;
    };

    int add_param(std::string name, Shape4 shape, bool trainable)
    {
        params_.push_back({std::move(name), Tensor<T>(shape), Tensor<T>(trainable ? shape : Shape4{}), trainable});
        return static_cast<int>(params_.size()) - 1;
    }

    void allocate(int i, std::uint64_t seed)
    {
        const LayerNode& node = graph_.node(i);
        const TensorShape in = node.inputs.empty() ? TensorShape{} : graph_.shape_of(node.inputs.front());
        Slot& slot = slots_[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const auto he_uniform = [&](Tensor<T>& w, double fan_in) {
            const double bound = std::sqrt(6.0 / std::max(fan_in, 1.0));
            for (std::size_t k = 0; k < w.size(); ++k)
                w[k] = static_cast<T>(rng.uniform(-bound, bound));
        };
        switch (node.kind) {
        case LayerKind::conv2d: {
            slot.weight = add_param(node.name + ".weight", {node.channels, in.c, node.kernel, node.kernel}, true);
            slot.bias = add_param(node.name + ".bias", {1, node.channels, 1, 1}, true);
            he_uniform(params_[static_cast<std::size_t>(slot.weight)].value, double(in.c) * node.kernel * node.kernel);
            break;
        }
        case LayerKind::transposed_conv2d: {
            slot.weight = add_param(node.name + ".weight", {in.c, node.channels, node.kernel, node.kernel}, true);
            slot.bias = add_param(node.name + ".bias", {1, node.channels, 1, 1}, true);
            const double taps = double(node.kernel) * node.kernel / (double(node.stride) * node.stride);
            he_uniform(params_[static_cast<std::size_t>(slot.weight)].value, in.c * std::max(taps, 1.0));
            break;
        }
        case LayerKind::dense: {
            const int features = static_cast<int>(in.size());
            slot.weight = add_param(node.name + ".weight", {1, 1, node.channels, features}, true);
            slot.bias = add_param(node.name + ".bias", {1, node.channels, 1, 1}, true);
            he_uniform(params_[static_cast<std::size_t>(slot.weight)].value, features);
            break;
        }
        case LayerKind::norm: {
            slot.weight = add_param(node.name + ".gamma", {1, in.c, 1, 1}, true);
            slot.bias = add_param(node.name + ".beta", {1, in.c, 1, 1}, true);
            slot.mean = add_param(node.name + ".running_mean", {1, in.c, 1, 1}, false);
            slot.var = add_param(node.name + ".running_var", {1, in.c, 1, 1}, false);
            params_[static_cast<std::size_t>(slot.weight)].value.fill(T(1));
            params_[static_cast<std::size_t>(slot.var)].value.fill(T(1));
            break;
        }
        default:
            break;
        }
    }

    const Tensor<T>& value(int p) const { return params_[static_cast<std::size_t>(p)].value; }
    Tensor<T>& grad(int p) { return params_[static_cast<std::size_t>(p)].grad; }

    static kernels::ConvGeometry conv_geometry(const LayerNode& node, const Shape4& in, const Shape4& out)
    {
        return {in.c, in.h, in.w, out.c, out.h, out.w, node.kernel, node.stride, node.padding};
    }

    // Geometry of the "image" side for a transposed conv: the output plays
    // the role of an ordinary convolution's input.
    static kernels::ConvGeometry tconv_geometry(const LayerNode& node, const Shape4& in, const Shape4& out)
    {
        return {in.c, in.h, in.w, out.c, out.h, out.w, node.kernel, node.stride, node.padding};
    }

    Tensor<T> run(const Tensor<T>& x, bool training, Cache* cache) const
    {
        const auto& nodes = graph_.nodes();
        const std::size_t n = nodes.size();
        const auto shapes = graph_.infer(x.shape().sample());
        const int batch = x.shape().n;
        const std::vector<int> last = graph_.last_use();

        std::vector<Tensor<T>> acts(n);
        const auto act = [&](int j) -> const Tensor<T>& { return j == 0 ? x : acts[static_cast<std::size_t>(j)]; };
        if (cache != nullptr) {
            cache->argmax.assign(n, {});
            cache->xhat.assign(n, {});
            cache->inv_std.assign(n, {});
            cache->batch_mean.assign(n, {});
            cache->batch_var.assign(n, {});
        }
        kernels::Scratch<T> col;

        for (std::size_t i = 1; i < n; ++i) {
            const LayerNode& node = nodes[i];
            const Slot& slot = slots_[i];
            const Tensor<T>& in = act(node.inputs.front());
            Tensor<T> out(Shape4(batch, shapes[i]));
            const Shape4& is = in.shape();
            const Shape4& os = out.shape();

            switch (node.kind) {
            case LayerKind::input:
                break;
            case LayerKind::conv2d: {
                const auto g = conv_geometry(node, is, os);
                for (int b = 0; b < batch; ++b)
                    kernels::conv_forward(g, in.sample_data(b), value(slot.weight).data(), value(slot.bias).data(),
                                          out.sample_data(b), col);
                break;
            }
            case LayerKind::transposed_conv2d: {
                const auto g = tconv_geometry(node, is, os);
                for (int b = 0; b < batch; ++b)
                    kernels::transposed_conv_forward(g, in.sample_data(b), value(slot.weight).data(),
                                                     value(slot.bias).data(), out.sample_data(b), col);
                break;
            }
            case LayerKind::dense: {
                const int features = static_cast<int>(is.sample_size());
                kernels::MatMap<T> y(out.data(), batch, node.channels);
                y.noalias() = kernels::ConstMatMap<T>(in.data(), batch, features) *
                              kernels::ConstMatMap<T>(value(slot.weight).data(), node.channels, features).transpose();
                for (int b = 0; b < batch; ++b)
                    for (int o = 0; o < node.channels; ++o)
                        y(b, o) += value(slot.bias)[static_cast<std::size_t>(o)];
                break;
            }
            case LayerKind::pool: {
                const bool max_mode = node.pool_mode == PoolMode::max;
                std::int32_t* arg = nullptr;
                if (cache != nullptr && max_mode) {
                    cache->argmax[i].resize(out.size());
                    arg = cache->argmax[i].data();
                }
                const std::size_t step = os.sample_size();
                for (int b = 0; b < batch; ++b)
                    kernels::pool_forward(in.sample_data(b), is.c, is.h, is.w, node.kernel, node.stride, max_mode,
                                          out.sample_data(b), os.h, os.w, arg ? arg + b * step : nullptr);
                break;
            }
            case LayerKind::upsample:
                for (int b = 0; b < batch; ++b) {
                    if (node.resize_mode == ResizeMode::nearest)
                        kernels::upsample_nearest_forward(in.sample_data(b), is.c, is.h, is.w, node.scale_num,
                                                          out.sample_data(b));
                    else
                        kernels::bilinear_forward(in.sample_data(b), is.c, is.h, is.w, out.sample_data(b), os.h, os.w);
                }
                break;
            case LayerKind::nonlinearity: {
                const T* src = in.data();
                T* dst = out.data();
                const std::size_t m = out.size();
                if (node.activation == Activation::relu)
                    for (std::size_t k = 0; k < m; ++k)
                        dst[k] = src[k] > T(0) ? src[k] : T(0);
                else
                    for (std::size_t k = 0; k < m; ++k)
                        dst[k] = kernels::sigmoid(src[k]);
                break;
            }
            case LayerKind::norm:
                norm_forward(i, in, out, training, cache);
                break;
            case LayerKind::add: {
                std::copy_n(in.data(), in.size(), out.data());
                for (std::size_t k = 1; k < node.inputs.size(); ++k) {
                    const Tensor<T>& other = act(node.inputs[k]);
                    for (std::size_t e = 0; e < out.size(); ++e)
                        out[e] += other[e];
                }
                break;
            }
            case LayerKind::concat: {
                const std::size_t plane = static_cast<std::size_t>(os.h) * os.w;
                for (int b = 0; b < batch; ++b) {
                    T* dst = out.sample_data(b);
                    for (int j : node.inputs) {
                        const Tensor<T>& part = act(j);
                        const std::size_t len = static_cast<std::size_t>(part.shape().c) * plane;
                        dst = std::copy_n(part.sample_data(b), len, dst);
                    }
                }
                break;
            }
            }
            acts[i] = std::move(out);

            if (cache == nullptr) {
                for (int j : node.inputs)
                    if (j != 0 && last[static_cast<std::size_t>(j)] == static_cast<int>(i))
                        acts[static_cast<std::size_t>(j)].release();
            }
        }

        if (cache == nullptr)
            return std::move(acts.back());
        Tensor<T> y = acts.back();
        cache->input = x;
        cache->acts = std::move(acts);
        cache->valid = true;
        return y;
    }

    void norm_forward(std::size_t i, const Tensor<T>& in, Tensor<T>& out, bool training, Cache* cache) const
    {
        const Slot& slot = slots_[i];
        const Shape4& s = in.shape();
        const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
        const T* gamma = value(slot.weight).data();
        const T* beta = value(slot.bias).data();
        if (!training) {
            const T* rm = value(slot.mean).data();
            const T* rv = value(slot.var).data();
            for (int b = 0; b < s.n; ++b)
                for (int c = 0; c < s.c; ++c) {
                    const T scale = static_cast<T>(gamma[c] / std::sqrt(double(rv[c]) + kNormEpsilon));
                    const T shift = beta[c] - scale * rm[c];
                    const T* src = in.sample_data(b) + c * plane;
                    T* dst = out.sample_data(b) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k)
                        dst[k] = scale * src[k] + shift;
                }
            return;
        }
        const double count = double(s.n) * plane;
        using PlaneArray = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
        std::vector<double> mean(static_cast<std::size_t>(s.c), 0.0), var(static_cast<std::size_t>(s.c), 0.0),
            inv(static_cast<std::size_t>(s.c));
        for (int c = 0; c < s.c; ++c) {
            double sum = 0;
            for (int b = 0; b < s.n; ++b)
                sum += double(PlaneArray(in.sample_data(b) + c * plane, Eigen::Index(plane)).sum());
            mean[c] = sum / count;
            const T m = static_cast<T>(mean[c]);
            double sq = 0;
            for (int b = 0; b < s.n; ++b)
                sq += double((PlaneArray(in.sample_data(b) + c * plane, Eigen::Index(plane)) - m).square().sum());
            var[c] = sq / count;
            inv[c] = 1.0 / std::sqrt(var[c] + kNormEpsilon);
        }
        Tensor<T> xhat(s);
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < s.c; ++c) {
                const T* src = in.sample_data(b) + c * plane;
                T* xh = xhat.sample_data(b) + c * plane;
                T* dst = out.sample_data(b) + c * plane;
                const T m = static_cast<T>(mean[c]), is = static_cast<T>(inv[c]), ga = gamma[c], be = beta[c];
                for (std::size_t k = 0; k < plane; ++k) {
                    xh[k] = (src[k] - m) * is;
                    dst[k] = ga * xh[k] + be;
                }
            }
        if (cache != nullptr) {
            cache->xhat[i] = std::move(xhat);
            cache->inv_std[i] = inv;
            cache->batch_mean[i] = mean;
            for (auto& v : var)
                v = count > 1 ? v * count / (count - 1) : v;
            cache->batch_var[i] = std::move(var);
        }
    }

    void accumulate(std::vector<Tensor<T>>& grads, int j, Tensor<T>&& g)
    {
        Tensor<T>& dst = grads[static_cast<std::size_t>(j)];
        if (dst.empty()) {
            dst = std::move(g);
            return;
        }
        for (std::size_t k = 0; k < dst.size(); ++k)
            dst[k] += g[k];
    }

    void backward_node(int i, std::vector<Tensor<T>>& grads, bool want_input_grad)
    {
        const LayerNode& node = graph_.node(i);
        const Slot& slot = slots_[static_cast<std::size_t>(i)];
        const Tensor<T>& dy = grads[static_cast<std::size_t>(i)];
        const auto act = [&](int j) -> const Tensor<T>& {
            return j == 0 ? cache_.input : cache_.acts[static_cast<std::size_t>(j)];
        };
        const auto needs = [&](int j) { return j != 0 || want_input_grad; };
        const int src_id = node.inputs.front();
        const Tensor<T>& in = act(src_id);
        const Shape4& is = in.shape();
        const Shape4& os = dy.shape();
        const int batch = is.n;
        kernels::Scratch<T> col;

        switch (node.kind) {
        case LayerKind::input:
            return;
        case LayerKind::conv2d: {
            const auto g = conv_geometry(node, is, os);
            Tensor<T> dx = needs(src_id) ? Tensor<T>(is) : Tensor<T>{};
            for (int b = 0; b < batch; ++b)
                kernels::conv_backward(g, in.sample_data(b), value(slot.weight).data(), dy.sample_data(b),
                                       grad(slot.weight).data(), grad(slot.bias).data(),
                                       dx.empty() ? nullptr : dx.sample_data(b), col);
            if (!dx.empty())
                accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::transposed_conv2d: {
            const auto g = tconv_geometry(node, is, os);
            Tensor<T> dx = needs(src_id) ? Tensor<T>(is) : Tensor<T>{};
            for (int b = 0; b < batch; ++b)
                kernels::transposed_conv_backward(g, in.sample_data(b), value(slot.weight).data(), dy.sample_data(b),
                                                  grad(slot.weight).data(), grad(slot.bias).data(),
                                                  dx.empty() ? nullptr : dx.sample_data(b), col);
            if (!dx.empty())
                accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::dense: {
            const int features = static_cast<int>(is.sample_size());
            kernels::ConstMatMap<T> dY(dy.data(), batch, node.channels);
            kernels::MatMap<T>(grad(slot.weight).data(), node.channels, features).noalias() +=
                dY.transpose() * kernels::ConstMatMap<T>(in.data(), batch, features);
            for (int o = 0; o < node.channels; ++o)
                grad(slot.bias)[static_cast<std::size_t>(o)] += dY.col(o).sum();
            if (needs(src_id)) {
                Tensor<T> dx(is);
                kernels::MatMap<T>(dx.data(), batch, features).noalias() =
                    dY * kernels::ConstMatMap<T>(value(slot.weight).data(), node.channels, features);
                accumulate(grads, src_id, std::move(dx));
            }
            return;
        }
        case LayerKind::pool: {
            if (!needs(src_id))
                return;
            Tensor<T> dx(is);
            const bool max_mode = node.pool_mode == PoolMode::max;
            const std::size_t step = os.sample_size();
            for (int b = 0; b < batch; ++b)
                kernels::pool_backward(dy.sample_data(b), is.c, is.h, is.w, node.kernel, node.stride, max_mode, os.h,
                                       os.w, max_mode ? cache_.argmax[static_cast<std::size_t>(i)].data() + b * step : nullptr,
                                       dx.sample_data(b));
            accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::upsample: {
            if (!needs(src_id))
                return;
            Tensor<T> dx(is);
            for (int b = 0; b < batch; ++b) {
                if (node.resize_mode == ResizeMode::nearest)
                    kernels::upsample_nearest_backward(dy.sample_data(b), is.c, is.h, is.w, node.scale_num,
                                                       dx.sample_data(b));
                else
                    kernels::bilinear_backward(dy.sample_data(b), is.c, is.h, is.w, os.h, os.w, dx.sample_data(b));
            }
            accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::nonlinearity: {
            if (!needs(src_id))
                return;
            const Tensor<T>& y = cache_.acts[static_cast<std::size_t>(i)];
            Tensor<T> dx(is);
            if (node.activation == Activation::relu)
                for (std::size_t k = 0; k < dx.size(); ++k)
                    dx[k] = y[k] > T(0) ? dy[k] : T(0);
            else
                for (std::size_t k = 0; k < dx.size(); ++k)
                    dx[k] = dy[k] * y[k] * (T(1) - y[k]);
            accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::norm: {
            const Tensor<T>& xhat = cache_.xhat[static_cast<std::size_t>(i)];
            const auto& inv = cache_.inv_std[static_cast<std::size_t>(i)];
            const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
            const double count = double(batch) * plane;
            const T* gamma = value(slot.weight).data();
            Tensor<T> dx = needs(src_id) ? Tensor<T>(is) : Tensor<T>{};
            for (int c = 0; c < is.c; ++c) {
                double sum_dy = 0, sum_dy_xhat = 0;
                for (int b = 0; b < batch; ++b) {
                    const T* g = dy.sample_data(b) + c * plane;
                    const T* xh = xhat.sample_data(b) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        sum_dy += g[k];
                        sum_dy_xhat += double(g[k]) * xh[k];
                    }
                }
                grad(slot.weight)[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
                grad(slot.bias)[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
                if (dx.empty())
                    continue;
                const double scale = gamma[c] * inv[static_cast<std::size_t>(c)] / count;
                for (int b = 0; b < batch; ++b) {
                    const T* g = dy.sample_data(b) + c * plane;
                    const T* xh = xhat.sample_data(b) + c * plane;
                    T* d = dx.sample_data(b) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k)
                        d[k] = static_cast<T>(scale * (count * g[k] - sum_dy - double(xh[k]) * sum_dy_xhat));
                }
            }
            if (!dx.empty())
                accumulate(grads, src_id, std::move(dx));
            return;
        }
        case LayerKind::add:
            for (int j : node.inputs)
                if (needs(j))
                    accumulate(grads, j, Tensor<T>(dy));
            return;
        case LayerKind::concat: {
            const std::size_t plane = static_cast<std::size_t>(os.h) * os.w;
            std::size_t offset = 0;
            for (int j : node.inputs) {
                const Shape4& ps = act(j).shape();
                const std::size_t len = static_cast<std::size_t>(ps.c) * plane;
                if (needs(j)) {
                    Tensor<T> dx(ps);
                    for (int b = 0; b < batch; ++b)
                        std::copy_n(dy.sample_data(b) + offset, len, dx.sample_data(b));
                    accumulate(grads, j, std::move(dx));
                }
                offset += len;
            }
            return;
        }
        }
    }

    LayerGraph graph_;
    std::vector<Slot> slots_;
    std::vector<Parameter<T>> params_;
    Cache cache_;
};

} // namespace treenet

#endif // TREENET_NETWORK_HPP
