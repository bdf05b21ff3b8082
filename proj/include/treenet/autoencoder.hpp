#ifndef TREENET_AUTOENCODER_HPP
#define TREENET_AUTOENCODER_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cost.hpp"
#include "losses.hpp"
#include "network.hpp"
#include "optim.hpp"
#include "training.hpp"

namespace treenet {

/// N: input size, e/d: encoder/decoder spatial reduction, E/D: encoder and
/// decoder bottleneck depths, B/L: bridge-internal bottleneck features and
/// size (informational, 0 when unspecified).
struct ShapeSpec {
    int N = 384;
    int e = 4;
    int d = 4;
    int E = 3;
    int D = 3;
    int B = 0;
    int L = 0;

    void validate() const
    {
        require(N >= 1, ErrorKind::config, "shapes: N must be positive");
        for (auto [name, r] : {std::pair{"e", e}, std::pair{"d", d}}) {
            require(r >= 2 && std::has_single_bit(static_cast<unsigned>(r)), ErrorKind::config,
                    std::string("shapes: reduction ratio ") + name + "=" + std::to_string(r) +
                        " must be a power of two >= 2");
            require(N % r == 0, ErrorKind::config,
                    "shapes: N=" + std::to_string(N) + " is not divisible by " + name + "=" + std::to_string(r));
        }
        require(E >= 1 && D >= 1, ErrorKind::config, "shapes: bottleneck depths must be positive");
        require(B >= 0 && L >= 0, ErrorKind::config, "shapes: B and L must be >= 0");
    }

    TensorShape encoder_bottleneck() const { return {E, N / e, N / e}; }
    TensorShape decoder_bottleneck() const { return {D, N / d, N / d}; }

    bool operator==(const ShapeSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const ShapeSpec& s)
{
    j = {{"N", s.N}, {"e", s.e}, {"d", s.d}, {"E", s.E}, {"D", s.D}, {"B", s.B}, {"L", s.L}};
}

inline void from_json(const nlohmann::json& j, ShapeSpec& s)
{
    s.N = j.value("N", s.N);
    s.e = j.value("e", s.e);
    s.d = j.value("d", s.d);
    s.E = j.value("E", s.E);
    s.D = j.value("D", s.D);
    s.B = j.value("B", s.B);
    s.L = j.value("L", s.L);
}

enum class AutoencoderKind { input_encoder, label_decoder };

NLOHMANN_JSON_SERIALIZE_ENUM(AutoencoderKind,
                             {{AutoencoderKind::input_encoder, "input_encoder"},
                              {AutoencoderKind::label_decoder, "label_decoder"}})

inline constexpr std::array<int, 13> kWidthLadder{4, 8, 12, 16, 20, 24, 32, 40, 48, 64, 80, 96, 128};

/// Convolutional autoencoder description. Each halving is a stride-2 3x3
/// convolution + ReLU; a 3x3 convolution + sigmoid produces the bottleneck.
/// The decoder mirrors it with a 3x3 convolution + ReLU followed by
/// stride-2 transposed convolutions; its output is sigmoid-bounded.
/// Widths double per level starting from base_width (0 = pick the ladder
/// width whose parameter count is closest to the budget).
struct AutoencoderSpec {
    AutoencoderKind kind = AutoencoderKind::input_encoder;
    ShapeSpec shape;
    int parameter_budget = 50000;
    int base_width = 0;

    int channels() const { return kind == AutoencoderKind::input_encoder ? 3 : 1; }
    int factor() const { return kind == AutoencoderKind::input_encoder ? shape.e : shape.d; }
    int levels() const { return std::countr_zero(static_cast<unsigned>(factor())); }
    TensorShape input_shape() const { return {channels(), shape.N, shape.N}; }
    TensorShape bottleneck() const
    {
        return kind == AutoencoderKind::input_encoder ? shape.encoder_bottleneck() : shape.decoder_bottleneck();
    }
    const char* label() const { return kind == AutoencoderKind::input_encoder ? "encoder_net" : "decoder_net"; }

    LayerGraph encoder_graph(int base) const
    {
        shape.validate();
        LayerGraph g(input_shape(), std::string(label()) + ".encode");
        int x = g.input();
        for (int i = 0; i < levels(); ++i) {
            x = g.conv2d(x, base << i, 3, 2, 1, "down" + std::to_string(i));
            x = g.activation(x, Activation::relu, "down" + std::to_string(i) + "_relu");
        }
        x = g.conv2d(x, bottleneck().c, 3, 1, 1, "bottleneck");
        g.activation(x, Activation::sigmoid, "bottleneck_sigmoid");
        return g;
    }

    LayerGraph decoder_graph(int base) const
    {
        shape.validate();
        LayerGraph g(bottleneck(), std::string(label()) + ".decode");
        const int top = levels() - 1;
        int x = g.conv2d(g.input(), base << top, 3, 1, 1, "expand");
        x = g.activation(x, Activation::relu, "expand_relu");
        for (int i = top; i >= 1; --i) {
            x = g.transposed_conv2d(x, base << (i - 1), 2, 2, 0, "up" + std::to_string(i));
            x = g.activation(x, Activation::relu, "up" + std::to_string(i) + "_relu");
        }
        x = g.transposed_conv2d(x, channels(), 2, 2, 0, "up0");
        g.activation(x, Activation::sigmoid, "output_sigmoid");
        return g;
    }

    std::uint64_t parameter_count(int base) const
    {
        return count_params(encoder_graph(base)) + count_params(decoder_graph(base));
    }

    /// Explicit base_width, else the ladder width nearest the budget; the
    /// result must lie within +-50% of the budget.
    int resolve_base_width() const
    {
        require(parameter_budget > 0, ErrorKind::config, std::string(label()) + ": parameter budget must be positive");
        int base = base_width;
        if (base <= 0) {
            double best = INFINITY;
            for (int w : kWidthLadder) {
                const double gap = std::abs(double(parameter_count(w)) - parameter_budget);
                if (gap < best) {
                    best = gap;
                    base = w;
                }
            }
        }
        const double n = double(parameter_count(base));
        require(n >= 0.5 * parameter_budget && n <= 1.5 * parameter_budget, ErrorKind::config,
                std::string(label()) + ": " + std::to_string(std::uint64_t(n)) + " parameters at base width " +
                    std::to_string(base) + " is outside +-50% of the budget " + std::to_string(parameter_budget));
        return base;
    }
};

inline void to_json(nlohmann::json& j, const AutoencoderSpec& s)
{
    j = {{"kind", s.kind}, {"shape", s.shape}, {"parameter_budget", s.parameter_budget}, {"base_width", s.base_width}};
}

inline void from_json(const nlohmann::json& j, AutoencoderSpec& s)
{
    s.kind = j.value("kind", s.kind);
    s.shape = j.value("shape", s.shape);
    s.parameter_budget = j.value("parameter_budget", s.parameter_budget);
    s.base_width = j.value("base_width", s.base_width);
}

/// Encoder and decoder halves of one autoencoder. The halves are separate
/// networks so the deployable pieces partition the parameters exactly.
struct Autoencoder {
    AutoencoderSpec spec;
    int base_width = 0;
    Network<float> encoder_half;
    Network<float> decoder_half;

    std::size_t parameter_count() const { return encoder_half.parameter_count() + decoder_half.parameter_count(); }

    /// Single graph of the full autoencoder (cost accounting only).
    LayerGraph graph() const { return LayerGraph::chain(encoder_half.graph(), decoder_half.graph(), spec.label()); }

    Tensor<float> encode(const Tensor<float>& x) const
    {
        require(x.shape().sample() == spec.input_shape(), ErrorKind::shape,
                std::string(spec.label()) + ": encode expects " + spec.input_shape().str() + ", got " +
                    x.shape().sample().str());
        return encoder_half.infer(x);
    }

    Tensor<float> decode_half(const Tensor<float>& b) const
    {
        require(b.shape().sample() == spec.bottleneck(), ErrorKind::shape,
                std::string(spec.label()) + ": decode expects " + spec.bottleneck().str() + ", got " +
                    b.shape().sample().str());
        return decoder_half.infer(b);
    }

    Tensor<float> reconstruct(const Tensor<float>& x) const { return decode_half(encode(x)); }
};

inline Autoencoder build_autoencoder(const AutoencoderSpec& spec, std::uint64_t seed)
{
    const int base = spec.resolve_base_width();
    return {spec, base, Network<float>(spec.encoder_graph(base), derive_seed(seed, 1)),
            Network<float>(spec.decoder_graph(base), derive_seed(seed, 2))};
}

struct TrainedAutoencoder {
    Autoencoder model;
    std::vector<EpochRecord> log;
    double initial_loss = 0; // reconstruction MSE on the training data before the first step
    int best_epoch = 0;
};

namespace detail {

inline double reconstruction_mse(const Autoencoder& ae, const Tensor<float>& data, int batch)
{
    double sum = 0;
    for (int i = 0; i < data.shape().n; i += batch) {
        const int count = std::min(batch, data.shape().n - i);
        const Tensor<float> x = data.slice(i, count);
        sum += euclidean_loss(ae.reconstruct(x), x) * count;
    }
    return sum / data.shape().n;
}

} // namespace detail

/// Minimises the mean squared reconstruction error with AdamW. Keeps the
/// weights of the epoch with the lowest validation loss (training loss
/// when `val` is null or empty).
inline TrainedAutoencoder train_autoencoder(Autoencoder model, const Tensor<float>& train, const Tensor<float>* val,
                                            const TrainOptions& opt, const EpochCallback& on_epoch = {})
{
    opt.validate(model.spec.label());
    const char* phase = model.spec.label();
    require(train.shape().n >= 1, ErrorKind::config, std::string(phase) + ": no training samples");
    require(train.shape().sample() == model.spec.input_shape(), ErrorKind::shape,
            std::string(phase) + ": training data " + train.shape().sample().str() + " does not match input " +
                model.spec.input_shape().str());
    const bool has_val = val != nullptr && val->shape().n > 0;

    TrainedAutoencoder out;
    out.initial_loss = detail::reconstruction_mse(model, train, opt.batch);
    AdamW<float> optim({opt.lr, opt.weight_decay});
    optim.add(model.encoder_half);
    optim.add(model.decoder_half);
    BestSnapshot best;
    Tensor<float> grad;

    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        Rng rng(derive_seed(opt.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        double sum = 0;
        for (const auto& idx : epoch_batches(train.shape().n, opt.batch, rng)) {
            const Tensor<float> x = train.gather(idx);
            optim.zero_grad();
            const Tensor<float> z = model.encoder_half.forward(x);
            const Tensor<float> y = model.decoder_half.forward(z);
            const double loss = euclidean_loss(y, x, &grad);
            check_finite_loss(loss, phase, epoch);
            model.encoder_half.backward(model.decoder_half.backward(grad, true));
            optim.step();
            sum += loss * double(idx.size());
        }
        EpochRecord rec{epoch, sum / train.shape().n};
        if (has_val)
            rec.val_loss = detail::reconstruction_mse(model, *val, opt.batch);
        check_finite_loss(has_val ? rec.val_loss : rec.train_loss, phase, epoch);
        best.offer(rec, {&model.encoder_half, &model.decoder_half});
        out.log.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    best.restore({&model.encoder_half, &model.decoder_half});
    out.best_epoch = best.best_epoch();
    out.model = std::move(model);
    return out;
}

} // namespace treenet

#endif // TREENET_AUTOENCODER_HPP
