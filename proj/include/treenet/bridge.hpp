#ifndef TREENET_BRIDGE_HPP
#define TREENET_BRIDGE_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "archive.hpp"
#include "autoencoder.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "optim.hpp"
#include "training.hpp"

namespace treenet {

/// Encoded-image inputs and encoded-label targets, row-aligned with `ids`.
struct BridgeTrainingSet {
    std::vector<std::string> ids;
    Tensor<float> inputs;
    Tensor<float> targets;
    std::string encoder_hash;
    std::string decoder_hash;

    int size() const { return static_cast<int>(ids.size()); }
};

/// Encodes every record with the input encoder and the label encoder.
/// Only the encoder halves run; the label autoencoder's encoder half turns
/// masks into bridge targets.
inline BridgeTrainingSet materialize_bridge_set(const Autoencoder& enc, const Autoencoder& dec,
                                                const std::vector<const SampleRecord*>& records, int batch = 16)
{
    require(enc.spec.kind == AutoencoderKind::input_encoder && dec.spec.kind == AutoencoderKind::label_decoder,
            ErrorKind::config, "materialize_bridge_set: expects (input encoder, label decoder)");
    BridgeTrainingSet set;
    set.encoder_hash = weights_hash(enc.encoder_half);
    set.decoder_hash = weights_hash(dec.encoder_half);
    const int n = static_cast<int>(records.size());
    set.inputs = Tensor<float>(Shape4(n, enc.spec.bottleneck()));
    set.targets = Tensor<float>(Shape4(n, dec.spec.bottleneck()));
    for (int i = 0; i < n; i += batch) {
        const int count = std::min(batch, n - i);
        const std::vector<const SampleRecord*> part(records.begin() + i, records.begin() + i + count);
        const Tensor<float> z = enc.encode(stack_images(part));
        const Tensor<float> t = dec.encode(stack_masks(part));
        std::copy_n(z.data(), z.size(), set.inputs.sample_data(i));
        std::copy_n(t.data(), t.size(), set.targets.sample_data(i));
    }
    for (const auto* r : records)
        set.ids.push_back(r->id);
    return set;
}

inline void save_bridge_set(const std::filesystem::path& path, const BridgeTrainingSet& set)
{
    Archive a;
    a.meta = {{"ids", set.ids}, {"encoder_hash", set.encoder_hash}, {"decoder_hash", set.decoder_hash}};
    a.tensors.emplace_back("inputs", set.inputs);
    a.tensors.emplace_back("targets", set.targets);
    save_archive(path, a);
    const auto& si = set.inputs.shape();
    const auto& st = set.targets.shape();
    nlohmann::json sidecar = a.meta;
    sidecar["input_shape"] = {si.n, si.c, si.h, si.w};
    sidecar["target_shape"] = {st.n, st.c, st.h, st.w};
    std::ofstream(path.string() + ".json") << sidecar.dump(1) << '\n';
}

inline BridgeTrainingSet load_bridge_set(const std::filesystem::path& path)
{
    Archive a = load_archive(path);
    BridgeTrainingSet set;
    set.ids = a.meta.at("ids").get<std::vector<std::string>>();
    set.encoder_hash = a.meta.at("encoder_hash").get<std::string>();
    set.decoder_hash = a.meta.at("decoder_hash").get<std::string>();
    set.inputs = a.at("inputs");
    set.targets = a.at("targets");
    return set;
}

enum class CacheMode { reuse_or_error, refresh };

/// Loads the persisted set when its autoencoder hashes match the given
/// models. A mismatch is a stale-cache error unless `mode` is refresh, in
/// which case the set is recomputed and overwritten.
inline BridgeTrainingSet materialize_cached(const std::filesystem::path& path, const Autoencoder& enc,
                                            const Autoencoder& dec, const std::vector<const SampleRecord*>& records,
                                            CacheMode mode = CacheMode::reuse_or_error)
{
    if (std::filesystem::exists(path)) {
        BridgeTrainingSet cached = load_bridge_set(path);
        const bool fresh = cached.encoder_hash == weights_hash(enc.encoder_half) &&
                           cached.decoder_hash == weights_hash(dec.encoder_half);
        std::vector<std::string> ids;
        for (const auto* r : records)
            ids.push_back(r->id);
        if (fresh && cached.ids == ids)
            return cached;
        require(mode == CacheMode::refresh, ErrorKind::stale,
                "bridge set " + path.string() +
                    (fresh ? " was built for a different sample list"
                           : " was built from different autoencoder weights; retrain or refresh the cache"));
    }
    BridgeTrainingSet set = materialize_bridge_set(enc, dec, records);
    save_bridge_set(path, set);
    return set;
}

// ------------------------------------------------------------ multi-scale

struct ScaledBatch {
    std::vector<int> indices;
    double scale = 1.0;
    int input_size = 0;
    int target_size = 0;
};

namespace detail {

inline int scaled_size(int base, double scale, int factor, const char* what)
{
    const double exact = base * scale;
    const int size = static_cast<int>(std::lround(exact));
    require(size >= 1 && std::abs(exact - size) < 1e-9 && size % factor == 0, ErrorKind::config,
            "multi-scale: scale " + nlohmann::json(scale).dump() + " maps the " + what + " size " +
                std::to_string(base) + " to " + nlohmann::json(exact).dump() + ", which is not a multiple of " +
                std::to_string(factor));
    return size;
}

} // namespace detail

/// Shuffled batches for one epoch, each tagged with a scale drawn from
/// `scales`. Shuffling and scale draws use separate streams, so a single
/// scale of 1.0 reproduces plain batching exactly.
inline std::vector<ScaledBatch> multiscale_batches(int n, int batch, std::span<const double> scales, int input_size,
                                                   int target_size, int factor, std::uint64_t seed, int epoch)
{
    require(!scales.empty(), ErrorKind::config, "multi-scale: empty scale list");
    std::vector<std::pair<int, int>> sizes;
    for (double s : scales) {
        require(s > 0, ErrorKind::config, "multi-scale: scales must be positive");
        sizes.emplace_back(detail::scaled_size(input_size, s, factor, "input"),
                           detail::scaled_size(target_size, s, 1, "target"));
    }
    Rng order(derive_seed(seed, 2000 + static_cast<std::uint64_t>(epoch)));
    Rng pick(derive_seed(seed, 3000 + static_cast<std::uint64_t>(epoch)));
    std::vector<ScaledBatch> out;
    for (auto& idx : epoch_batches(n, batch, order)) {
        const std::size_t k = scales.size() == 1 ? 0 : pick.below(scales.size());
        out.push_back({std::move(idx), scales[k], sizes[k].first, sizes[k].second});
    }
    return out;
}

inline std::vector<ScaledBatch> multiscale_batches(const BridgeTrainingSet& set, int batch,
                                                   std::span<const double> scales, int factor, std::uint64_t seed,
                                                   int epoch)
{
    return multiscale_batches(set.size(), batch, scales, set.inputs.shape().h, set.targets.shape().h, factor, seed,
                              epoch);
}

/// Inputs and targets of one batch, resized to the batch's scale.
inline std::pair<Tensor<float>, Tensor<float>> gather_batch(const BridgeTrainingSet& set, const ScaledBatch& b)
{
    return {resize_bilinear(set.inputs.gather(b.indices), b.input_size),
            resize_bilinear(set.targets.gather(b.indices), b.target_size)};
}

// --------------------------------------------------------------- training

struct BridgeOptions {
    TrainOptions train{1e-4, 1e-4, 8, 100, 42};
    std::vector<double> scales{0.75, 1.0, 1.25};
    BoundaryWeightOptions boundary;
};

struct TrainedBridge {
    Network<float> net;
    std::vector<EpochRecord> log;
    int best_epoch = 0;
};

/// Composite loss of a network over a set at its stored size.
inline double evaluate_bridge_loss(const Network<float>& net, const BridgeTrainingSet& set,
                                   const BoundaryWeightOptions& boundary, int batch = 16)
{
    double sum = 0;
    for (int i = 0; i < set.size(); i += batch) {
        const int count = std::min(batch, set.size() - i);
        const Tensor<float> t = set.targets.slice(i, count);
        sum += composite_loss(net.infer(set.inputs.slice(i, count)), t, boundary_weights(t, boundary)).total * count;
    }
    return sum / set.size();
}

namespace detail {

/// Targets must lie in [0, 1] up to 1e-3; small excursions are clamped.
inline BridgeTrainingSet checked_targets(BridgeTrainingSet set, const char* which)
{
    for (std::size_t k = 0; k < set.targets.size(); ++k) {
        float& v = set.targets[k];
        require(std::isfinite(v) && v >= -1e-3f && v <= 1.0f + 1e-3f, ErrorKind::numeric,
                std::string("bridge: ") + which + " target value " + std::to_string(v) + " outside [0, 1]");
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return set;
}

} // namespace detail

/// Trains `net` on composite loss (wIoU + wBCE with boundary weights)
/// against the targets. Keeps the best-validation weights.
inline TrainedBridge train_bridge(Network<float> net, const BridgeTrainingSet& train_set,
                                  const BridgeTrainingSet* val_set, const BridgeOptions& opt, int factor,
                                  const EpochCallback& on_epoch = {}, const char* phase = "bridge")
{
    opt.train.validate(phase);
    require(train_set.size() >= 1, ErrorKind::config, std::string(phase) + ": no training pairs");
    require(train_set.inputs.shape().sample() == net.graph().input_shape(), ErrorKind::shape,
            std::string(phase) + ": inputs " + train_set.inputs.shape().sample().str() + " vs network input " +
                net.graph().input_shape().str());
    require(train_set.targets.shape().sample() == net.graph().output_shape(), ErrorKind::shape,
            std::string(phase) + ": targets " + train_set.targets.shape().sample().str() + " vs network output " +
                net.graph().output_shape().str());
    const BridgeTrainingSet train = detail::checked_targets(train_set, "training");
    const bool has_val = val_set != nullptr && val_set->size() > 0;
    const BridgeTrainingSet val = has_val ? detail::checked_targets(*val_set, "validation") : BridgeTrainingSet{};
    // fail on bad scales before any work
    multiscale_batches(train, opt.train.batch, opt.scales, factor, opt.train.seed, 0);

    TrainedBridge out;
    AdamW<float> optim({opt.train.lr, opt.train.weight_decay});
    optim.add(net);
    BestSnapshot best;
    Tensor<float> grad;
    for (int epoch = 1; epoch <= opt.train.epochs; ++epoch) {
        double sum = 0;
        for (const auto& b : multiscale_batches(train, opt.train.batch, opt.scales, factor, opt.train.seed, epoch)) {
            auto [x, t] = gather_batch(train, b);
            optim.zero_grad();
            const Tensor<float> y = net.forward(x);
            const double loss = composite_loss(y, t, boundary_weights(t, opt.boundary), &grad).total;
            check_finite_loss(loss, phase, epoch);
            net.backward(grad);
            optim.step();
            sum += loss * double(b.indices.size());
        }
        EpochRecord rec{epoch, sum / train.size()};
        if (has_val)
            rec.val_loss = evaluate_bridge_loss(net, val, opt.boundary);
        check_finite_loss(has_val ? rec.val_loss : rec.train_loss, phase, epoch);
        best.offer(rec, {&net});
        out.log.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    best.restore({&net});
    out.best_epoch = best.best_epoch();
    out.net = std::move(net);
    return out;
}

} // namespace treenet

#endif // TREENET_BRIDGE_HPP
