#include <set>

#include <gtest/gtest.h>

#include <treenet/backbones.hpp>
#include <treenet/bridge.hpp>

#include "test_support.hpp"

using namespace treenet;
using treenet::testing::TempDir;

namespace {

struct Fixture {
    std::vector<SampleRecord> records = generate_synthetic(12, 32, 3);
    std::vector<const SampleRecord*> ptrs;
    Autoencoder enc;
    Autoencoder dec;

    Fixture()
    {
        for (const auto& r : records)
            ptrs.push_back(&r);
        AutoencoderSpec s;
        s.shape = {32, 2, 2, 3, 2};
        s.parameter_budget = 2000;
        enc = build_autoencoder(s, 1);
        s.kind = AutoencoderKind::label_decoder;
        dec = build_autoencoder(s, 2);
    }
};

BackboneSpec tiny_bridge()
{
    BackboneSpec b;
    b.in_channels = 3;
    b.in_size = 16;
    b.out_channels = 2;
    b.out_size = 16;
    b.depth = 1;
    b.base_width = 8;
    return b;
}

} // namespace

TEST(BridgeSet, MaterializesEncoderOutputs)
{
    Fixture f;
    const auto set = materialize_bridge_set(f.enc, f.dec, f.ptrs, 5);
    ASSERT_EQ(set.size(), 12);
    EXPECT_EQ(set.inputs.shape(), Shape4(12, 3, 16, 16));
    EXPECT_EQ(set.targets.shape(), Shape4(12, 2, 16, 16));
    EXPECT_EQ(set.ids.front(), f.records.front().id);
    EXPECT_TRUE(set.inputs.slice(7, 1) == f.enc.encode(stack_images({f.ptrs[7]})));
    EXPECT_TRUE(set.targets.slice(11, 1) == f.dec.encode(stack_masks({f.ptrs[11]})));
    EXPECT_EQ(set.encoder_hash, weights_hash(f.enc.encoder_half));

    const auto empty = materialize_bridge_set(f.enc, f.dec, {});
    EXPECT_EQ(empty.size(), 0);
    EXPECT_THROW(materialize_bridge_set(f.dec, f.enc, f.ptrs), Error);
}

TEST(BridgeSet, CacheRoundTripAndStaleness)
{
    Fixture f;
    TempDir dir("bridge_cache");
    const auto path = dir.path() / "train.bin";
    const auto first = materialize_cached(path, f.enc, f.dec, f.ptrs);
    ASSERT_TRUE(std::filesystem::exists(path));
    ASSERT_TRUE(std::filesystem::exists(path.string() + ".json"));
    const auto again = materialize_cached(path, f.enc, f.dec, f.ptrs);
    EXPECT_TRUE(again.inputs == first.inputs);
    EXPECT_TRUE(again.targets == first.targets);
    EXPECT_EQ(again.ids, first.ids);

    f.enc.encoder_half.parameters()[0].value[0] += 0.5f;
    try {
        materialize_cached(path, f.enc, f.dec, f.ptrs);
        FAIL() << "expected a stale-cache error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::stale);
    }
    const auto refreshed = materialize_cached(path, f.enc, f.dec, f.ptrs, CacheMode::refresh);
    EXPECT_FALSE(refreshed.inputs == first.inputs);
    EXPECT_EQ(load_bridge_set(path).encoder_hash, weights_hash(f.enc.encoder_half));

    const std::vector<const SampleRecord*> fewer(f.ptrs.begin(), f.ptrs.begin() + 4);
    EXPECT_THROW(materialize_cached(path, f.enc, f.dec, fewer), Error);
}

TEST(MultiScale, SingleUnitScaleIsPlainBatching)
{
    const std::vector<double> one{1.0};
    const auto batches = multiscale_batches(50, 8, one, 96, 24, 16, 42, 3);
    Rng rng(derive_seed(42, 2003));
    const auto plain = epoch_batches(50, 8, rng);
    ASSERT_EQ(batches.size(), plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        EXPECT_EQ(batches[i].indices, plain[i]);
        EXPECT_EQ(batches[i].input_size, 96);
        EXPECT_EQ(batches[i].target_size, 24);
    }
}

TEST(MultiScale, DrawsFromTheScaleSetDeterministically)
{
    const std::vector<double> scales{0.75, 1.0, 1.25};
    const auto a = multiscale_batches(400, 4, scales, 96, 96, 8, 7, 1);
    const auto b = multiscale_batches(400, 4, scales, 96, 96, 8, 7, 1);
    std::set<int> sizes;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].indices, b[i].indices);
        EXPECT_EQ(a[i].input_size, b[i].input_size);
        sizes.insert(a[i].input_size);
    }
    EXPECT_EQ(sizes, (std::set<int>{72, 96, 120}));
    const auto other = multiscale_batches(400, 4, scales, 96, 96, 8, 7, 2);
    EXPECT_NE(other.front().indices, a.front().indices);
}

TEST(MultiScale, IndivisibleScaleNamesTheScale)
{
    const std::vector<double> scales{1.0, 0.9};
    try {
        multiscale_batches(10, 2, scales, 96, 24, 16, 1, 1);
        FAIL() << "expected a config error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("0.9"), std::string::npos);
    }
    const std::vector<double> ok{0.75};
    EXPECT_THROW(multiscale_batches(10, 2, ok, 96, 24, 32, 1, 1), Error); // 72 % 32
    EXPECT_THROW(multiscale_batches(10, 2, std::vector<double>{}, 96, 24, 1, 1, 1), Error);
}

TEST(BridgeTraining, LossFallsAndRunsAreDeterministic)
{
    Fixture f;
    const auto set = materialize_bridge_set(f.enc, f.dec, f.ptrs);
    BridgeOptions opt;
    opt.train.lr = 3e-3;
    opt.train.batch = 4;
    opt.train.epochs = 8;
    opt.scales = {0.5, 1.0};
    opt.boundary.kernel = 5;
    const auto spec = tiny_bridge();
    const auto a = train_bridge(build_backbone(spec, 9), set, &set, opt, downsampling_factor(spec));
    ASSERT_EQ(a.log.size(), 8u);
    EXPECT_LT(a.log.back().train_loss, a.log.front().train_loss);
    EXPECT_GE(a.best_epoch, 1);
    EXPECT_DOUBLE_EQ(evaluate_bridge_loss(a.net, set, opt.boundary), a.log[std::size_t(a.best_epoch - 1)].val_loss);

    opt.train.epochs = 2;
    const auto b = train_bridge(build_backbone(spec, 9), set, nullptr, opt, 2);
    const auto c = train_bridge(build_backbone(spec, 9), set, nullptr, opt, 2);
    EXPECT_EQ(weights_hash(b.net), weights_hash(c.net));
    EXPECT_EQ(b.log.back().train_loss, c.log.back().train_loss);
}

TEST(BridgeTraining, ToyUnetHalvesItsLossOnSyntheticPairs)
{
    const auto records = generate_synthetic(64, 32, 11);
    std::vector<const SampleRecord*> ptrs;
    for (const auto& r : records)
        ptrs.push_back(&r);
    BridgeTrainingSet set;
    for (const auto* r : ptrs)
        set.ids.push_back(r->id);
    set.inputs = stack_images(ptrs);
    set.targets = stack_masks(ptrs);

    BackboneSpec spec;
    spec.depth = 2;
    spec = with_contract(spec, 3, 32, 1, 32);
    BridgeOptions opt;
    opt.train.lr = 1e-3;
    opt.train.epochs = 30;
    opt.boundary.kernel = 5;
    const auto trained = train_bridge(build_backbone(spec, 4), set, nullptr, opt, downsampling_factor(spec));
    ASSERT_EQ(trained.log.size(), 30u);
    EXPECT_LE(trained.log.back().train_loss, 0.5 * trained.log.front().train_loss)
        << trained.log.front().train_loss << " -> " << trained.log.back().train_loss;
}

TEST(BridgeTraining, RejectsBadInputs)
{
    Fixture f;
    auto set = materialize_bridge_set(f.enc, f.dec, f.ptrs);
    BridgeOptions opt;
    opt.train.epochs = 1;
    opt.scales = {1.0};
    const auto spec = tiny_bridge();

    auto wrong = spec;
    wrong.out_channels = 3;
    EXPECT_THROW(train_bridge(build_backbone(wrong, 1), set, nullptr, opt, 2), Error);

    opt.scales = {0.9};
    EXPECT_THROW(train_bridge(build_backbone(spec, 1), set, nullptr, opt, 2), Error);
    opt.scales = {1.0};

    set.targets[5] = 1.5f;
    try {
        train_bridge(build_backbone(spec, 1), set, nullptr, opt, 2);
        FAIL() << "expected a numeric error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
    set.targets[5] = 1.0005f; // clamped
    EXPECT_NO_THROW(train_bridge(build_backbone(spec, 1), set, nullptr, opt, 2));
}
