#include <gtest/gtest.h>

#include <treenet/assembly.hpp>
#include <treenet/backbones.hpp>

#include "oracles.hpp"

using namespace treenet;
using treenet::testing::random_tensor;

namespace {

AutoencoderSpec ae_spec(AutoencoderKind kind, ShapeSpec s, int budget = 50000)
{
    return {kind, s, budget, 0};
}

BackboneSpec bridge_for(const ShapeSpec& s, int depth = 2, int base = 8)
{
    BackboneSpec b;
    b.depth = depth;
    b.base_width = base;
    const auto in = s.encoder_bottleneck();
    const auto out = s.decoder_bottleneck();
    return with_contract(b, in.c, in.h, out.c, out.h);
}

std::vector<const SampleRecord*> pointers(const std::vector<SampleRecord>& records)
{
    std::vector<const SampleRecord*> out;
    for (const auto& r : records)
        out.push_back(&r);
    return out;
}

} // namespace

TEST(Assembly, DefaultShapeChain)
{
    const ShapeSpec s{};
    const auto enc = build_autoencoder(ae_spec(AutoencoderKind::input_encoder, s), 1);
    const auto dec = build_autoencoder(ae_spec(AutoencoderKind::label_decoder, s), 2);
    BackboneSpec b;
    const auto bridge = build_backbone(with_contract(b, 3, 96, 3, 96), 3);
    const auto model = assemble(enc, bridge, dec);
    const auto y = model.predict(random_tensor<float>({1, 3, 384, 384}, 4, 0, 1));
    EXPECT_EQ(y.shape(), Shape4(1, 1, 384, 384));
    EXPECT_GE(y.min(), 0.0f);
    EXPECT_LE(y.max(), 1.0f);
    EXPECT_EQ(model.parameter_count(),
              enc.encoder_half.parameter_count() + bridge.parameter_count() + dec.decoder_half.parameter_count());
    EXPECT_EQ(model.parameter_count(), count_params(model.graph()));
}

TEST(Assembly, MismatchedJunctionIsNamed)
{
    const auto enc = build_autoencoder(ae_spec(AutoencoderKind::input_encoder, {}), 1);
    const auto dec = build_autoencoder(ae_spec(AutoencoderKind::label_decoder, {384, 4, 16, 3, 16}), 2);
    BackboneSpec b;
    const auto bridge = build_backbone(with_contract(b, 3, 96, 3, 96), 3);
    try {
        assemble(enc, bridge, dec);
        FAIL() << "expected a junction error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("junction"), std::string::npos) << msg;
        EXPECT_NE(msg.find("decoder_half"), std::string::npos) << msg;
    }
    EXPECT_THROW(assemble(dec, bridge, enc), Error);
}

TEST(Assembly, MatchesManualCompositionBitForBit)
{
    const ShapeSpec s{64, 2, 4, 3, 4};
    const auto enc = build_autoencoder(ae_spec(AutoencoderKind::input_encoder, s, 3000), 5);
    const auto dec = build_autoencoder(ae_spec(AutoencoderKind::label_decoder, s, 3000), 6);
    const auto bspec = [&] {
        BackboneSpec b;
        b.depth = 2;
        b.base_width = 8;
        return with_contract(b, 3, 32, 4, 16);
    }();
    const auto bridge = build_backbone(bspec, 7);
    const auto model = assemble(enc, bridge, dec);
    for (int i = 0; i < 10; ++i) {
        const auto x = random_tensor<float>({1 + i % 3, 3, 64, 64}, 100 + std::uint64_t(i), 0, 1);
        const auto manual = dec.decode_half(bridge.infer(enc.encode(x)));
        EXPECT_TRUE(model.predict(x) == manual) << "input " << i;
    }
    const auto batch = random_tensor<float>({4, 3, 64, 64}, 9, 0, 1);
    const auto all = model.predict(batch);
    for (int n = 0; n < 4; ++n)
        EXPECT_TRUE(model.predict(batch.slice(n, 1)) == all.slice(n, 1));
    EXPECT_THROW(model.predict(Tensor<float>(Shape4(1, 3, 32, 32))), Error);
    EXPECT_THROW(model.predict(Tensor<float>(Shape4(1, 1, 64, 64))), Error);
}

TEST(Evaluate, OracleAndAllZeroModels)
{
    const auto records = generate_synthetic(6, 32, 2);
    const auto ptrs = pointers(records);
    const auto gt = stack_masks(ptrs);

    int offset = 0; // batches arrive in record order
    const auto oracle = evaluate(
        "oracle", "synthetic",
        [&](const Tensor<float>& x) {
            const auto out = gt.slice(offset, x.shape().n);
            offset += x.shape().n;
            return out;
        },
        ptrs, 0.5, 4);
    ASSERT_EQ(oracle.rows.size(), 6u);
    EXPECT_EQ(oracle.mean_dice(), 1.0);
    EXPECT_EQ(oracle.mean_iou(), 1.0);
    EXPECT_EQ(oracle.mean_acc(), 1.0);

    const auto zeros = evaluate(
        "zeros", "synthetic", [](const Tensor<float>& x) { return Tensor<float>(Shape4(x.shape().n, 1, 32, 32)); },
        ptrs);
    double background = 0;
    for (const auto& r : records) {
        double fg = 0;
        for (std::size_t i = 0; i < r.mask.size(); ++i)
            fg += r.mask[i] >= 0.5f ? 1 : 0;
        background += 1 - fg / double(r.mask.size());
    }
    EXPECT_NEAR(zeros.mean_acc(), background / 6, 1e-12);
    EXPECT_EQ(zeros.mean_dice(), 0.0);

    EXPECT_THROW(evaluate("zeros", "x", [](const Tensor<float>& x) { return x; }, {}), Error);
}

TEST(Evaluate, DeterministicReportsAndRendering)
{
    const ShapeSpec s{32, 2, 2, 3, 2};
    const auto enc = build_autoencoder(ae_spec(AutoencoderKind::input_encoder, s, 2000), 1);
    const auto dec = build_autoencoder(ae_spec(AutoencoderKind::label_decoder, s, 2000), 2);
    const auto model = assemble(enc, build_backbone(bridge_for(s, 1), 3), dec);
    const auto records = generate_synthetic(5, 32, 8);
    const auto a = evaluate(model, pointers(records), 0.5, "Tree-NET", "synthetic", 2);
    const auto b = evaluate(model, pointers(records), 0.5, "Tree-NET", "synthetic", 3);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rows.size(), 5u);
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        EXPECT_EQ(a.rows[i].id, records[i].id);

    auto baseline = a;
    baseline.model = "unet (full resolution)";
    std::vector<nlohmann::json> records_out;
    for (const auto& r : std::vector<MetricsReport>{a, baseline})
        for (auto& j : r.to_records())
            records_out.push_back(j);
    EXPECT_EQ(records_out.size(), 12u);
    const auto back = MetricsReport::from_records(records_out);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], a);
    EXPECT_EQ(back[1].model, baseline.model);

    const auto table = render_metrics_table(back);
    EXPECT_NE(table.find("Tree-NET"), std::string::npos);
    EXPECT_NE(table.find("unet (full resolution)"), std::string::npos);
    EXPECT_NE(table.find("Dice"), std::string::npos);
    EXPECT_NE(table.find("synthetic"), std::string::npos);
}
