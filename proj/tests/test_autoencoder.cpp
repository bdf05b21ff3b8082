#include <gtest/gtest.h>

#include <treenet/autoencoder.hpp>
#include <treenet/data.hpp>

#include "oracles.hpp"

using namespace treenet;
using treenet::testing::central_difference;
using treenet::testing::random_tensor;
using treenet::testing::relative_error;

namespace {

AutoencoderSpec spec_for(AutoencoderKind kind, ShapeSpec s, int budget = 50000, int base = 0)
{
    AutoencoderSpec a;
    a.kind = kind;
    a.shape = s;
    a.parameter_budget = budget;
    a.base_width = base;
    return a;
}

double mean_dice(const Tensor<float>& pred, const Tensor<float>& gt)
{
    double sum = 0;
    for (int n = 0; n < gt.shape().n; ++n)
        sum += dice(confusion(pred.slice(n, 1), gt.slice(n, 1)));
    return sum / gt.shape().n;
}

} // namespace

TEST(ShapeSpec, Validation)
{
    EXPECT_NO_THROW(ShapeSpec{}.validate());
    EXPECT_THROW((ShapeSpec{100, 8, 4}.validate()), Error);
    EXPECT_THROW((ShapeSpec{96, 3, 4}.validate()), Error);
    EXPECT_THROW((ShapeSpec{96, 4, 4, 0}.validate()), Error);
}

TEST(Autoencoder, DefaultBottleneckShapes)
{
    const auto enc = spec_for(AutoencoderKind::input_encoder, {});
    EXPECT_EQ(enc.encoder_graph(40).output_shape(), (TensorShape{3, 96, 96}));
    EXPECT_EQ(enc.decoder_graph(40).output_shape(), (TensorShape{3, 384, 384}));

    const auto dec = spec_for(AutoencoderKind::label_decoder, {384, 4, 16, 3, 16});
    const auto ae = build_autoencoder(dec, 1);
    EXPECT_EQ(ae.encoder_half.graph().output_shape(), (TensorShape{16, 24, 24}));
    const auto out = ae.decode_half(Tensor<float>(Shape4(1, 16, 24, 24)));
    EXPECT_EQ(out.shape(), Shape4(1, 1, 384, 384));
    EXPECT_TRUE(out.all_finite());
    EXPECT_GE(out.min(), 0.0f);
    EXPECT_LE(out.max(), 1.0f);
}

TEST(Autoencoder, ParameterCountsFollowClosedForm)
{
    // e = 4, widths b and 2b: encoder 18b^2 + (9C + 1 + 2 + 18E)b + E,
    // decoder 8b^2 + (18E + 2 + 1 + 4C)b + C.
    const auto closed = [](long b, long C, long E) {
        return 18 * b * b + (9 * C + 1 + 2 + 18 * E) * b + E + 8 * b * b + (18 * E + 2 + 1 + 4 * C) * b + C;
    };
    const auto enc = spec_for(AutoencoderKind::input_encoder, {});
    const auto lab = spec_for(AutoencoderKind::label_decoder, {});
    EXPECT_EQ(enc.parameter_count(40), std::uint64_t(closed(40, 3, 3)));
    EXPECT_EQ(enc.parameter_count(40), 47726u);
    EXPECT_EQ(lab.parameter_count(40), 46684u);
    EXPECT_EQ(enc.resolve_base_width(), 40);
    EXPECT_EQ(lab.resolve_base_width(), 40);

    const auto ae = build_autoencoder(enc, 3);
    EXPECT_EQ(ae.parameter_count(), 47726u);
    EXPECT_EQ(ae.encoder_half.parameter_count() + ae.decoder_half.parameter_count(), count_params(ae.graph()));
    EXPECT_EQ(ae.encoder_half.parameter_count(), count_params(ae.encoder_half.graph()));
}

TEST(Autoencoder, BudgetIsEnforced)
{
    EXPECT_THROW(spec_for(AutoencoderKind::input_encoder, {}, 50000, 8).resolve_base_width(), Error);
    EXPECT_THROW(spec_for(AutoencoderKind::input_encoder, {}, 0).resolve_base_width(), Error);
}

TEST(Autoencoder, EncodeIsDeterministicAndBatchConsistent)
{
    const auto ae = build_autoencoder(spec_for(AutoencoderKind::input_encoder, {96, 4, 4}), 5);
    EXPECT_TRUE(ae.reconstruct(Tensor<float>(Shape4(1, 3, 96, 96))).all_finite());
    const auto x = random_tensor<float>({8, 3, 96, 96}, 6, 0.0, 1.0);
    const auto z = ae.encode(x);
    EXPECT_EQ(z.shape(), Shape4(8, 3, 24, 24));
    EXPECT_TRUE(z == ae.encode(x));
    for (int n = 0; n < 8; ++n)
        EXPECT_TRUE(ae.encode(x.slice(n, 1)) == z.slice(n, 1));
    EXPECT_EQ(ae.decode_half(z).shape(), x.shape());
    EXPECT_THROW(ae.encode(Tensor<float>(Shape4(1, 3, 64, 64))), Error);
    EXPECT_THROW(ae.decode_half(Tensor<float>(Shape4(1, 3, 12, 12))), Error);
}

TEST(Autoencoder, EuclideanGradientsMatchFiniteDifferences)
{
    const auto spec = spec_for(AutoencoderKind::label_decoder, {8, 2, 2, 2, 2}, 100, 3);
    auto enc = Network<float>(spec.encoder_graph(3), 7).cast<double>();
    auto dec = Network<float>(spec.decoder_graph(3), 8).cast<double>();
    const auto x = random_tensor<double>({2, 1, 8, 8}, 9, 0.0, 1.0);
    const auto loss = [&] { return euclidean_loss(dec.infer(enc.infer(x)), x); };

    Tensor<double> g;
    euclidean_loss(dec.forward(enc.forward(x)), x, &g);
    enc.zero_grad();
    dec.zero_grad();
    enc.backward(dec.backward(g, true));
    for (auto* net : {&enc, &dec})
        for (auto& p : net->parameters())
            for (std::size_t k = 0; k < p.value.size(); ++k) {
                const double numeric = central_difference(p.value[k], 1e-6, loss);
                EXPECT_LT(relative_error(p.grad[k], numeric), 1e-3) << p.name << "[" << k << "]";
            }
}

TEST(AutoencoderTraining, ConstantZeroDataIsLearnedQuickly)
{
    const auto spec = spec_for(AutoencoderKind::label_decoder, {16, 2, 2, 3, 3}, 400);
    const Tensor<float> zeros(Shape4(64, 1, 16, 16));
    TrainOptions opt;
    opt.epochs = 5;
    opt.lr = 1e-1;
    opt.batch = 2;
    const auto t = train_autoencoder(build_autoencoder(spec, 1), zeros, nullptr, opt);
    ASSERT_EQ(t.log.size(), 5u);
    EXPECT_LT(t.log.back().train_loss, 1e-6);
}

TEST(AutoencoderTraining, ReconstructsSyntheticData)
{
    const auto records = generate_synthetic(64, 96, 11);
    std::vector<const SampleRecord*> ptrs;
    for (const auto& r : records)
        ptrs.push_back(&r);
    const auto images = stack_images(ptrs);
    const auto masks = stack_masks(ptrs);

    TrainOptions opt;
    opt.epochs = 30;
    const auto img = train_autoencoder(
        build_autoencoder(spec_for(AutoencoderKind::input_encoder, {96, 2, 2}, 6000), 1), images, nullptr, opt);
    EXPECT_LT(img.log.back().train_loss, img.initial_loss / 10);

    const auto lab = train_autoencoder(
        build_autoencoder(spec_for(AutoencoderKind::label_decoder, {96, 2, 2}, 6000), 2), masks, nullptr, opt);
    EXPECT_GT(mean_dice(lab.model.reconstruct(masks), masks), 0.95);

    // same seed, same data: identical weights
    TrainOptions short_opt = opt;
    short_opt.epochs = 2;
    const auto spec = spec_for(AutoencoderKind::label_decoder, {96, 2, 2}, 6000);
    const auto a = train_autoencoder(build_autoencoder(spec, 4), masks, &masks, short_opt);
    const auto b = train_autoencoder(build_autoencoder(spec, 4), masks, &masks, short_opt);
    EXPECT_EQ(weights_hash(a.model.encoder_half), weights_hash(b.model.encoder_half));
    EXPECT_EQ(a.log.back().val_loss, b.log.back().val_loss);
}

TEST(AutoencoderTraining, RejectsMismatchedData)
{
    const auto spec = spec_for(AutoencoderKind::input_encoder, {32, 2, 2}, 2000);
    EXPECT_THROW(train_autoencoder(build_autoencoder(spec, 1), Tensor<float>(Shape4(4, 1, 32, 32)), nullptr, {}),
                 Error);
}
