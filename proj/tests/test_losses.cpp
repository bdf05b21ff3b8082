#include <cmath>

#include <gtest/gtest.h>

#include <treenet/losses.hpp>

#include "oracles.hpp"

using namespace treenet;
using treenet::testing::max_gradient_error;
using treenet::testing::naive_scores;
using treenet::testing::random_mask;
using treenet::testing::random_tensor;

namespace {

Tensor<float> plane(int h, int w, float v) { return Tensor<float>(Shape4(1, 1, h, w), v); }

} // namespace

TEST(Metrics, IdentityAndComplement)
{
    const auto gt = random_mask({1, 1, 16, 16}, 1, 0.3);
    const auto same = confusion(gt, gt);
    EXPECT_EQ(same.fp, 0u);
    EXPECT_EQ(same.fn, 0u);
    EXPECT_DOUBLE_EQ(dice(same), 1.0);
    EXPECT_DOUBLE_EQ(iou(same), 1.0);
    EXPECT_DOUBLE_EQ(accuracy(same), 1.0);

    Tensor<float> inv(gt.shape());
    for (std::size_t i = 0; i < gt.size(); ++i)
        inv[i] = 1 - gt[i];
    const auto c = confusion(inv, gt);
    EXPECT_EQ(c.tp, 0u);
    EXPECT_EQ(c.tn, 0u);
    EXPECT_EQ(c.total(), 256u);
}

TEST(Metrics, ClosedFormCounts)
{
    EXPECT_DOUBLE_EQ(dice({10, 0, 0, 0}), 1.0);
    EXPECT_NEAR(dice({10, 0, 5, 5}), 20.0 / 30.0, 1e-15);
    EXPECT_DOUBLE_EQ(iou({10, 0, 5, 5}), 0.5);
    EXPECT_DOUBLE_EQ(dice({0, 100, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(iou({0, 100, 0, 0}), 1.0);
}

TEST(Metrics, AllBackgroundAccuracyIsBackgroundFraction)
{
    auto gt = plane(10, 10, 0);
    for (int x = 0; x < 10; ++x)
        gt.at(0, 0, 0, x) = 1;
    EXPECT_DOUBLE_EQ(accuracy(confusion(plane(10, 10, 0), gt)), 0.9);
}

TEST(Metrics, MatchBruteForceOracle)
{
    for (int trial = 0; trial < 200; ++trial) {
        const auto gt = random_mask({1, 1, 16, 16}, 1000 + trial, 0.05 + 0.9 * (trial % 10) / 10.0);
        const auto pred = random_tensor<float>({1, 1, 16, 16}, 5000 + trial, 0.0, 1.0);
        const auto c = confusion(pred, gt);
        const auto ref = naive_scores(pred, gt);
        EXPECT_EQ(c.total(), 256u);
        EXPECT_EQ(dice(c), ref.dice);
        EXPECT_EQ(iou(c), ref.iou);
        EXPECT_EQ(accuracy(c), ref.acc);
        const double j = iou(c);
        EXPECT_NEAR(dice(c), 2 * j / (1 + j), 1e-12);
    }
}

TEST(Metrics, ShapeMismatchThrows)
{
    EXPECT_THROW(confusion(plane(4, 4, 0), plane(4, 5, 0)), Error);
}

TEST(BoundaryWeights, ConstantMaskHasUnitWeightsAwayFromPadding)
{
    const auto w0 = boundary_weights(plane(40, 40, 0));
    for (std::size_t i = 0; i < w0.size(); ++i)
        EXPECT_FLOAT_EQ(w0[i], 1.0f);
    // all-ones: interior pixels whose window lies inside the image stay at 1
    const auto w1 = boundary_weights(plane(40, 40, 1));
    EXPECT_FLOAT_EQ(w1.at(0, 0, 20, 20), 1.0f);
}

TEST(BoundaryWeights, SingleForegroundPixel)
{
    auto gt = plane(33, 33, 0);
    gt.at(0, 0, 16, 16) = 1;
    const auto w = boundary_weights(gt);
    EXPECT_NEAR(w.at(0, 0, 16, 16), 1 + 5 * (1 - 1.0 / 961), 1e-5);
    EXPECT_NEAR(w.at(0, 0, 1, 1), 1 + 5.0 / 961, 1e-6);
    EXPECT_FLOAT_EQ(w.at(0, 0, 0, 0), 1.0f);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_GE(w[i], 1.0f);
}

TEST(WeightedBce, ClosedForms)
{
    const auto t = random_mask({1, 1, 8, 8}, 3, 0.5);
    const auto w = plane(8, 8, 1);
    EXPECT_NEAR(weighted_bce(plane(8, 8, 0.5f), t, w), std::log(2.0), 1e-7);
    EXPECT_LT(weighted_bce(t, t, w), 1e-5);
}

TEST(WeightedIou, ClosedForms)
{
    const auto ones = plane(8, 8, 1);
    EXPECT_LT(weighted_iou_loss(ones, ones, ones), 1e-6);
    const auto t = random_mask({1, 1, 8, 8}, 4, 0.5);
    Tensor<float> inv(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i)
        inv[i] = 1 - t[i];
    EXPECT_GE(weighted_iou_loss(inv, t, ones), 0.9);
}

TEST(WeightedIou, MonotoneAlongInterpolation)
{
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_mask({1, 1, 12, 12}, 70 + trial, 0.4);
        const auto p0 = random_tensor<float>(t.shape(), 90 + trial, 0.0, 1.0);
        const auto w = boundary_weights(t, {5, 5});
        double prev = 2;
        for (int step = 0; step <= 10; ++step) {
            const float a = step / 10.0f;
            Tensor<float> p(t.shape());
            for (std::size_t i = 0; i < p.size(); ++i)
                p[i] = (1 - a) * p0[i] + a * t[i];
            const double v = weighted_iou_loss(p, t, w);
            EXPECT_LE(v, prev + 1e-12);
            prev = v;
        }
    }
}

TEST(CompositeLoss, SumsComponents)
{
    const auto t = random_mask({2, 1, 8, 8}, 11, 0.5);
    const auto p = random_tensor<float>(t.shape(), 12, 0.05, 0.95);
    const auto w = boundary_weights(t);
    const auto v = composite_loss(p, t, w);
    EXPECT_DOUBLE_EQ(v.total, weighted_bce(p, t, w) + weighted_iou_loss(p, t, w));
    EXPECT_LT(composite_loss(t, t, w).total, 1e-4);
    EXPECT_TRUE(std::isfinite(composite_loss(plane(8, 8, 0), plane(8, 8, 1), plane(8, 8, 1)).total));
}

TEST(EuclideanLoss, ClosedForms)
{
    const auto a = random_tensor<float>({1, 2, 5, 5}, 5, 0.0, 0.8);
    Tensor<double> ad = a.cast<double>(), bd(ad.shape());
    for (std::size_t i = 0; i < ad.size(); ++i)
        bd[i] = ad[i] + 0.1;
    EXPECT_EQ(euclidean_loss(a, a), 0.0);
    EXPECT_NEAR(euclidean_loss(bd, ad), 0.01, 1e-12);
    EXPECT_DOUBLE_EQ(euclidean_loss(ad, bd), euclidean_loss(bd, ad));
}

TEST(LossGradients, MatchCentralDifferences)
{
    const Shape4 s(1, 1, 4, 4);
    const auto target = random_tensor<double>(s, 21, 0.0, 1.0);
    const auto w = boundary_weights(random_mask(s, 22, 0.5), {3, 5}).cast<double>();
    const auto pred = random_tensor<double>(s, 23, 0.1, 0.9);

    Tensor<double> g;
    weighted_bce(pred, target, w, &g);
    EXPECT_LT(max_gradient_error(pred, g, [&](const Tensor<double>& p) { return weighted_bce(p, target, w); }), 1e-3);
    weighted_iou_loss(pred, target, w, &g);
    EXPECT_LT(max_gradient_error(pred, g, [&](const Tensor<double>& p) { return weighted_iou_loss(p, target, w); }),
              1e-3);
    euclidean_loss(pred, target, &g);
    EXPECT_LT(max_gradient_error(pred, g, [&](const Tensor<double>& p) { return euclidean_loss(p, target); }), 1e-3);
}
