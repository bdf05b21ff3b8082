#include <gtest/gtest.h>

#include <treenet/profiler.hpp>

using namespace treenet;

namespace {

/// Stride-1 convolution stack whose cost scales with pixel count only.
LayerGraph conv_stack(int size)
{
    LayerGraph g(TensorShape{3, size, size}, "stack");
    int x = g.input();
    for (int c : {16, 32, 16})
        x = g.activation(g.conv2d(x, c, 3, 1, 1), Activation::relu);
    g.conv2d(x, 3, 1, 1, 0);
    return g;
}

ProfileFamily small_toy(int N)
{
    auto f = default_families(N).back();
    f.backbone.base_width = 8;
    f.autoencoder_budget = 6000;
    return f;
}

} // namespace

TEST(Profiler, ConvStackAtQuarterSideCostsOneSixteenth)
{
    const auto full = count_flops(conv_stack(384));
    const auto small = count_flops(conv_stack(96));
    // hand count per pixel: 2*9*(3*16 + 16*32 + 32*16) + 2*3*16 + 3*(16+32+16)
    const std::uint64_t per_pixel = 2 * 9 * (3 * 16 + 16 * 32 + 32 * 16) + 2 * 16 * 3 + 16 + 32 + 16;
    EXPECT_EQ(small, per_pixel * 96 * 96);
    EXPECT_EQ(full, 16 * small);
}

TEST(Profiler, FamilyCostsAndRatios)
{
    const auto families = default_families();
    ASSERT_EQ(families.size(), 4u);
    for (const auto& f : families) {
        const auto cost = family_cost(f);
        SCOPED_TRACE(f.name);
        EXPECT_EQ(cost.treenet_flops(1), count_flops(cost.treenet()));
        EXPECT_EQ(cost.treenet_params(), count_params(cost.treenet()));
        EXPECT_EQ(cost.treenet_flops(8), 8 * cost.treenet_flops(1));
        const double ratio = cost.flop_ratio();
        EXPECT_GT(ratio, 4.0);
        EXPECT_LE(ratio, 16.0);
        if (f.name == "toy U-NET") {
            EXPECT_GE(ratio, 8.0);
        }
        if (f.name != "PVT-stub") {
            const double bridge_ratio = double(count_flops(cost.original)) / double(count_flops(cost.bridge));
            EXPECT_NEAR(bridge_ratio, 16.0, 16.0 * 0.02);
        }
    }
}

TEST(Profiler, StaticReportHasNoMemory)
{
    const auto report = compare(default_families(), false);
    ASSERT_EQ(report.rows.size(), 16u);
    ASSERT_EQ(report.flop_ratios.size(), 4u);
    for (const auto& r : report.rows) {
        EXPECT_FALSE(r.peak_mem_gb.has_value());
        EXPECT_EQ(r.memory_method, "unavailable");
    }
    const auto& unet_tree = report.rows[0];
    EXPECT_EQ(unet_tree.model, "U-NET");
    EXPECT_EQ(unet_tree.variant, "treenet");
    EXPECT_EQ(unet_tree.batch, 1);
    EXPECT_NEAR(report.rows[2].flops_g, 8 * unet_tree.flops_g, 1e-9);

    const auto back = ComparisonReport::from_records(report.to_records());
    ASSERT_EQ(back.rows.size(), report.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].model, report.rows[i].model);
        EXPECT_EQ(back.rows[i].flops_g, report.rows[i].flops_g);
        EXPECT_FALSE(back.rows[i].peak_mem_gb.has_value());
    }
    EXPECT_EQ(back.flop_ratios, report.flop_ratios);

    const auto table = render_efficiency_table(report);
    EXPECT_NE(table.find("unavailable"), std::string::npos);
    EXPECT_NE(table.find("PVT-stub"), std::string::npos);
    EXPECT_EQ(table.find("Memory:"), std::string::npos);
}

TEST(Profiler, MeasuredMemoryOrdering)
{
    const auto report = compare({small_toy(128)}, true);
    ASSERT_EQ(report.rows.size(), 4u);
    auto find = [&](const std::string& variant, int batch) {
        for (const auto& r : report.rows)
            if (r.variant == variant && r.batch == batch)
                return *r.peak_mem_gb;
        ADD_FAILURE() << variant << " " << batch;
        return 0.0;
    };
    for (const auto& r : report.rows) {
        ASSERT_TRUE(r.peak_mem_gb.has_value());
        EXPECT_GT(*r.peak_mem_gb, 0.0);
        EXPECT_EQ(r.memory_method, kMemoryMethod);
    }
    EXPECT_GE(find("treenet", 8), find("treenet", 1));
    EXPECT_GE(find("original", 8), find("original", 1));
    EXPECT_LT(find("treenet", 1), find("original", 1));
    EXPECT_LT(find("treenet", 8), find("original", 8));
    EXPECT_NE(render_efficiency_table(report).find("Memory:"), std::string::npos);
}

TEST(Profiler, MemoryRepeatsWithinTenPercent)
{
    const Network<float> net(conv_stack(64), 1);
    std::vector<double> runs;
    for (int i = 0; i < 5; ++i)
        runs.push_back(double(measure_peak_bytes(net, Shape4(2, 3, 64, 64))));
    const auto [lo, hi] = std::minmax_element(runs.begin(), runs.end());
    EXPECT_LE(*hi - *lo, 0.1 * *lo);
    // at least the input and one conv output with its activation
    EXPECT_GE(*lo, double((2 * 3 * 64 * 64 + 2 * 32 * 64 * 64) * sizeof(float)));
}
