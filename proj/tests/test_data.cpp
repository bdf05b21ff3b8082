#include <numeric>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include <treenet/data.hpp>
#include <treenet/image_io.hpp>

#include "test_support.hpp"

using namespace treenet;
using treenet::testing::TempDir;

namespace {

std::vector<std::string> numbered_ids(int n)
{
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i)
        ids.push_back("s" + std::to_string(i));
    return ids;
}

void write_pair(const std::filesystem::path& dir, const std::string& stem, int w, int h)
{
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "masks");
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(10, 128, 250));
    cv::Mat mask(h, w, CV_8UC1, cv::Scalar(0));
    mask(cv::Rect(0, 0, w / 2, h)).setTo(255);
    ASSERT_TRUE(cv::imwrite((dir / "images" / (stem + ".png")).string(), img));
    ASSERT_TRUE(cv::imwrite((dir / "masks" / (stem + ".png")).string(), mask));
}

} // namespace

TEST(Synthetic, DeterministicPerSeed)
{
    const auto a = generate_synthetic(64, 96, 7);
    const auto b = generate_synthetic(64, 96, 7);
    ASSERT_EQ(a.size(), 64u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_TRUE(a[i].image == b[i].image);
        EXPECT_TRUE(a[i].mask == b[i].mask);
    }
    EXPECT_FALSE(generate_synthetic(1, 96, 8)[0].image == a[0].image);
}

TEST(Synthetic, ShapesRangeAndForeground)
{
    const auto big = generate_synthetic(8, 384, 42);
    ASSERT_EQ(big.size(), 8u);
    for (const auto& r : big) {
        EXPECT_EQ(r.image.shape(), Shape4(1, 3, 384, 384));
        EXPECT_EQ(r.mask.shape(), Shape4(1, 1, 384, 384));
        EXPECT_GE(r.image.min(), 0.0f);
        EXPECT_LE(r.image.max(), 1.0f);
    }
    const auto one = generate_synthetic(1, 96, 0)[0];
    const double fg = std::accumulate(one.mask.span().begin(), one.mask.span().end(), 0.0) / one.mask.size();
    EXPECT_GT(fg, 0.0);
    EXPECT_LT(fg, 0.9);
}

TEST(Synthetic, RejectsTinySizes)
{
    EXPECT_THROW(generate_synthetic(4, 15, 1), Error);
    EXPECT_THROW(generate_synthetic(0, 96, 1), Error);
}

TEST(Split, BoundariesFollowFloorRule)
{
    const auto ids = numbered_ids(612);
    const auto s = make_split(ids, {}, 42);
    EXPECT_EQ(s.boundaries, (std::array<std::size_t, 3>{489, 61, 62}));
    const auto ten = make_split(numbered_ids(10), {}, 1);
    EXPECT_EQ(ten.boundaries, (std::array<std::size_t, 3>{8, 1, 1}));
}

TEST(Split, DeterministicPartition)
{
    const auto ids = numbered_ids(100);
    const auto a = make_split(ids, {0.7, 0.2, 0.1}, 5);
    EXPECT_TRUE(a == make_split(ids, {0.7, 0.2, 0.1}, 5));
    EXPECT_FALSE(a.permutation == make_split(ids, {0.7, 0.2, 0.1}, 6).permutation);
    EXPECT_EQ(a.boundaries, (std::array<std::size_t, 3>{70, 20, 10}));

    std::vector<std::string> seen;
    for (Split s : {Split::train, Split::val, Split::test})
        for (const auto& id : a.ids(s))
            seen.push_back(id);
    std::sort(seen.begin(), seen.end());
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(seen, sorted);
}

TEST(Split, RejectsBadInput)
{
    EXPECT_THROW(make_split(std::vector<std::string>{}, {}, 1), Error);
    EXPECT_THROW(make_split(numbered_ids(5), {0.5, 0.5, 0.5}, 1), Error);
    EXPECT_THROW(make_split(std::vector<std::string>{"a", "a"}, {}, 1), Error);
}

TEST(Split, RoundTripsThroughFile)
{
    TempDir dir("split");
    const auto s = make_split(numbered_ids(37), {}, 42);
    s.save(dir.path() / "split.json");
    EXPECT_TRUE(SplitIndex::load(dir.path() / "split.json") == s);
}

TEST(Resize, IdentityConstantAndCorners)
{
    const auto x = treenet::testing::random_tensor<float>({1, 3, 96, 96}, 3, 0.0, 1.0);
    EXPECT_TRUE(resize_bilinear(x, 96) == x);

    const auto half = resize_bilinear(Tensor<float>(Shape4(1, 1, 10, 10), 0.5f), 37);
    for (std::size_t i = 0; i < half.size(); ++i)
        EXPECT_FLOAT_EQ(half[i], 0.5f);

    Tensor<float> board(Shape4(1, 1, 4, 4));
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            board.at(0, 0, y, x) = float((x + y) % 2);
    const auto up = resize_bilinear(board, 8);
    EXPECT_FLOAT_EQ(up.at(0, 0, 0, 0), board.at(0, 0, 0, 0));
    EXPECT_FLOAT_EQ(up.at(0, 0, 0, 7), board.at(0, 0, 0, 3));
    EXPECT_FLOAT_EQ(up.at(0, 0, 7, 0), board.at(0, 0, 3, 0));
    EXPECT_FLOAT_EQ(up.at(0, 0, 7, 7), board.at(0, 0, 3, 3));
}

TEST(Resize, MasksStayBinary)
{
    const auto m = generate_synthetic(1, 64, 3)[0].mask;
    const auto r = resize_bilinear(m, 50, true);
    for (std::size_t i = 0; i < r.size(); ++i)
        EXPECT_TRUE(r[i] == 0.0f || r[i] == 1.0f);
}

TEST(Ingest, FlatLayout)
{
    TempDir dir("ingest");
    for (const char* stem : {"c", "a", "b"})
        write_pair(dir.path(), stem, 40, 30);
    const auto res = ingest_directory(dir.path(), 96);
    ASSERT_EQ(res.records.size(), 3u);
    EXPECT_FALSE(res.presplit.has_value());
    EXPECT_EQ(res.records[0].id, "a");
    EXPECT_EQ(res.records[2].id, "c");
    for (const auto& r : res.records) {
        EXPECT_EQ(r.image.shape(), Shape4(1, 3, 96, 96));
        EXPECT_EQ(r.mask.shape(), Shape4(1, 1, 96, 96));
    }
    // BGR on disk (10, 128, 250) becomes RGB in [0, 1]
    EXPECT_NEAR(res.records[0].image.at(0, 0, 5, 5), 250 / 255.0, 1e-6);
    EXPECT_NEAR(res.records[0].image.at(0, 2, 5, 5), 10 / 255.0, 1e-6);
    EXPECT_EQ(res.records[0].mask.at(0, 0, 5, 5), 1.0f);
    EXPECT_EQ(res.records[0].mask.at(0, 0, 5, 90), 0.0f);
}

TEST(Ingest, PresplitLayout)
{
    TempDir dir("presplit");
    write_pair(dir.path() / "train", "t0", 20, 20);
    write_pair(dir.path() / "train", "t1", 20, 20);
    write_pair(dir.path() / "val", "v0", 20, 20);
    write_pair(dir.path() / "test", "x0", 20, 20);
    const auto res = ingest_directory(dir.path(), 32);
    ASSERT_EQ(res.records.size(), 4u);
    ASSERT_TRUE(res.presplit.has_value());
    EXPECT_EQ(res.presplit->boundaries, (std::array<std::size_t, 3>{2, 1, 1}));
}

TEST(Ingest, Errors)
{
    TempDir empty("empty");
    try {
        ingest_directory(empty.path(), 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("no samples found"), std::string::npos);
    }

    TempDir unpaired("unpaired");
    write_pair(unpaired.path(), "ok", 8, 8);
    std::filesystem::remove(unpaired.path() / "masks" / "ok.png");
    try {
        ingest_directory(unpaired.path(), 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("ok"), std::string::npos);
    }

    TempDir broken("broken");
    write_pair(broken.path(), "bad", 8, 8);
    std::ofstream(broken.path() / "images" / "bad.png") << "not an image";
    try {
        ingest_directory(broken.path(), 32);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
    }
}
