// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "preditor/metrics.hpp"

using namespace preditor;

TEST(Render, LargeBrightDiscPixels) {
    SceneFactors f;  // large bright disc at the centre of a 16x16 grid
    const auto img = render(f, GridShape{});
    EXPECT_DOUBLE_EQ(img.at(8, 8), kBrightIntensity);
    EXPECT_DOUBLE_EQ(img.at(0, 0), kBackground);
    EXPECT_DOUBLE_EQ(img.at(15, 15), kBackground);
    for (double v : img.values) {
        EXPECT_GE(v, kBackground);
        EXPECT_LE(v, kBrightIntensity);
    }
    f.tone = Tone::dark;
    EXPECT_DOUBLE_EQ(render(f, GridShape{}).at(8, 8), kDarkIntensity);
}

// Squares are sized to the disc's area; the supersampled coverage of both
// matches pi r^2 to within the edge quantisation.
TEST(Render, EqualAreaShapes) {
    for (Size size : {Size::small, Size::large}) {
        SceneFactors f;
        f.size = size;
        auto coverage = [&](Shape s) {
            f.shape = s;
            double total = 0.0;
            for (double v : render(f, GridShape{}).values) total += (v - kBackground) / (kBrightIntensity - kBackground);
            return total;
        };
        const double area = std::numbers::pi * f.radius() * f.radius();
        EXPECT_NEAR(coverage(Shape::disc) / area, 1.0, 0.05);
        EXPECT_NEAR(coverage(Shape::square) / area, 1.0, 0.05);
    }
}

TEST(Render, ChannelsAreCopies) {
    SceneFactors f;
    f.shape = Shape::square;
    const auto rgb = render(f, GridShape{16, 16, 3});
    const auto gray = render(f, GridShape{});
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(rgb.at(r, c, ch), gray.at(r, c));
}

TEST(Render, DeterministicAndShapesDistinct) {
    for (Size size : {Size::small, Size::large}) {
        for (Tone tone : {Tone::bright, Tone::dark}) {
            SceneFactors f;
            f.size = size;
            f.tone = tone;
            const auto disc = render(f, GridShape{});
            EXPECT_EQ(disc, render(f, GridShape{}));
            f.shape = Shape::square;
            const auto square = render(f, GridShape{});
            EXPECT_GT(l2_distance(disc.values, square.values), 0.0);
            EXPECT_GT(structural_distance(disc, square), 0.0);
        }
    }
}

TEST(Render, ObjectMustFit) {
    SceneFactors f;
    f.row = 2.0;
    EXPECT_FALSE(f.fits(GridShape{}));
    EXPECT_THROW(render(f, GridShape{}), RangeError);
}

TEST(Dataset, BalancedFactorsAndConsistentPrompts) {
    const auto items = generate_dataset(1000, 5, GridShape{});
    ASSERT_EQ(items.size(), 1000u);
    int square = 0, large = 0, dark = 0;
    for (const auto& it : items) {
        square += it.factors.shape == Shape::square;
        large += it.factors.size == Size::large;
        dark += it.factors.tone == Tone::dark;
        EXPECT_EQ(it.prompt, it.factors.prompt());
        EXPECT_EQ(it.prompt.concepts.size(), 3u);
        EXPECT_LE(std::abs(it.factors.row - 8.0), 2.0);
        EXPECT_LE(std::abs(it.factors.col - 8.0), 2.0);
        EXPECT_EQ(it.image, render(it.factors, GridShape{}));
    }
    for (int n : {square, large, dark}) {
        EXPECT_GE(n, 400);
        EXPECT_LE(n, 600);
    }
}

TEST(Dataset, DeterministicPerSeed) {
    const auto a = generate_dataset(50, 5, GridShape{}), b = generate_dataset(50, 5, GridShape{});
    const auto c = generate_dataset(50, 6, GridShape{});
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].factors, b[i].factors);
        differs = differs || !(a[i].factors == c[i].factors);
    }
    EXPECT_TRUE(differs);
    EXPECT_THROW(generate_dataset(0, 5, GridShape{}), RangeError);
    EXPECT_THROW(generate_dataset(5, 5, GridShape{}, -1), RangeError);
}

TEST(Dataset, ZeroJitterCentresEveryObject) {
    for (const auto& it : generate_dataset(20, 9, GridShape{}, 0)) {
        EXPECT_EQ(it.factors.row, 8.0);
        EXPECT_EQ(it.factors.col, 8.0);
    }
}

TEST(Dataset, ExportWritesImagesAndManifest) {
    const auto dir = std::filesystem::temp_directory_path() / "preditor_dataset_test";
    std::filesystem::remove_all(dir);
    const auto items = generate_dataset(5, 7, GridShape{});
    const auto written = export_dataset(items, dir);
    ASSERT_EQ(written.size(), 6u);
    std::ifstream manifest(dir / "manifest.csv");
    std::string line;
    std::getline(manifest, line);
    EXPECT_EQ(line, "filename,shape,size,tone,row,col");
    int rows = 0;
    while (std::getline(manifest, line)) {
        EXPECT_EQ(line.rfind("img_0000", 0), 0u);
        ++rows;
    }
    EXPECT_EQ(rows, 5);
    const auto back = read_netpbm(written[2]);
    ASSERT_EQ(back.shape, items[2].image.shape);
    for (std::size_t i = 0; i < back.values.size(); ++i) EXPECT_NEAR(back.values[i], items[2].image.values[i], 0.5 / 255.0 + 1e-12);
    std::filesystem::remove_all(dir);
}
