#include <gtest/gtest.h>

#include "simbil/error.hpp"
#include "simbil/kernels.hpp"
#include "simbil/mask.hpp"
#include "support.hpp"

using namespace simbil;

namespace {

Mask oracle_dilate(const Mask& m, int r)
{
    Mask out(m.width(), m.height(), 1);
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && xx >= 0 && yy < m.height() && xx < m.width() && m.hole(yy, xx))
                        out.at(y, x) = 0;
                }
    return out;
}

Mask oracle_erode(const Mask& m, int r)
{
    Mask out(m.width(), m.height(), 1);
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && xx >= 0 && yy < m.height() && xx < m.width() && m.known(yy, xx)) all = false;
                }
            if (all) out.at(y, x) = 0;
        }
    return out;
}

bool hole_subset(const Mask& a, const Mask& b)
{
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] == 0 && b.data()[i] != 0) return false;
    return true;
}

} // namespace

TEST(Mask, DilateExamples)
{
    Mask m(5, 5);
    m.at(2, 2) = 0;
    EXPECT_EQ(dilate_hole(m, 0), m);
    const Mask d = dilate_hole(m, 1);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(d.hole(y, x), y >= 1 && y <= 3 && x >= 1 && x <= 3);
    EXPECT_EQ(dilate_hole(Mask(9, 4), 3), Mask(9, 4));
    EXPECT_THROW(dilate_hole(m, -1), ValidationError);
}

TEST(Mask, ErodeExamples)
{
    Mask m(5, 5);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) m.at(y, x) = 0;
    EXPECT_EQ(erode_foreground(m, 0), m);
    const Mask e = erode_foreground(m, 1);
    EXPECT_EQ(e.hole_count(), 1u);
    EXPECT_TRUE(e.hole(2, 2));

    Mask thin(10, 10);
    for (int x = 0; x < 10; ++x) thin.at(4, x) = thin.at(5, x) = 0;
    EXPECT_TRUE(erode_foreground(thin, 1).all_known());
    EXPECT_THROW(erode_foreground(m, -2), ValidationError);
}

TEST(Mask, MorphologyMatchesOracle)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const int w = 1 + static_cast<int>(rng() % 20), h = 1 + static_cast<int>(rng() % 20);
        const Mask m = test::random_mask(rng, w, h, 0.1 + 0.8 * (trial % 5) / 4.0);
        const int r = static_cast<int>(rng() % 5);
        const Mask d = dilate_hole(m, r);
        const Mask e = erode_foreground(m, r);
        EXPECT_EQ(d, oracle_dilate(m, r));
        EXPECT_EQ(e, oracle_erode(m, r));

        std::vector<std::uint8_t> a, b;
        kernels::window_min(m.data(), a, w, h, r);
        kernels::serial::window_min(m.data(), b, w, h, r);
        EXPECT_EQ(a, b);
        kernels::window_max(m.data(), a, w, h, r);
        kernels::serial::window_max(m.data(), b, w, h, r);
        EXPECT_EQ(a, b);
    }
}

TEST(Mask, MorphologyProperties)
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const Mask m = test::random_mask(rng, 17, 13, 0.15);
        const int a = static_cast<int>(rng() % 4), b = static_cast<int>(rng() % 4);
        const Mask da = dilate_hole(m, a);
        EXPECT_TRUE(hole_subset(m, da));
        EXPECT_TRUE(hole_subset(dilate_hole(m, std::max(a, b)), dilate_hole(da, b)));
        const Mask opening = dilate_hole(erode_foreground(m, a), a);
        EXPECT_TRUE(hole_subset(opening, erode_foreground(dilate_hole(m, a), a)));
        const Mask eroded = erode_foreground(m, a);
        for (auto v : da.data()) EXPECT_TRUE(v == 0 || v == 1);
        for (auto v : eroded.data()) EXPECT_TRUE(v == 0 || v == 1);
    }
}

TEST(Mask, FromBBox)
{
    EXPECT_EQ(mask_from_bbox({0, 0, 1, 1}, 6, 3).hole_count(), 18u);
    const Mask m = mask_from_bbox({0.25, 0.25, 0.75, 0.75}, 8, 8);
    EXPECT_EQ(m.hole_count(), 16u);
    EXPECT_EQ(m.hole_rect(), (PixelRect{2, 2, 6, 6}));
    EXPECT_THROW(mask_from_bbox({0.3, 0.3, 0.3, 0.6}, 8, 8), ValidationError);
    EXPECT_THROW(mask_from_bbox({0.3, 0.6, 0.5, 0.2}, 8, 8), ValidationError);
}

TEST(Mask, DefaultRadiusScalesWithSide)
{
    EXPECT_EQ(default_dilation_radius(64, 64), 3);
    EXPECT_EQ(default_dilation_radius(256, 256), 12);
    EXPECT_EQ(default_dilation_radius(32, 32), 2);
}

TEST(Mask, UnionInvertAndPng)
{
    std::mt19937_64 rng(13);
    const Mask a = test::random_mask(rng, 9, 6, 0.3), b = test::random_mask(rng, 9, 6, 0.3);
    const Mask u = hole_union(a, b);
    for (std::size_t i = 0; i < u.size(); ++i)
        EXPECT_EQ(u.data()[i] == 0, a.data()[i] == 0 || b.data()[i] == 0);
    EXPECT_EQ(invert(invert(a)), a);
    EXPECT_EQ(decode_mask_png(encode_mask_png(a)), a);

    Gray8 g{3, 1, {0, 1, 200}};
    const Mask m = decode_mask_png(encode_png_gray(g));
    EXPECT_TRUE(m.hole(0, 0));
    EXPECT_TRUE(m.known(0, 1));
    EXPECT_TRUE(m.known(0, 2));
    const Gray8 back = decode_png_gray(encode_mask_png(m));
    EXPECT_EQ(back.pixels, (std::vector<std::uint8_t>{0, 255, 255}));
}
