#include <gtest/gtest.h>

#include "dtp/grid.hpp"
#include "support.hpp"

using namespace dtp;

TEST(Box, MembershipAndClamp) {
    const Box b{{-1.0, 1.0}, {0.0, 2.0}};
    EXPECT_EQ(b.dim(), 2u);
    EXPECT_TRUE(b.contains(Vec{1.0, 2.0}));
    EXPECT_FALSE(b.contains(Vec{1.0 + 1e-9, 2.0}));
    EXPECT_TRUE(b.contains(Vec{1.0 + 1e-9, 2.0}, 1e-8));
    EXPECT_FALSE(b.contains(Vec{0.0}));
    EXPECT_EQ(b.clamp(Vec{3.0, -1.0}), (Vec{1.0, 0.0}));
    EXPECT_DOUBLE_EQ(b.distance_to_boundary(Vec{0.0, 1.5}), 0.5);
    EXPECT_THROW(Box({{1.0, 0.0}}), std::invalid_argument);
}

TEST(Vec, Arithmetic) {
    const Vec a{1.0, 2.0, 2.0};
    EXPECT_DOUBLE_EQ(a.norm(), 3.0);
    EXPECT_DOUBLE_EQ(a.dot(Vec{1.0, 0.0, 1.0}), 3.0);
    EXPECT_EQ(a - a, Vec(3));
    EXPECT_TRUE((Vec{1.0, 2.0}).lex_less(Vec{1.0, 3.0}));
    EXPECT_THROW((void)(a + Vec{1.0}), std::invalid_argument);
}

TEST(Grid, UniformEndpointsExact) {
    const Box box{{-0.75, 0.75}};
    for (std::size_t n : {2u, 3u, 601u, 4001u}) {
        const Grid g = Grid::uniform(box, n);
        EXPECT_EQ(g.size(), n);
        EXPECT_EQ(g.axis(0).front(), -0.75);
        EXPECT_EQ(g.axis(0).back(), 0.75);
    }
    EXPECT_THROW(Grid::uniform(box, 1), std::invalid_argument);
}

TEST(Grid, FlatOrderIsLexicographic) {
    const std::size_t counts[] = {3, 4};
    const Grid g = Grid::uniform(Box{{0.0, 1.0}, {0.0, 1.0}}, counts);
    ASSERT_EQ(g.size(), 12u);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_TRUE(g.node(i - 1).lex_less(g.node(i)));
    EXPECT_EQ(g.axis_index(7, 0), 1u);
    EXPECT_EQ(g.axis_index(7, 1), 3u);
}

TEST(Grid, FromAxesValidatesOrder) {
    EXPECT_NO_THROW(Grid::from_axes({{0.0, 0.5, 2.0}}));
    EXPECT_THROW(Grid::from_axes({{0.0, 0.0, 2.0}}), std::invalid_argument);
    EXPECT_THROW(Grid::from_axes({{0.0}}), std::invalid_argument);
}

TEST(Grid, NearestAndSpacing) {
    const Grid g = Grid::from_axes({{0.0, 1.0, 3.0}});
    EXPECT_EQ(g.nearest(Vec{0.4}), 0u);
    EXPECT_EQ(g.nearest(Vec{2.1}), 2u);
    EXPECT_EQ(g.nearest(Vec{-5.0}), 0u);
    EXPECT_DOUBLE_EQ(g.max_spacing(0), 2.0);
    EXPECT_DOUBLE_EQ(g.cell_diameter(), 2.0);
}

TEST(Grid, InterpolationReproducesNodeValues) {
    test::Gen gen(11);
    const std::size_t counts[] = {5, 7, 4};
    const Grid g = Grid::uniform(Box{{-1.0, 1.0}, {0.0, 3.0}, {2.0, 2.5}}, counts);
    const auto values = gen.table(g.size(), -3.0, 3.0);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(interpolate(g, values, g.node(i)), values[i]);
}

// Multilinear interpolation is exact for functions affine in each coordinate.
TEST(Grid, InterpolationExactOnMultilinearFunctions) {
    test::Gen gen(12);
    const Box box{{-1.0, 2.0}, {0.0, 1.0}};
    const std::size_t counts[] = {9, 6};
    const Grid g = Grid::uniform(box, counts);
    auto f = [](const Vec& x) { return 1.5 - 2.0 * x[0] + 0.5 * x[1] + 3.0 * x[0] * x[1]; };
    std::vector<double> values(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) values[i] = f(g.node(i));
    for (int k = 0; k < 500; ++k) {
        const Vec x = gen.point(box);
        EXPECT_NEAR(interpolate(g, values, x), f(x), 1e-12);
    }
}

TEST(Grid, InterpolationClampsOutsideBox) {
    const Grid g = Grid::uniform(Box{{0.0, 1.0}}, 3);
    const std::vector<double> values{1.0, 2.0, 4.0};
    EXPECT_DOUBLE_EQ(interpolate(g, values, Vec{-1.0}), 1.0);
    EXPECT_DOUBLE_EQ(interpolate(g, values, Vec{2.0}), 4.0);
    EXPECT_DOUBLE_EQ(interpolate(g, values, Vec{0.75}), 3.0);
}

// Interpolated values lie within the range of the enclosing cell's corners.
TEST(Grid, InterpolationIsMonotoneInValues) {
    test::Gen gen(13);
    const Box box{{0.0, 1.0}, {0.0, 1.0}};
    const Grid g = Grid::uniform(box, 6);
    for (int trial = 0; trial < 50; ++trial) {
        auto v = gen.table(g.size(), -1.0, 1.0);
        auto w = v;
        for (auto& e : w) e += gen.uniform(0.0, 0.5);
        const Vec x = gen.point(box);
        EXPECT_LE(interpolate(g, v, x), interpolate(g, w, x) + 1e-15);
    }
}
