// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include <cmath>

#include "doctest.h"
#include "memcc/dataset.hpp"
#include "memcc/estimators.hpp"
#include "oracles.hpp"

using namespace memcc;

namespace {

std::vector<EstimatorSpec> all_specs() {
    return {EstimatorSpec::gray_world(),        EstimatorSpec::white_patch(), EstimatorSpec::shades_of_gray(),
            EstimatorSpec::gray_edge(),         EstimatorSpec::gray_edge(6.0, 1, 2.0),
            EstimatorSpec::gray_edge(1.0, 2, 1.5), EstimatorSpec::pca()};
}

LinearImage gray_ramp_under(const Rgb& light, int h, int w) {
    LinearImage img(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double g = 0.05 + 0.9 * (r * w + c) / static_cast<double>(h * w);
            img.set_pixel(r, c, {g * light[0], g * light[1], g * light[2]});
        }
    }
    return img;
}

// Full 2-D correlation with the outer product of two 1-D kernels.
double naive_response(const LinearImage& img, const std::vector<double>& kx, const std::vector<double>& ky, int r,
                      int c, int ch) {
    const int rad = static_cast<int>(kx.size() / 2);
    double acc = 0.0;
    for (int dy = -rad; dy <= rad; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
            const int rr = std::clamp(r + dy, 0, img.height() - 1);
            const int cc = std::clamp(c + dx, 0, img.width() - 1);
            acc += kx[static_cast<std::size_t>(dx + rad)] * ky[static_cast<std::size_t>(dy + rad)] * img(rr, cc, ch);
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("gray-world recovers the light under achromatic reflectance") {
    const Rgb light = normalize({1.4, 1.0, 0.6});
    const Illuminant e = estimate_global(gray_ramp_under(light, 16, 24), EstimatorSpec::gray_world());
    for (int c = 0; c < 3; ++c) CHECK(std::abs(e[c] - light[c]) < 1e-6);
}

TEST_CASE("white-patch returns the channel maxima") {
    Rng rng(1);
    LinearImage img = oracle::random_image(10, 10, rng, 0.0, 0.25);
    img.set_pixel(2, 3, {0.9, 0.1, 0.1});
    img.set_pixel(7, 1, {0.1, 0.6, 0.1});
    img.set_pixel(5, 5, {0.1, 0.1, 0.3});
    const Illuminant e = estimate_global(img, EstimatorSpec::white_patch());
    CHECK(angular_error(e.rgb(), Rgb{0.9, 0.6, 0.3}) < 1e-12);
}

TEST_CASE("shades-of-gray p=6 matches an extended-precision p-norm") {
    Rng rng(2);
    const LinearImage img = oracle::random_image(8, 8, rng);
    const Illuminant e = estimate_global(img, EstimatorSpec::shades_of_gray(6.0));
    CHECK(angular_error(e.rgb(), oracle::minkowski(img, 6.0)) < 1e-10);
}

TEST_CASE("shades-of-gray p=1 is gray-world; large p approaches white-patch") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const LinearImage img = oracle::random_image(16, 16, rng);
        const Illuminant gw = estimate_global(img, EstimatorSpec::gray_world());
        const Illuminant s1 = estimate_global(img, EstimatorSpec::shades_of_gray(1.0));
        for (int c = 0; c < 3; ++c) CHECK(std::abs(gw[c] - s1[c]) <= 1e-12);
        const Illuminant s50 = estimate_global(img, EstimatorSpec::shades_of_gray(50.0));
        CHECK(angular_error(s50, estimate_global(img, EstimatorSpec::white_patch())) < 0.5);
    }
}

TEST_CASE("all estimators are invariant to exposure scaling") {
    Rng rng(4);
    const LinearImage img = oracle::random_image(24, 30, rng);
    for (const auto& spec : all_specs()) {
        const Illuminant base = estimate_global(img, spec);
        for (double s : {1e-3, 0.37, 5.0, 1e3}) {
            LinearImage scaled = img;
            for (double& v : scaled.data()) v *= s;
            CHECK_MESSAGE(angular_error(estimate_global(scaled, spec), base) < 1e-9, spec.name());
        }
    }
}

TEST_CASE("gaussian derivative response matches direct 2-D correlation") {
    Rng rng(5);
    const LinearImage img = oracle::random_image(14, 17, rng);
    const double sigma = 1.5;
    const auto g0 = gaussian_kernel(sigma, 0);
    const auto g1 = gaussian_kernel(sigma, 1);
    const auto g2 = gaussian_kernel(sigma, 2);
    CHECK(g0.size() == 2 * 5 + 1);

    const LinearImage d1 = derivative_response(img, 1, sigma);
    const LinearImage d2 = derivative_response(img, 2, sigma);
    for (int r = 0; r < 14; r += 3) {
        for (int c = 0; c < 17; c += 2) {
            for (int ch = 0; ch < 3; ++ch) {
                const double ix = naive_response(img, g1, g0, r, c, ch);
                const double iy = naive_response(img, g0, g1, r, c, ch);
                CHECK(d1(r, c, ch) == doctest::Approx(std::hypot(ix, iy)).epsilon(1e-10));
                const double ixx = naive_response(img, g2, g0, r, c, ch);
                const double iyy = naive_response(img, g0, g2, r, c, ch);
                const double ixy = naive_response(img, g1, g1, r, c, ch);
                CHECK(d2(r, c, ch) ==
                      doctest::Approx(std::sqrt(ixx * ixx + 4 * ixy * ixy + iyy * iyy)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("derivative kernels have the expected moments") {
    const auto g0 = gaussian_kernel(2.0, 0);
    const auto g1 = gaussian_kernel(2.0, 1);
    const auto g2 = gaussian_kernel(2.0, 2);
    double s0 = 0, s1 = 0, m1 = 0, s2 = 0;
    const int rad = static_cast<int>(g0.size() / 2);
    for (int x = -rad; x <= rad; ++x) {
        s0 += g0[static_cast<std::size_t>(x + rad)];
        s1 += g1[static_cast<std::size_t>(x + rad)];
        m1 += x * g1[static_cast<std::size_t>(x + rad)];
        s2 += g2[static_cast<std::size_t>(x + rad)];
    }
    CHECK(s0 == doctest::Approx(1.0));
    CHECK(std::abs(s1) < 1e-15);
    CHECK(m1 == doctest::Approx(-1.0).epsilon(0.01));
    CHECK(std::abs(s2) < 1e-15);
    CHECK_THROWS_AS(gaussian_kernel(0.0, 1), DomainError);
}

TEST_CASE("estimate_local: uniform light collapses to the global estimate") {
    Rng rng(6);
    const Rgb light = normalize({0.7, 1.0, 1.3});
    const LinearImage refl = random_reflectance(60, 100, 5, 0.0, rng);
    LinearImage img(60, 100);
    for (int r = 0; r < 60; ++r) {
        for (int c = 0; c < 100; ++c) {
            const Rgb p = refl.pixel(r, c);
            img.set_pixel(r, c, {p[0] * light[0], p[1] * light[1], p[2] * light[2]});
        }
    }
    const RegionGrid grid(60, 100);
    for (const auto& spec : {EstimatorSpec::gray_world(), EstimatorSpec::white_patch(), EstimatorSpec::shades_of_gray(),
                             EstimatorSpec::pca()}) {
        const Illuminant g = estimate_global(img, spec);
        const LocalEstimate local = estimate_local(img, spec, grid);
        CHECK(local.fallback_cells.empty());
        for (const Illuminant& cell : local.map) CHECK(angular_error(cell, g) < 1e-6);
    }
}

TEST_CASE("estimate_local: left/right step scene recovers both lights") {
    Rng rng(7);
    const LinearImage refl = random_reflectance(60, 100, 5, 0.0, rng);
    const Illuminant a(1.4, 1.0, 0.6), b(0.6, 1.0, 1.4);
    Mask mask(60, 100);
    for (int r = 0; r < 60; ++r) {
        for (int c = 0; c < 50; ++c) mask(r, c) = 1.0;
    }
    const ScenePair s = synth_scene(a, b, refl, mask, 0.0, rng);
    const RegionGrid grid(60, 100);
    const EstimateMap map = estimate_local(s.scene, EstimatorSpec::gray_world(), grid).map;
    for (int row = 0; row < kMapRows; ++row) {
        for (int col = 0; col < kMapCols; ++col) CHECK(angular_error(map.at(row, col), col < 5 ? a : b) < 0.5);
    }
}

TEST_CASE("estimate_local: black region falls back to the global estimate") {
    Rng rng(8);
    LinearImage img = oracle::random_image(60, 100, rng);
    const RegionGrid grid(60, 100);
    const Rect dark = grid.region(2, 3);
    for (int r = dark.row0; r < dark.row1; ++r) {
        for (int c = dark.col0; c < dark.col1; ++c) img.set_pixel(r, c, {0, 0, 0});
    }
    const LocalEstimate local = estimate_local(img, EstimatorSpec::gray_world(), grid);
    REQUIRE(local.fallback_cells == std::vector<int>{23});
    CHECK(local.map[23] == estimate_global(img, EstimatorSpec::gray_world()));
}

TEST_CASE("pca recovers a constant light on achromatic surfaces") {
    const Rgb light = normalize({1.2, 1.0, 0.7});
    const Illuminant e = estimate_global(gray_ramp_under(light, 30, 40), EstimatorSpec::pca());
    CHECK(angular_error(e.rgb(), light) < 1e-9);
}

TEST_CASE("degenerate input and EstimatorSpec validation") {
    LinearImage black(10, 10, 0.0);
    CHECK_THROWS_AS(estimate_global(black, EstimatorSpec::gray_world()), DegenerateEstimateError);
    LinearImage flat(10, 10, 0.5);
    CHECK_THROWS_AS(estimate_global(flat, EstimatorSpec::gray_edge()), DegenerateEstimateError);

    EstimatorSpec bad = EstimatorSpec::gray_world();
    bad.p = 2.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    CHECK_THROWS_AS(EstimatorSpec::gray_edge(1.0, 1, 0.0).validate(), DomainError);
    CHECK_THROWS_AS(EstimatorSpec::parse("grey-world"), DomainError);
    for (const auto& spec : all_specs()) CHECK_NOTHROW(spec.validate());
    CHECK(EstimatorSpec::parse("gray-edge-2").order == 2);
    CHECK(EstimatorSpec::parse(EstimatorSpec::pca().name()).family == EstimatorFamily::pca);
}
