// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/core.hpp"

#include <cmath>
#include <numbers>

namespace memcc {

namespace {

bool all_finite(const Rgb& v) {
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

double norm(const Rgb& v) { return std::hypot(v[0], v[1], v[2]); }

void check_gamma(GammaPolicy policy) {
    if (!(policy.exponent > 0.0) || !std::isfinite(policy.exponent)) {
        throw DomainError("gamma exponent must be positive and finite");
    }
}

void check_unit_range(double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError("gamma transfer expects components in [0, 1], got " + std::to_string(x));
    }
}

}  // namespace

Rgb normalize(const Rgb& v) {
    if (!all_finite(v)) throw DomainError("normalize: non-finite component");
    const double n = norm(v);
    if (!(n > 0.0)) throw DomainError("normalize: zero-norm vector");
    const double s = kSqrt3 / n;
    return {v[0] * s, v[1] * s, v[2] * s};
}

double angular_error(const Rgb& a, const Rgb& b) {
    if (!all_finite(a) || !all_finite(b)) throw DomainError("angular_error: non-finite component");
    const double na = norm(a);
    const double nb = norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("angular_error: zero-norm vector");

    // atan2 of |a x b| and a.b equals arccos of the cosine but keeps full
    // precision near 0 and 180 degrees.
    const Rgb ua{a[0] / na, a[1] / na, a[2] / na};
    const Rgb ub{b[0] / nb, b[1] / nb, b[2] / nb};
    const Rgb cross{ua[1] * ub[2] - ua[2] * ub[1], ua[2] * ub[0] - ua[0] * ub[2], ua[0] * ub[1] - ua[1] * ub[0]};
    const double dot = ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2];
    return std::atan2(norm(cross), dot) * (180.0 / std::numbers::pi);
}

Illuminant::Illuminant(const Rgb& v) {
    if (!all_finite(v) || !(v[0] > 0.0 && v[1] > 0.0 && v[2] > 0.0)) {
        throw DomainError("illuminant components must be positive and finite");
    }
    rgb_ = normalize(v);
}

double angular_error(const Illuminant& a, const Illuminant& b) {
    return angular_error(a.rgb(), b.rgb());
}

void validate_linear(const LinearImage& img) {
    for (double v : img.data()) {
        if (!std::isfinite(v) || v < 0.0) throw DomainError("linear image components must be finite and >= 0");
    }
}

double max_component(const LinearImage& img) {
    double m = 0.0;
    for (double v : img.data()) m = std::max(m, v);
    return m;
}

RegionGrid::RegionGrid(int height, int width) : height_(height), width_(width) {
    if (height < kMapRows || width < kMapCols) {
        throw DomainError("region grid needs at least 6x10 pixels, got " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
    const int rh = height / kMapRows;
    const int cw = width / kMapCols;
    for (int i = 0; i < kMapRows; ++i) rows_[static_cast<std::size_t>(i)] = i * rh;
    for (int i = 0; i < kMapCols; ++i) cols_[static_cast<std::size_t>(i)] = i * cw;
    rows_[kMapRows] = height;
    cols_[kMapCols] = width;
}

int RegionGrid::row_of(int r) const noexcept {
    return std::min(r / (height_ / kMapRows), kMapRows - 1);
}

int RegionGrid::col_of(int c) const noexcept {
    return std::min(c / (width_ / kMapCols), kMapCols - 1);
}

RegionGrid make_region_grid(int height, int width) { return RegionGrid(height, width); }

double gamma_encode(double x, GammaPolicy policy) {
    check_gamma(policy);
    check_unit_range(x);
    return std::pow(x, 1.0 / policy.exponent);
}

double gamma_decode(double x, GammaPolicy policy) {
    check_gamma(policy);
    check_unit_range(x);
    return std::pow(x, policy.exponent);
}

LinearImage gamma_encode(const LinearImage& img, GammaPolicy policy) {
    check_gamma(policy);
    LinearImage out(img.height(), img.width());
    auto src = img.data();
    auto dst = out.data();
    const double e = 1.0 / policy.exponent;
    for (std::size_t i = 0; i < src.size(); ++i) {
        check_unit_range(src[i]);
        dst[i] = std::pow(src[i], e);
    }
    return out;
}

LinearImage gamma_decode(const LinearImage& img, GammaPolicy policy) {
    check_gamma(policy);
    LinearImage out(img.height(), img.width());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        check_unit_range(src[i]);
        dst[i] = std::pow(src[i], policy.exponent);
    }
    return out;
}

}  // namespace memcc
