// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/estimators.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace memcc {

EstimatorSpec EstimatorSpec::gray_world() { return {EstimatorFamily::gray_world, 1.0, 0, 0.0}; }

EstimatorSpec EstimatorSpec::white_patch() {
    return {EstimatorFamily::white_patch, std::numeric_limits<double>::infinity(), 0, 0.0};
}

EstimatorSpec EstimatorSpec::shades_of_gray(double p) { return {EstimatorFamily::shades_of_gray, p, 0, 0.0}; }

EstimatorSpec EstimatorSpec::gray_edge(double p, int order, double sigma) {
    return {EstimatorFamily::gray_edge, p, order, sigma};
}

EstimatorSpec EstimatorSpec::pca(double fraction) {
    EstimatorSpec s{EstimatorFamily::pca, 2.0, 0, 0.0};
    s.pca_fraction = fraction;
    return s;
}

EstimatorSpec EstimatorSpec::parse(const std::string& name) {
    if (name == "gray-world") return gray_world();
    if (name == "white-patch") return white_patch();
    if (name == "shades-of-gray") return shades_of_gray();
    if (name == "gray-edge") return gray_edge();
    if (name == "gray-edge-2") return gray_edge(1.0, 2, 2.0);
    if (name == "pca") return pca();
    throw DomainError("unknown estimator '" + name + "'");
}

std::string EstimatorSpec::name() const {
    switch (family) {
        case EstimatorFamily::gray_world: return "gray-world";
        case EstimatorFamily::white_patch: return "white-patch";
        case EstimatorFamily::shades_of_gray: return "shades-of-gray";
        case EstimatorFamily::gray_edge: return order == 2 ? "gray-edge-2" : "gray-edge";
        case EstimatorFamily::pca: return "pca";
    }
    return "unknown";
}

void EstimatorSpec::validate() const {
    auto fail = [](const char* msg) { throw DomainError(std::string("estimator spec: ") + msg); };
    if (!(p >= 1.0)) fail("minkowski p must be >= 1");
    if (order < 0 || order > 2) fail("derivative order must be 0, 1 or 2");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be finite and >= 0");
    if (order >= 1 && !(sigma > 0.0)) fail("derivative estimators need sigma > 0");
    switch (family) {
        case EstimatorFamily::gray_world:
            if (p != 1.0 || order != 0) fail("gray-world requires p = 1, n = 0");
            break;
        case EstimatorFamily::white_patch:
            if (!std::isinf(p) || order != 0) fail("white-patch requires p = inf, n = 0");
            break;
        case EstimatorFamily::shades_of_gray:
            if (order != 0 || std::isinf(p)) fail("shades-of-gray requires finite p, n = 0");
            break;
        case EstimatorFamily::gray_edge:
            if (order < 1) fail("gray-edge requires n >= 1");
            break;
        case EstimatorFamily::pca:
            if (!(pca_fraction > 0.0 && pca_fraction <= 0.5)) fail("pca fraction must be in (0, 0.5]");
            break;
    }
}

std::vector<double> gaussian_kernel(double sigma, int order) {
    if (!(sigma > 0.0)) throw DomainError("gaussian kernel needs sigma > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> g(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int x = -radius; x <= radius; ++x) {
        g[static_cast<std::size_t>(x + radius)] = std::exp(-0.5 * x * x / (sigma * sigma));
        sum += g[static_cast<std::size_t>(x + radius)];
    }
    for (double& v : g) v /= sum;
    if (order == 0) return g;

    const double s2 = sigma * sigma;
    std::vector<double> k(g.size());
    for (int x = -radius; x <= radius; ++x) {
        const double gx = g[static_cast<std::size_t>(x + radius)];
        k[static_cast<std::size_t>(x + radius)] = order == 1 ? -x / s2 * gx : (x * x / (s2 * s2) - 1.0 / s2) * gx;
    }
    if (order == 2) {
        // Zero DC response, so flat regions produce no second-order signal.
        const double mean = std::accumulate(k.begin(), k.end(), 0.0) / static_cast<double>(k.size());
        for (double& v : k) v -= mean;
    }
    return k;
}

namespace {

enum class Axis { rows, cols };

// 1-D correlation along one axis with replicate border padding.
LinearImage convolve(const LinearImage& img, const std::vector<double>& kernel, Axis axis) {
    const int h = img.height();
    const int w = img.width();
    const int radius = static_cast<int>(kernel.size() / 2);
    LinearImage out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int t = -radius; t <= radius; ++t) {
                const double kv = kernel[static_cast<std::size_t>(t + radius)];
                const int rr = axis == Axis::cols ? std::clamp(r + t, 0, h - 1) : r;
                const int cc = axis == Axis::rows ? std::clamp(c + t, 0, w - 1) : c;
                for (int ch = 0; ch < 3; ++ch) acc[ch] += kv * img(rr, cc, ch);
            }
            for (int ch = 0; ch < 3; ++ch) out(r, c, ch) = acc[ch];
        }
    }
    return out;
}

// Kernel along x (within a row) then along y.
LinearImage separable(const LinearImage& img, const std::vector<double>& kx, const std::vector<double>& ky) {
    return convolve(convolve(img, kx, Axis::rows), ky, Axis::cols);
}

std::optional<Rgb> minkowski(const LinearImage& response, const Rect& rect, double p, double floor) {
    Rgb e{};
    const double count = static_cast<double>(rect.area());
    for (int ch = 0; ch < 3; ++ch) {
        double peak = 0.0;
        for (int r = rect.row0; r < rect.row1; ++r) {
            for (int c = rect.col0; c < rect.col1; ++c) peak = std::max(peak, std::abs(response(r, c, ch)));
        }
        if (!(peak > floor)) return std::nullopt;
        if (std::isinf(p)) {
            e[ch] = peak;
            continue;
        }
        double sum = 0.0;
        for (int r = rect.row0; r < rect.row1; ++r) {
            for (int c = rect.col0; c < rect.col1; ++c) {
                const double v = std::abs(response(r, c, ch));
                sum += p == 1.0 ? v : std::pow(v / peak, p);
            }
        }
        // Dividing by the peak first keeps large p from underflowing.
        e[ch] = p == 1.0 ? sum / count : peak * std::pow(sum / count, 1.0 / p);
    }
    return e;
}

std::optional<Rgb> principal_component(const LinearImage& img, const Rect& rect, double fraction) {
    const std::size_t n = rect.area();
    std::vector<Rgb> px;
    px.reserve(n);
    Rgb mean{0.0, 0.0, 0.0};
    for (int r = rect.row0; r < rect.row1; ++r) {
        for (int c = rect.col0; c < rect.col1; ++c) {
            px.push_back(img.pixel(r, c));
            for (int ch = 0; ch < 3; ++ch) mean[ch] += px.back()[ch];
        }
    }
    const double mnorm = std::hypot(mean[0], mean[1], mean[2]);
    if (!(mnorm > 0.0)) return std::nullopt;

    std::vector<double> proj(n);
    for (std::size_t i = 0; i < n; ++i) {
        proj[i] = (px[i][0] * mean[0] + px[i][1] * mean[1] + px[i][2] * mean[2]) / mnorm;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });

    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    auto add = [&](std::size_t i) {
        const Eigen::Vector3d v(px[i][0], px[i][1], px[i][2]);
        scatter += v * v.transpose();
    };
    if (2 * keep >= n) {
        for (std::size_t i = 0; i < n; ++i) add(i);
    } else {
        for (std::size_t i = 0; i < keep; ++i) add(order[i]);
        for (std::size_t i = n - keep; i < n; ++i) add(order[i]);
    }
    if (!(scatter.trace() > 0.0)) return std::nullopt;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
    Eigen::Vector3d v = solver.eigenvectors().col(2);  // largest eigenvalue
    if (v.sum() < 0.0) v = -v;
    const double floor = 1e-9 * v.cwiseAbs().maxCoeff();
    return Rgb{std::max(v[0], floor), std::max(v[1], floor), std::max(v[2], floor)};
}

// Per-channel statistic the estimator reduces over a rectangle.
struct Prepared {
    EstimatorSpec spec;
    LinearImage response;  // image the statistic reads from
    double floor = 0.0;    // responses at or below this count as zero

    std::optional<Rgb> estimate(const Rect& rect) const {
        if (spec.family == EstimatorFamily::pca) return principal_component(response, rect, spec.pca_fraction);
        return minkowski(response, rect, spec.p, floor);
    }
};

Prepared prepare(const LinearImage& img, const EstimatorSpec& spec) {
    spec.validate();
    if (img.empty()) throw DomainError("estimator input image is empty");
    validate_linear(img);
    if (spec.family == EstimatorFamily::pca) return {spec, img};
    // Derivative filters leave rounding residue on flat input; treat it as zero.
    const double floor = spec.order > 0 ? 1e-12 * max_component(img) : 0.0;
    return {spec, derivative_response(img, spec.order, spec.sigma), floor};
}

}  // namespace

LinearImage derivative_response(const LinearImage& img, int order, double sigma) {
    if (order == 0) {
        if (sigma == 0.0) return img;
        const auto g = gaussian_kernel(sigma, 0);
        return separable(img, g, g);
    }
    const auto g0 = gaussian_kernel(sigma, 0);
    const auto g1 = gaussian_kernel(sigma, 1);
    LinearImage out(img.height(), img.width());
    auto dst = out.data();
    if (order == 1) {
        const LinearImage ix = separable(img, g1, g0);
        const LinearImage iy = separable(img, g0, g1);
        auto a = ix.data();
        auto b = iy.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::hypot(a[i], b[i]);
        return out;
    }
    if (order == 2) {
        const auto g2 = gaussian_kernel(sigma, 2);
        const LinearImage ixx = separable(img, g2, g0);
        const LinearImage iyy = separable(img, g0, g2);
        const LinearImage ixy = separable(img, g1, g1);
        auto a = ixx.data();
        auto b = iyy.data();
        auto m = ixy.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::sqrt(a[i] * a[i] + 4.0 * m[i] * m[i] + b[i] * b[i]);
        return out;
    }
    throw DomainError("derivative order must be 0, 1 or 2");
}

Illuminant estimate_global(const LinearImage& img, const EstimatorSpec& spec) {
    const Prepared prepared = prepare(img, spec);
    const auto e = prepared.estimate(Rect{0, img.height(), 0, img.width()});
    if (!e) throw DegenerateEstimateError(spec.name() + ": a channel is zero over the whole image");
    return Illuminant(*e);
}

LocalEstimate estimate_local(const LinearImage& img, const EstimatorSpec& spec, const RegionGrid& grid) {
    if (grid.height() != img.height() || grid.width() != img.width()) {
        throw DomainError("estimate_local: grid does not match image dimensions");
    }
    const Prepared prepared = prepare(img, spec);
    LocalEstimate out;
    std::optional<Illuminant> global;
    for (int j = 0; j < kMapCells; ++j) {
        if (const auto e = prepared.estimate(grid.region(j))) {
            out.map[j] = Illuminant(*e);
            continue;
        }
        if (!global) {
            const auto g = prepared.estimate(Rect{0, img.height(), 0, img.width()});
            if (!g) throw DegenerateEstimateError(spec.name() + ": a channel is zero over the whole image");
            global = Illuminant(*g);
        }
        out.map[j] = *global;
        out.fallback_cells.push_back(j);
    }
    return out;
}

}  // namespace memcc
