// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace memcc {

IlluminantField upsample(const EstimateMap& map, const RegionGrid& grid) {
    IlluminantField field(grid.height(), grid.width());
    for (int j = 0; j < kMapCells; ++j) {
        const Rect rect = grid.region(j);
        for (int r = rect.row0; r < rect.row1; ++r) {
            for (int c = rect.col0; c < rect.col1; ++c) field.set_pixel(r, c, map[j].rgb());
        }
    }
    return field;
}

namespace {

// Running box sum along rows (or columns when `vertical`), replicate padding.
IlluminantField box_pass(const IlluminantField& in, int radius, bool vertical) {
    const int h = in.height();
    const int w = in.width();
    const int lines = vertical ? w : h;
    const int len = vertical ? h : w;
    const double inv = 1.0 / (2 * radius + 1);
    IlluminantField out(h, w);
    auto at = [&](int line, int pos, int ch) {
        pos = std::clamp(pos, 0, len - 1);
        return vertical ? in(pos, line, ch) : in(line, pos, ch);
    };
    for (int line = 0; line < lines; ++line) {
        for (int ch = 0; ch < 3; ++ch) {
            double sum = 0.0;
            for (int t = -radius; t <= radius; ++t) sum += at(line, t, ch);
            for (int pos = 0; pos < len; ++pos) {
                (vertical ? out(pos, line, ch) : out(line, pos, ch)) = sum * inv;
                sum += at(line, pos + radius + 1, ch) - at(line, pos - radius, ch);
            }
        }
    }
    return out;
}

}  // namespace

IlluminantField mean_filter(const IlluminantField& field, int k) {
    if (k < 1 || k % 2 == 0) throw DomainError("smoothing window must be odd and >= 1, got " + std::to_string(k));
    if (k > std::min(field.height(), field.width())) {
        throw DomainError("smoothing window " + std::to_string(k) + " exceeds field size");
    }
    if (k == 1) return field;
    const int radius = k / 2;
    return box_pass(box_pass(field, radius, false), radius, true);
}

IlluminantField smooth(const IlluminantField& field, int k) {
    IlluminantField out = mean_filter(field, k);
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            const Rgb v = out.pixel(r, c);
            if (!(v[0] > 0.0 && v[1] > 0.0 && v[2] > 0.0)) throw DomainError("smooth: field must be strictly positive");
            out.set_pixel(r, c, normalize(v));
        }
    }
    return out;
}

LinearImage correct(const LinearImage& scene, const IlluminantField& field) {
    if (!scene.same_shape(field)) throw DomainError("correct: scene and field dimensions differ");
    LinearImage out(scene.height(), scene.width());
    auto s = scene.data();
    auto f = field.data();
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(f[i] > 0.0)) throw DomainError("correct: field must be strictly positive");
        d[i] = s[i] / f[i];
    }
    return out;
}

IlluminantField reciprocal(const IlluminantField& field) {
    IlluminantField out(field.height(), field.width());
    auto f = field.data();
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(f[i] > 0.0)) throw DomainError("reciprocal: field must be strictly positive");
        d[i] = 1.0 / f[i];
    }
    return out;
}

IlluminantField field_from_gt(const LinearImage& gt) {
    IlluminantField field(gt.height(), gt.width());
    for (int r = 0; r < gt.height(); ++r) {
        for (int c = 0; c < gt.width(); ++c) field.set_pixel(r, c, Illuminant(gt.pixel(r, c)).rgb());
    }
    return field;
}

LocalEstimator statistical_estimator(const EstimatorSpec& spec) {
    spec.validate();
    return [spec](const LinearImage& scene, const RegionGrid& grid) { return estimate_local(scene, spec, grid).map; };
}

Correction mem_correct(const LinearImage& scene, const LocalEstimator& estimator, int k) {
    const RegionGrid grid(scene.height(), scene.width());
    Correction out;
    out.map = estimator(scene, grid);
    out.field = smooth(upsample(out.map, grid), k);
    out.corrected = correct(scene, out.field);
    return out;
}

LinearImage correct_global(const LinearImage& scene, const Illuminant& light) {
    IlluminantField field(scene.height(), scene.width());
    for (int r = 0; r < field.height(); ++r) {
        for (int c = 0; c < field.width(); ++c) field.set_pixel(r, c, light.rgb());
    }
    return correct(scene, field);
}

LinearImage to_display(const LinearImage& img, GammaPolicy policy) {
    const double peak = max_component(img);
    const double scale = peak > 1.0 ? 1.0 / peak : 1.0;
    LinearImage out(img.height(), img.width());
    auto s = img.data();
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = std::isfinite(s[i]) ? std::clamp(s[i] * scale, 0.0, 1.0) : 0.0;
        d[i] = v;
    }
    return gamma_encode(out, policy);
}

}  // namespace memcc
