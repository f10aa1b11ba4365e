// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <functional>

#include "memcc/core.hpp"
#include "memcc/estimators.hpp"

namespace memcc {

/// Per-pixel illuminant at scene resolution. Components are strictly positive.
using IlluminantField = Image<struct FieldTag>;

inline constexpr int kDefaultSmoothingWindow = 49;

/// Nearest-neighbour expansion: every pixel of region j carries cell j.
IlluminantField upsample(const EstimateMap& map, const RegionGrid& grid);

/// k x k box mean per channel with replicate padding, O(H*W) in k.
/// k must be odd and 1 <= k <= min(H, W).
IlluminantField mean_filter(const IlluminantField& field, int k);

/// mean_filter followed by per-pixel renormalization to norm sqrt(3), so the
/// smoothing only changes chromatic transitions.
IlluminantField smooth(const IlluminantField& field, int k = kDefaultSmoothingWindow);

/// Diagonal (von Kries) correction: scene divided componentwise by the field.
/// No clipping is applied.
LinearImage correct(const LinearImage& scene, const IlluminantField& field);

IlluminantField reciprocal(const IlluminantField& field);

/// Field holding the gt image's own per-pixel illuminant.
IlluminantField field_from_gt(const LinearImage& gt);

/// Anything that turns a scene into a 6x10 estimate map.
using LocalEstimator = std::function<EstimateMap(const LinearImage& scene, const RegionGrid& grid)>;

LocalEstimator statistical_estimator(const EstimatorSpec& spec);

struct Correction {
    LinearImage corrected;
    EstimateMap map;
    IlluminantField field;  // smoothed, at scene resolution
};

/// estimate -> upsample -> smooth(k) -> correct.
Correction mem_correct(const LinearImage& scene, const LocalEstimator& estimator, int k = kDefaultSmoothingWindow);

/// Correction by a single global illuminant.
LinearImage correct_global(const LinearImage& scene, const Illuminant& light);

/// Display rendering: scale so the largest component is 1 (when above 1),
/// clip to [0, 1] and gamma encode.
LinearImage to_display(const LinearImage& img, GammaPolicy policy = {});

}  // namespace memcc
