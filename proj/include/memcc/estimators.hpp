// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcc/core.hpp"

namespace memcc {

enum class EstimatorFamily {
    gray_world,
    white_patch,
    shades_of_gray,
    gray_edge,
    pca,  // Cheng, Prasad & Brown principal-component estimator
};

/// Minkowski-norm estimator over n-th order Gaussian derivatives:
///   e_c = ( mean_k |D^n I_c(k)|^p )^(1/p),  p = inf meaning max.
struct EstimatorSpec {
    EstimatorFamily family = EstimatorFamily::gray_world;
    double p = 1.0;
    int order = 0;
    double sigma = 0.0;
    double pca_fraction = 0.035;  // pca only: share of pixels kept at each end

    static EstimatorSpec gray_world();
    static EstimatorSpec white_patch();
    static EstimatorSpec shades_of_gray(double p = 6.0);
    static EstimatorSpec gray_edge(double p = 1.0, int order = 1, double sigma = 2.0);
    static EstimatorSpec pca(double fraction = 0.035);

    /// Parses "gray-world", "white-patch", "shades-of-gray", "gray-edge",
    /// "gray-edge-2" (second order) and "pca".
    static EstimatorSpec parse(const std::string& name);

    std::string name() const;
    void validate() const;
};

/// All-zero channel (after the derivative transform) in the pixels used.
class DegenerateEstimateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Illuminant estimate_global(const LinearImage& img, const EstimatorSpec& spec);

struct LocalEstimate {
    EstimateMap map;
    std::vector<int> fallback_cells;  // cells that reused the global estimate
};

/// Applies the estimator to each of the 60 regions. Derivatives are taken on
/// the full image before restriction to a region.
LocalEstimate estimate_local(const LinearImage& img, const EstimatorSpec& spec, const RegionGrid& grid);

/// |D^n img| per channel: identity (optionally Gaussian-smoothed) for n = 0,
/// gradient magnitude for n = 1, sqrt(Ixx^2 + 4 Ixy^2 + Iyy^2) for n = 2.
LinearImage derivative_response(const LinearImage& img, int order, double sigma);

/// Sampled Gaussian derivative of the given order, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma, int order);

}  // namespace memcc
