// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "memcc/core.hpp"
#include "memcc/io.hpp"
#include "memcc/random.hpp"

namespace memcc {

/// Scene image plus its per-pixel ground-truth illuminant image.
struct ScenePair {
    LinearImage scene;
    LinearImage gt;
    std::string id;
};

enum class Split { train, test };
enum class Transfer { linear, gamma22 };

std::string_view to_string(Split s);
std::string_view to_string(Transfer t);

struct ManifestEntry {
    std::filesystem::path scene;  // relative to the manifest directory
    std::filesystem::path gt;
    std::string id;
    Split split = Split::train;
    Transfer transfer = Transfer::linear;  // applies to the scene file; gt files are always linear
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> entries_in(Split s) const;
};

/// Parse the tab-separated manifest format
/// `<scene-path>\t<gt-path>\t<id>\t<split>\t<transfer>`; `#` starts a comment.
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);

/// Reads both images, linearizes the scene, repairs and normalizes the gt.
ScenePair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Writes a pair as 16-bit PNGs at the entry's paths. The scene is scaled
/// down if it exceeds 1 and encoded per entry.transfer; the gt is scaled to
/// a peak of 0.9 so no pixel reads back as saturated.
void save_pair(const std::filesystem::path& root, const ManifestEntry& entry, const ScenePair& pair);

/// Replace every gt pixel that has a component <= 0, >= `saturation` or
/// non-finite with a copy of the nearest valid pixel (Euclidean pixel
/// distance, ties to the smallest row-major index). Returns the number of
/// repaired pixels. Throws DomainError if no pixel is valid.
std::size_t repair_gt(LinearImage& gt, double saturation = std::numeric_limits<double>::infinity());

/// Rescale every pixel to norm sqrt(3). Pixels must be non-zero.
void normalize_pixels(LinearImage& img);

struct GlobalGtOptions {
    int clusters = 3;
    int iterations = 20;
};

/// Single illuminant summarizing a multi-illuminant gt image: k-means over the
/// normalized per-pixel vectors, then the normalized sum of the centroids of
/// the two most populated clusters. Independent of pixel order.
Illuminant global_gt_vector(const LinearImage& gt, const GlobalGtOptions& options = {});

struct AugmentationConfig {
    int crop_height = 216;
    int crop_width = 325;
    double flip_probability = 0.5;  // per axis
    std::uint64_t seed = 0;
};

/// Geometric transform shared by a scene and its gt.
struct AugmentTransform {
    Rect window;
    bool flip_vertical = false;
    bool flip_horizontal = false;
};

AugmentTransform draw_augmentation(int height, int width, const AugmentationConfig& cfg, Rng& rng);

template <class Tag>
Image<Tag> apply_transform(const Image<Tag>& img, const AugmentTransform& t) {
    Image<Tag> out(t.window.rows(), t.window.cols());
    for (int r = 0; r < out.height(); ++r) {
        const int sr = t.window.row0 + (t.flip_vertical ? out.height() - 1 - r : r);
        for (int c = 0; c < out.width(); ++c) {
            const int sc = t.window.col0 + (t.flip_horizontal ? out.width() - 1 - c : c);
            out.set_pixel(r, c, img.pixel(sr, sc));
        }
    }
    return out;
}

ScenePair apply_transform(const ScenePair& pair, const AugmentTransform& t);

/// Random crop plus independent vertical/horizontal flips.
ScenePair augment(const ScenePair& pair, const AugmentationConfig& cfg, Rng& rng);

/// Single-channel weight image in [0, 1].
class Mask {
public:
    Mask(int height, int width, double fill = 0.0)
        : height_(height), width_(width), values_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    double& operator()(int r, int c) noexcept { return values_[static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c)]; }
    double operator()(int r, int c) const noexcept { return values_[static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c)]; }

private:
    int height_;
    int width_;
    std::vector<double> values_;
};

/// Two-light scene: light(k) = normalize(mask(k)*a + (1-mask(k))*b),
/// scene(k) = reflectance(k) * light(k) + N(0, sigma^2), clamped at 0.
ScenePair synth_scene(const Illuminant& light_a, const Illuminant& light_b, const LinearImage& reflectance,
                      const Mask& mask, double noise_sigma, Rng& rng, std::string id = {});

struct SynthConfig {
    int height = 96;
    int width = 160;
    double noise_sigma = 0.0;
    double min_separation_deg = 10.0;
    double max_separation_deg = 25.0;
    int patch_size = 4;            // Mondrian patch edge, pixels
    double chroma_spread = 0.25;   // relative per-channel reflectance jitter
    double edge_softness = 0.03;   // mask transition width as a fraction of the diagonal
};

Illuminant random_light(Rng& rng);
LinearImage random_reflectance(int height, int width, int patch_size, double chroma_spread, Rng& rng);
Mask random_split_mask(int height, int width, double edge_softness, Rng& rng);

/// Draws lights, a Mondrian reflectance and a soft split mask, then calls synth_scene.
ScenePair random_synthetic_scene(const SynthConfig& cfg, Rng& rng, std::string id);

/// Seeded shuffle assigning round(n * train_fraction) entries to train.
std::vector<Split> seeded_split(std::size_t n, double train_fraction, std::uint64_t seed);

}  // namespace memcc
