// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace memcc {

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }
std::string_view to_string(Transfer t) { return t == Transfer::linear ? "linear" : "gamma-2.2"; }

std::vector<ManifestEntry> DatasetManifest::entries_in(Split s) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [s](const ManifestEntry& e) { return e.split == s; });
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return fields;
}

[[noreturn]] void manifest_error(std::size_t line_no, const std::string& msg) {
    throw LoadError(LoadErrorKind::bad_manifest, "manifest line " + std::to_string(line_no) + ": " + msg);
}

bool valid_gt_pixel(const double* p, double saturation) {
    for (int ch = 0; ch < 3; ++ch) {
        if (!std::isfinite(p[ch]) || p[ch] <= 0.0 || p[ch] >= saturation) return false;
    }
    return true;
}

double dist2(const Rgb& a, const Rgb& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return d0 * d0 + d1 * d1 + d2 * d2;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root) {
    DatasetManifest manifest;
    manifest.root = root;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto f = split_tabs(line);
        if (f.size() != 5) manifest_error(line_no, "expected 5 tab-separated fields, got " + std::to_string(f.size()));
        ManifestEntry e;
        e.scene = f[0];
        e.gt = f[1];
        e.id = f[2];
        if (e.id.empty()) manifest_error(line_no, "empty id");
        if (f[3] == "train") {
            e.split = Split::train;
        } else if (f[3] == "test") {
            e.split = Split::test;
        } else {
            manifest_error(line_no, "unknown split '" + f[3] + "'");
        }
        if (f[4] == "linear") {
            e.transfer = Transfer::linear;
        } else if (f[4] == "gamma-2.2") {
            e.transfer = Transfer::gamma22;
        } else {
            manifest_error(line_no, "unknown transfer '" + f[4] + "'");
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    return parse_manifest(io::read_file(path), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest) {
    std::string out = "# scene\tgt\tid\tsplit\ttransfer\n";
    for (const auto& e : manifest.entries) {
        out += e.scene.generic_string() + '\t' + e.gt.generic_string() + '\t' + e.id + '\t' +
               std::string(to_string(e.split)) + '\t' + std::string(to_string(e.transfer)) + '\n';
    }
    return out;
}

ScenePair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry) {
    ScenePair pair;
    pair.id = entry.id;
    pair.scene = io::read_png(manifest.root / entry.scene);
    pair.gt = io::read_png(manifest.root / entry.gt);
    if (!pair.scene.same_shape(pair.gt)) {
        throw LoadError(LoadErrorKind::dimension_mismatch,
                        entry.id + ": scene is " + std::to_string(pair.scene.height()) + "x" +
                            std::to_string(pair.scene.width()) + " but gt is " + std::to_string(pair.gt.height()) +
                            "x" + std::to_string(pair.gt.width()));
    }
    if (entry.transfer == Transfer::gamma22) pair.scene = gamma_decode(pair.scene);
    try {
        repair_gt(pair.gt, 1.0);
    } catch (const DomainError& e) {
        throw LoadError(LoadErrorKind::undecodable, entry.id + ": " + e.what());
    }
    normalize_pixels(pair.gt);
    return pair;
}

void save_pair(const std::filesystem::path& root, const ManifestEntry& entry, const ScenePair& pair) {
    if (!pair.scene.same_shape(pair.gt)) throw DomainError("save_pair: scene and gt dimensions differ");
    auto scaled = [](const LinearImage& img, double scale) {
        LinearImage out = img;
        for (double& v : out.data()) v *= scale;
        return out;
    };
    const double scene_peak = max_component(pair.scene);
    LinearImage scene = scaled(pair.scene, scene_peak > 1.0 ? 1.0 / scene_peak : 1.0);
    if (entry.transfer == Transfer::gamma22) scene = gamma_encode(scene);
    const double gt_peak = max_component(pair.gt);
    if (!(gt_peak > 0.0)) throw DomainError("save_pair: gt is all zero");
    io::write_png(root / entry.scene, scene);
    io::write_png(root / entry.gt, scaled(pair.gt, 0.9 / gt_peak));
}

std::size_t repair_gt(LinearImage& gt, double saturation) {
    const int h = gt.height();
    const int w = gt.width();
    const auto data = gt.data();
    std::vector<char> valid(gt.pixel_count());
    std::size_t n_valid = 0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        valid[i] = valid_gt_pixel(&data[i * 3], saturation) ? 1 : 0;
        n_valid += static_cast<std::size_t>(valid[i]);
    }
    if (n_valid == valid.size()) return 0;
    if (n_valid == 0) throw DomainError("ground truth has no valid pixel to repair from");

    const LinearImage original = gt;
    std::size_t repaired = 0;
    const int max_radius = std::max(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (valid[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)]) continue;

            // Scan square rings of growing Chebyshev radius. A ring at radius R
            // only holds pixels at Euclidean distance >= R, so stop once R^2
            // exceeds the best squared distance found.
            long best_d2 = -1;
            long best_idx = -1;
            for (int radius = 1; radius <= max_radius; ++radius) {
                if (best_d2 >= 0 && static_cast<long>(radius) * radius > best_d2) break;
                for (int dr = -radius; dr <= radius; ++dr) {
                    const int rr = r + dr;
                    if (rr < 0 || rr >= h) continue;
                    const bool edge_row = (dr == -radius || dr == radius);
                    const int step = edge_row ? 1 : 2 * radius;
                    for (int dc = -radius; dc <= radius; dc += step) {
                        const int cc = c + dc;
                        if (cc < 0 || cc >= w) continue;
                        const long idx = static_cast<long>(rr) * w + cc;
                        if (!valid[static_cast<std::size_t>(idx)]) continue;
                        const long d2 = static_cast<long>(dr) * dr + static_cast<long>(dc) * dc;
                        if (best_d2 < 0 || d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
                            best_d2 = d2;
                            best_idx = idx;
                        }
                    }
                }
            }
            gt.set_pixel(r, c, original.pixel(static_cast<int>(best_idx / w), static_cast<int>(best_idx % w)));
            ++repaired;
        }
    }
    return repaired;
}

void normalize_pixels(LinearImage& img) {
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) img.set_pixel(r, c, normalize(img.pixel(r, c)));
    }
}

Illuminant global_gt_vector(const LinearImage& gt, const GlobalGtOptions& options) {
    if (gt.empty()) throw DomainError("global_gt_vector: empty image");
    if (options.clusters < 2 || options.iterations < 1) throw DomainError("global_gt_vector: need >= 2 clusters");

    const std::size_t n = gt.pixel_count();
    std::vector<Rgb> points(n);
    Rgb mean{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const auto d = gt.data().subspan(i * 3, 3);
        points[i] = Illuminant(Rgb{d[0], d[1], d[2]}).rgb();
        for (int ch = 0; ch < 3; ++ch) mean[ch] += points[i][ch];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    // Farthest-point seeding. Ties go to the lexicographically smallest
    // vector so the result does not depend on pixel order.
    auto farthest = [&](auto&& distance) {
        double best = -1.0;
        Rgb best_point{};
        for (const Rgb& p : points) {
            const double d = distance(p);
            if (d > best || (d == best && p < best_point)) {
                best = d;
                best_point = p;
            }
        }
        return std::pair{best, best_point};
    };

    std::vector<Rgb> centers;
    centers.push_back(farthest([&](const Rgb& p) { return dist2(p, mean); }).second);
    while (static_cast<int>(centers.size()) < options.clusters) {
        const auto [d, p] = farthest([&](const Rgb& q) {
            double m = std::numeric_limits<double>::infinity();
            for (const Rgb& c : centers) m = std::min(m, dist2(q, c));
            return m;
        });
        if (!(d > 0.0)) break;  // fewer distinct vectors than clusters
        centers.push_back(p);
    }

    const std::size_t k = centers.size();
    std::vector<std::size_t> assign(n, 0);
    std::vector<std::size_t> counts(k, 0);
    for (int it = 0; it < options.iterations; ++it) {
        bool changed = (it == 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = dist2(points[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = dist2(points[i], centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) changed = true;
            assign[i] = best;
        }
        if (!changed) break;
        std::vector<Rgb> sums(k, Rgb{0.0, 0.0, 0.0});
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int ch = 0; ch < 3; ++ch) sums[assign[i]][ch] += points[i][ch];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (int ch = 0; ch < 3; ++ch) centers[c][ch] = sums[c][ch] / static_cast<double>(counts[c]);
        }
    }
    if (k == 1) counts[0] = n;

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (counts[a] != counts[b]) return counts[a] > counts[b];
        return centers[a] < centers[b];
    });
    if (k == 1 || counts[order[1]] == 0) return Illuminant(centers[order[0]]);
    const Rgb& a = centers[order[0]];
    const Rgb& b = centers[order[1]];
    return Illuminant(Rgb{a[0] + b[0], a[1] + b[1], a[2] + b[2]});
}

AugmentTransform draw_augmentation(int height, int width, const AugmentationConfig& cfg, Rng& rng) {
    if (cfg.crop_height < 1 || cfg.crop_width < 1 || cfg.crop_height > height || cfg.crop_width > width) {
        throw DomainError("crop " + std::to_string(cfg.crop_height) + "x" + std::to_string(cfg.crop_width) +
                          " does not fit source " + std::to_string(height) + "x" + std::to_string(width));
    }
    if (!(cfg.flip_probability >= 0.0 && cfg.flip_probability <= 1.0)) {
        throw DomainError("flip probability must be in [0, 1]");
    }
    AugmentTransform t;
    t.window.row0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(height - cfg.crop_height + 1)));
    t.window.col0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(width - cfg.crop_width + 1)));
    t.window.row1 = t.window.row0 + cfg.crop_height;
    t.window.col1 = t.window.col0 + cfg.crop_width;
    t.flip_vertical = rng.bernoulli(cfg.flip_probability);
    t.flip_horizontal = rng.bernoulli(cfg.flip_probability);
    return t;
}

ScenePair apply_transform(const ScenePair& pair, const AugmentTransform& t) {
    return {apply_transform(pair.scene, t), apply_transform(pair.gt, t), pair.id};
}

ScenePair augment(const ScenePair& pair, const AugmentationConfig& cfg, Rng& rng) {
    if (!pair.scene.same_shape(pair.gt)) throw DomainError("augment: scene and gt dimensions differ");
    return apply_transform(pair, draw_augmentation(pair.scene.height(), pair.scene.width(), cfg, rng));
}

ScenePair synth_scene(const Illuminant& light_a, const Illuminant& light_b, const LinearImage& reflectance,
                      const Mask& mask, double noise_sigma, Rng& rng, std::string id) {
    if (reflectance.height() != mask.height() || reflectance.width() != mask.width()) {
        throw DomainError("synth_scene: reflectance and mask dimensions differ");
    }
    if (!(noise_sigma >= 0.0)) throw DomainError("synth_scene: noise sigma must be >= 0");
    validate_linear(reflectance);

    ScenePair pair{LinearImage(reflectance.height(), reflectance.width()),
                   LinearImage(reflectance.height(), reflectance.width()), std::move(id)};
    for (int r = 0; r < reflectance.height(); ++r) {
        for (int c = 0; c < reflectance.width(); ++c) {
            const double m = mask(r, c);
            if (!(m >= 0.0 && m <= 1.0)) throw DomainError("synth_scene: mask values must lie in [0, 1]");
            Rgb light{};
            for (int ch = 0; ch < 3; ++ch) light[ch] = m * light_a[ch] + (1.0 - m) * light_b[ch];
            light = normalize(light);
            pair.gt.set_pixel(r, c, light);
            const Rgb refl = reflectance.pixel(r, c);
            Rgb px{};
            for (int ch = 0; ch < 3; ++ch) {
                double v = refl[ch] * light[ch];
                if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
                px[ch] = std::max(v, 0.0);
            }
            pair.scene.set_pixel(r, c, px);
        }
    }
    return pair;
}

Illuminant random_light(Rng& rng) {
    // Log-chromaticity ratios around neutral, roughly the span between
    // tungsten-ish and shade-ish daylight.
    const double rg = std::exp(rng.uniform(-0.45, 0.35));
    const double bg = std::exp(rng.uniform(-0.45, 0.35));
    return Illuminant(rg, 1.0, bg);
}

LinearImage random_reflectance(int height, int width, int patch_size, double chroma_spread, Rng& rng) {
    if (patch_size < 1) throw DomainError("patch size must be >= 1");
    LinearImage refl(height, width);
    const int prows = (height + patch_size - 1) / patch_size;
    const int pcols = (width + patch_size - 1) / patch_size;
    for (int pr = 0; pr < prows; ++pr) {
        for (int pc = 0; pc < pcols; ++pc) {
            const double gray = rng.uniform(0.15, 0.85);
            Rgb colour{};
            for (int ch = 0; ch < 3; ++ch) {
                colour[ch] = std::clamp(gray * (1.0 + rng.uniform(-chroma_spread, chroma_spread)), 0.01, 1.0);
            }
            for (int r = pr * patch_size; r < std::min(height, (pr + 1) * patch_size); ++r) {
                for (int c = pc * patch_size; c < std::min(width, (pc + 1) * patch_size); ++c) {
                    refl.set_pixel(r, c, colour);
                }
            }
        }
    }
    return refl;
}

Mask random_split_mask(int height, int width, double edge_softness, Rng& rng) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double nx = std::cos(angle);
    const double ny = std::sin(angle);
    const double offset = rng.uniform(-0.2, 0.2) * std::min(height, width);
    const double cx = 0.5 * (width - 1);
    const double cy = 0.5 * (height - 1);
    const double scale = edge_softness * std::hypot(height, width);
    Mask mask(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double d = (c - cx) * nx + (r - cy) * ny - offset;
            mask(r, c) = scale > 0.0 ? 1.0 / (1.0 + std::exp(-d / scale)) : (d >= 0.0 ? 1.0 : 0.0);
        }
    }
    return mask;
}

ScenePair random_synthetic_scene(const SynthConfig& cfg, Rng& rng, std::string id) {
    if (cfg.min_separation_deg > cfg.max_separation_deg) throw DomainError("synthetic light separation range is empty");
    const Illuminant a = random_light(rng);
    Illuminant b = random_light(rng);
    for (int attempt = 0;; ++attempt) {
        const double sep = angular_error(a, b);
        if (sep >= cfg.min_separation_deg && sep <= cfg.max_separation_deg) break;
        if (attempt > 10000) throw DomainError("could not draw a light pair in the separation range");
        b = random_light(rng);
    }
    const LinearImage refl = random_reflectance(cfg.height, cfg.width, cfg.patch_size, cfg.chroma_spread, rng);
    const Mask mask = random_split_mask(cfg.height, cfg.width, cfg.edge_softness, rng);
    return synth_scene(a, b, refl, mask, cfg.noise_sigma, rng, std::move(id));
}

std::vector<Split> seeded_split(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw DomainError("train fraction must be in [0, 1]");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
    std::vector<Split> splits(n, Split::test);
    for (std::size_t i = 0; i < n_train; ++i) splits[order[i]] = Split::train;
    return splits;
}

}  // namespace memcc
