// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/memnet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace memcc {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kDegrees = 180.0 / std::numbers::pi;

int conv_out(int in, const LayerSpec& l) { return (in + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1; }

RowMatrix weight_matrix(const ConvLayer& layer) {
    const LayerSpec& l = layer.spec;
    const int k = l.in_channels * l.kernel * l.kernel;
    RowMatrix w(l.out_channels, k);
    for (std::size_t i = 0; i < layer.weight.size(); ++i) w.data()[i] = layer.weight[i];
    return w;
}

// Unrolls receptive fields into rows ordered like the kernel: (in, ky, kx).
RowMatrix im2col(const Tensor& in, const LayerSpec& l, int ho, int wo) {
    const int k = l.kernel;
    const int pad = k / 2;
    const Eigen::Index p = static_cast<Eigen::Index>(ho) * wo;
    RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(in.channels) * k * k, p);
    for (int ci = 0; ci < in.channels; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* dst = col.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * p;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * l.stride + ky - pad;
                    if (iy < 0 || iy >= in.height) continue;
                    const double* src = &in.data[(static_cast<std::size_t>(ci) * in.height + iy) * in.width];
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * l.stride + kx - pad;
                        if (ix >= 0 && ix < in.width) dst[oy * wo + ox] = src[ix];
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const RowMatrix& col, const LayerSpec& l, int ho, int wo, Tensor& out) {
    const int k = l.kernel;
    const int pad = k / 2;
    const Eigen::Index p = static_cast<Eigen::Index>(ho) * wo;
    for (int ci = 0; ci < out.channels; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* src = col.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * p;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * l.stride + ky - pad;
                    if (iy < 0 || iy >= out.height) continue;
                    double* dst = &out.data[(static_cast<std::size_t>(ci) * out.height + iy) * out.width];
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * l.stride + kx - pad;
                        if (ix >= 0 && ix < out.width) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_input_size(const NetworkParams& params, const EncodedInput& input) {
    if (input.height() < params.arch.min_height() || input.width() < params.arch.min_width()) {
        throw DomainError("network input " + std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                          " is below the minimum " + std::to_string(params.arch.min_height()) + "x" +
                          std::to_string(params.arch.min_width()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------

std::array<Rgb, kMapCells> region_median(const LinearImage& gt, const RegionGrid& grid) {
    if (grid.height() != gt.height() || grid.width() != gt.width()) {
        throw DomainError("region_median: grid does not match image dimensions");
    }
    std::array<Rgb, kMapCells> out{};
    std::vector<double> values;
    for (int j = 0; j < kMapCells; ++j) {
        const Rect rect = grid.region(j);
        for (int ch = 0; ch < 3; ++ch) {
            values.clear();
            for (int r = rect.row0; r < rect.row1; ++r) {
                for (int c = rect.col0; c < rect.col1; ++c) values.push_back(gt(r, c, ch));
            }
            const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
            std::nth_element(values.begin(), mid, values.end());
            out[static_cast<std::size_t>(j)][ch] = *mid;
        }
    }
    return out;
}

EstimateMap region_gt(const LinearImage& gt, const RegionGrid& grid) {
    const auto medians = region_median(gt, grid);
    EstimateMap map;
    for (int j = 0; j < kMapCells; ++j) map[j] = Illuminant(medians[static_cast<std::size_t>(j)]);
    return map;
}

double loss(const EstimateMap& estimate, const EstimateMap& gt) {
    double sum = 0.0;
    for (int j = 0; j < kMapCells; ++j) sum += angular_error(estimate[j], gt[j]);
    return sum / kMapCells;
}

// ---------------------------------------------------------------------------

Architecture Architecture::standard() {
    return {{{3, 16, 3, 2, true}, {16, 32, 3, 2, true}, {32, 64, 3, 2, true}, {64, 3, 1, 1, false}}};
}

Architecture Architecture::tiny() { return {{{3, 4, 3, 1, true}, {4, 3, 1, 1, false}}}; }

std::string Architecture::descriptor() const {
    std::string out;
    for (const auto& l : layers) {
        out += "conv" + std::to_string(l.kernel) + "x" + std::to_string(l.kernel) + "s" + std::to_string(l.stride) +
               ":" + std::to_string(l.in_channels) + ">" + std::to_string(l.out_channels) + ":" +
               (l.relu ? "relu" : "linear") + ";";
    }
    return out + "pool" + std::to_string(kMapRows) + "x" + std::to_string(kMapCols);
}

Architecture Architecture::parse(const std::string& descriptor) {
    Architecture arch;
    std::istringstream in(descriptor);
    std::string token;
    bool pooled = false;
    while (std::getline(in, token, ';')) {
        if (pooled) throw DomainError("architecture: tokens after pool: '" + token + "'");
        if (token == "pool6x10") {
            pooled = true;
            continue;
        }
        LayerSpec l;
        int kx = 0;
        char act[16] = {};
        int consumed = 0;
        if (std::sscanf(token.c_str(), "conv%dx%ds%d:%d>%d:%15[a-z]%n", &l.kernel, &kx, &l.stride, &l.in_channels,
                        &l.out_channels, act, &consumed) != 6 ||
            static_cast<std::size_t>(consumed) != token.size() || kx != l.kernel) {
            throw DomainError("architecture: cannot parse layer '" + token + "'");
        }
        const std::string a(act);
        if (a != "relu" && a != "linear") throw DomainError("architecture: unknown activation '" + a + "'");
        l.relu = (a == "relu");
        arch.layers.push_back(l);
    }
    if (!pooled) throw DomainError("architecture: missing pool6x10 terminator");
    arch.validate();
    return arch;
}

void Architecture::validate() const {
    if (layers.empty()) throw DomainError("architecture has no layers");
    if (layers.front().in_channels != 3) throw DomainError("architecture: first layer must take 3 channels");
    if (layers.back().out_channels != 3) throw DomainError("architecture: last layer must emit 3 channels");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.kernel < 1 || l.kernel % 2 == 0 || l.stride < 1 || l.in_channels < 1 || l.out_channels < 1) {
            throw DomainError("architecture: invalid layer " + std::to_string(i));
        }
        if (i > 0 && layers[i - 1].out_channels != l.in_channels) {
            throw DomainError("architecture: layer " + std::to_string(i) + " does not chain");
        }
    }
}

int Architecture::total_stride() const {
    int s = 1;
    for (const auto& l : layers) s *= l.stride;
    return s;
}

NetworkParams NetworkParams::zeros(const Architecture& arch) {
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    for (const auto& l : arch.layers) {
        ConvLayer layer;
        layer.spec = l;
        layer.weight.assign(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel, 0.0f);
        layer.bias.assign(static_cast<std::size_t>(l.out_channels), 0.0f);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

NetworkParams NetworkParams::init(const Architecture& arch, std::uint64_t seed) {
    NetworkParams p = zeros(arch);
    Rng rng(seed);
    for (auto& layer : p.layers) {
        const double fan_in = static_cast<double>(layer.spec.in_channels) * layer.spec.kernel * layer.spec.kernel;
        // The linear head gets a tenth of the He bound: at full scale a head
        // channel can start below the clamp everywhere and never receive a gradient.
        const double bound = std::sqrt(6.0 / fan_in) * (layer.spec.relu ? 1.0 : 0.1);
        for (float& w : layer.weight) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    // Start the head at neutral grey.
    std::fill(p.layers.back().bias.begin(), p.layers.back().bias.end(), 1.0f);
    return p;
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

// ---------------------------------------------------------------------------

EncodedInput encode_input(const LinearImage& scene, GammaPolicy policy) {
    validate_linear(scene);
    const double peak = max_component(scene);
    EncodedInput out;
    out.tensor_ = Tensor(3, scene.height(), scene.width());
    for (int r = 0; r < scene.height(); ++r) {
        for (int c = 0; c < scene.width(); ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const double v = peak > 0.0 ? scene(r, c, ch) / peak : 0.0;
                out.tensor_.at(ch, r, c) = gamma_encode(v, policy);
            }
        }
    }
    return out;
}

std::vector<std::pair<int, int>> adaptive_bins(int in, int out) {
    std::vector<std::pair<int, int>> bins(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
        const int start = (i * in) / out;
        const int end = ((i + 1) * in + out - 1) / out;
        bins[static_cast<std::size_t>(i)] = {start, end};
    }
    return bins;
}

ForwardTrace forward_trace(const NetworkParams& params, const EncodedInput& input) {
    check_input_size(params, input);
    ForwardTrace trace;
    trace.activations.reserve(params.layers.size() + 1);
    trace.activations.push_back(input.tensor());

    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const ConvLayer& layer = params.layers[li];
        const LayerSpec& l = layer.spec;
        const Tensor& in = trace.activations.back();
        const int ho = conv_out(in.height, l);
        const int wo = conv_out(in.width, l);
        Tensor out(l.out_channels, ho, wo);
        const RowMatrix col = im2col(in, l, ho, wo);
        Eigen::Map<RowMatrix> y(out.data.data(), l.out_channels, static_cast<Eigen::Index>(ho) * wo);
        y.noalias() = weight_matrix(layer) * col;
        for (int o = 0; o < l.out_channels; ++o) {
            y.row(o).array() += static_cast<double>(layer.bias[static_cast<std::size_t>(o)]);
        }
        if (l.relu) y = y.cwiseMax(0.0);
        if (!all_finite(out.data)) {
            throw NumericError("non-finite activation in layer " + std::to_string(li), static_cast<int>(li));
        }
        trace.activations.push_back(std::move(out));
    }

    const Tensor& head = trace.activations.back();
    const auto rows = adaptive_bins(head.height, kMapRows);
    const auto cols = adaptive_bins(head.width, kMapCols);
    for (int j = 0; j < kMapCells; ++j) {
        const auto [r0, r1] = rows[static_cast<std::size_t>(j / kMapCols)];
        const auto [c0, c1] = cols[static_cast<std::size_t>(j % kMapCols)];
        const double area = static_cast<double>((r1 - r0) * (c1 - c0));
        Rgb pooled{};
        Rgb clamped{};
        for (int ch = 0; ch < 3; ++ch) {
            double sum = 0.0;
            for (int y = r0; y < r1; ++y) {
                for (int x = c0; x < c1; ++x) sum += head.at(ch, y, x);
            }
            pooled[ch] = sum / area;
            clamped[ch] = std::max(pooled[ch], kHeadFloor);
        }
        trace.pooled[static_cast<std::size_t>(j)] = pooled;
        trace.estimate[j] = Illuminant(clamped);
    }
    return trace;
}

EstimateMap forward(const NetworkParams& params, const EncodedInput& input) {
    return forward_trace(params, input).estimate;
}

// ---------------------------------------------------------------------------

Gradients Gradients::zeros_like(const NetworkParams& params) {
    Gradients g;
    for (const auto& l : params.layers) {
        g.layers.push_back({std::vector<double>(l.weight.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
    }
    return g;
}

void Gradients::add(const Gradients& other, double scale) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (std::size_t k = 0; k < layers[i].weight.size(); ++k) layers[i].weight[k] += scale * other.layers[i].weight[k];
        for (std::size_t k = 0; k < layers[i].bias.size(); ++k) layers[i].bias[k] += scale * other.layers[i].bias[k];
    }
}

double Gradients::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double v : l.weight) s += v * v;
        for (double v : l.bias) s += v * v;
    }
    return s;
}

LossAndGradient backward(const NetworkParams& params, const EncodedInput& input, const EstimateMap& gt_map) {
    const ForwardTrace trace = forward_trace(params, input);
    LossAndGradient result;
    result.estimate = trace.estimate;
    result.loss = loss(trace.estimate, gt_map);
    result.gradients = Gradients::zeros_like(params);

    // d loss / d head, through the per-cell angle, the clamp and the pooling.
    const Tensor& head = trace.activations.back();
    Tensor grad(head.channels, head.height, head.width);
    const auto rows = adaptive_bins(head.height, kMapRows);
    const auto cols = adaptive_bins(head.width, kMapCols);
    for (int j = 0; j < kMapCells; ++j) {
        const Rgb& y = trace.pooled[static_cast<std::size_t>(j)];
        const Rgb z{std::max(y[0], kHeadFloor), std::max(y[1], kHeadFloor), std::max(y[2], kHeadFloor)};
        const double nz = std::hypot(z[0], z[1], z[2]);
        const Rgb& g = gt_map[j].rgb();
        const double ng = std::hypot(g[0], g[1], g[2]);
        double cosine = 0.0;
        for (int ch = 0; ch < 3; ++ch) cosine += (z[ch] / nz) * (g[ch] / ng);
        const double clamped = std::clamp(cosine, -1.0 + kCosineClamp, 1.0 - kCosineClamp);
        const double dtheta = -kDegrees / std::sqrt(1.0 - clamped * clamped) / kMapCells;

        const auto [r0, r1] = rows[static_cast<std::size_t>(j / kMapCols)];
        const auto [c0, c1] = cols[static_cast<std::size_t>(j % kMapCols)];
        const double area = static_cast<double>((r1 - r0) * (c1 - c0));
        for (int ch = 0; ch < 3; ++ch) {
            if (!(y[ch] > kHeadFloor)) continue;
            const double dcos = (g[ch] / ng - cosine * z[ch] / nz) / nz;
            const double dy = dtheta * dcos / area;
            for (int yy = r0; yy < r1; ++yy) {
                for (int xx = c0; xx < c1; ++xx) grad.at(ch, yy, xx) += dy;
            }
        }
    }

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const ConvLayer& layer = params.layers[li];
        const LayerSpec& l = layer.spec;
        const Tensor& in = trace.activations[li];
        const Tensor& out = trace.activations[li + 1];
        const Eigen::Index p = static_cast<Eigen::Index>(out.height) * out.width;

        if (l.relu) {
            for (std::size_t k = 0; k < grad.data.size(); ++k) {
                if (!(out.data[k] > 0.0)) grad.data[k] = 0.0;
            }
        }
        const Eigen::Map<const RowMatrix> dz(grad.data.data(), l.out_channels, p);
        const RowMatrix col = im2col(in, l, out.height, out.width);

        LayerGradient& lg = result.gradients.layers[li];
        Eigen::Map<RowMatrix> dw(lg.weight.data(), l.out_channels, col.rows());
        dw.noalias() = dz * col.transpose();
        for (int o = 0; o < l.out_channels; ++o) lg.bias[static_cast<std::size_t>(o)] = dz.row(o).sum();
        if (!all_finite(lg.weight) || !all_finite(lg.bias)) {
            throw NumericError("non-finite gradient in layer " + std::to_string(li), static_cast<int>(li));
        }

        if (li == 0) break;
        const RowMatrix dcol = weight_matrix(layer).transpose() * dz;
        Tensor next(in.channels, in.height, in.width);
        col2im_add(dcol, l, out.height, out.width, next);
        grad = std::move(next);
    }
    return result;
}

LocalEstimator network_estimator(NetworkParams params) {
    return [params = std::move(params)](const LinearImage& scene, const RegionGrid&) {
        return forward(params, encode_input(scene));
    };
}

}  // namespace memcc
