// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcc/core.hpp"
#include "memcc/dataset.hpp"
#include "memcc/pipeline.hpp"

namespace memcc {

// ---------------------------------------------------------------------------
// Region ground truth and the angular-error-map loss
// ---------------------------------------------------------------------------

/// Channelwise median of every region before normalization. Even pixel
/// counts take the lower-middle order statistic.
std::array<Rgb, kMapCells> region_median(const LinearImage& gt, const RegionGrid& grid);

/// region_median, normalized per cell.
EstimateMap region_gt(const LinearImage& gt, const RegionGrid& grid);

/// Mean of the 60 per-cell angular errors, in degrees.
double loss(const EstimateMap& estimate, const EstimateMap& gt);

// ---------------------------------------------------------------------------
// Network description
// ---------------------------------------------------------------------------

struct LayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;  // square, zero padding kernel/2
    int stride = 1;
    bool relu = true;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Stack of convolutions followed by adaptive average pooling to 6x10.
struct Architecture {
    std::vector<LayerSpec> layers;

    /// conv3x3/2(3->16) relu, conv3x3/2(16->32) relu, conv3x3/2(32->64) relu,
    /// conv1x1(64->3) linear.
    static Architecture standard();
    /// conv3x3(3->4) relu, conv1x1(4->3) linear. Used for gradient checks.
    static Architecture tiny();

    /// Text form stored in checkpoints, e.g. "conv3x3s2:3>16:relu;...;pool6x10".
    std::string descriptor() const;
    static Architecture parse(const std::string& descriptor);

    void validate() const;
    int total_stride() const;
    int min_height() const { return kMapRows * total_stride(); }
    int min_width() const { return kMapCols * total_stride(); }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ConvLayer {
    LayerSpec spec;
    std::vector<float> weight;  // [out][in][ky][kx]
    std::vector<float> bias;    // [out]

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct NetworkParams {
    Architecture arch;
    std::vector<ConvLayer> layers;

    /// Kaiming-uniform (fan-in) kernels, zero hidden biases, head biases 1.
    static NetworkParams init(const Architecture& arch, std::uint64_t seed);
    /// All weights and biases zero.
    static NetworkParams zeros(const Architecture& arch);

    std::size_t parameter_count() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Channel-major activation volume.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0) {}

    double& at(int c, int y, int x) noexcept {
        return data[(static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
                        static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    double at(int c, int y, int x) const noexcept {
        return data[(static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
                        static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

/// Network input: the scene scaled to a peak of 1 and gamma encoded.
/// Only encode_input can produce one.
class EncodedInput {
public:
    const Tensor& tensor() const noexcept { return tensor_; }
    int height() const noexcept { return tensor_.height; }
    int width() const noexcept { return tensor_.width; }

private:
    friend EncodedInput encode_input(const LinearImage& scene, GammaPolicy policy);
    Tensor tensor_;
};

EncodedInput encode_input(const LinearImage& scene, GammaPolicy policy = {});

inline constexpr double kHeadFloor = 1e-4;
inline constexpr double kCosineClamp = 1e-6;

/// Intermediate values kept for backpropagation.
struct ForwardTrace {
    std::vector<Tensor> activations;         // [0] is the input, [i+1] the output of layer i
    std::array<Rgb, kMapCells> pooled{};     // head output after adaptive pooling
    EstimateMap estimate;                    // clamped at kHeadFloor, normalized
};

ForwardTrace forward_trace(const NetworkParams& params, const EncodedInput& input);
EstimateMap forward(const NetworkParams& params, const EncodedInput& input);

/// Row/column bounds of the adaptive pooling bins over a length-`in` axis.
std::vector<std::pair<int, int>> adaptive_bins(int in, int out);

struct LayerGradient {
    std::vector<double> weight;
    std::vector<double> bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;

    static Gradients zeros_like(const NetworkParams& params);
    void add(const Gradients& other, double scale = 1.0);
    double squared_norm() const;
};

struct LossAndGradient {
    double loss = 0.0;
    Gradients gradients;
    EstimateMap estimate;
};

/// Loss of one sample and its gradient with respect to every parameter.
LossAndGradient backward(const NetworkParams& params, const EncodedInput& input, const EstimateMap& gt_map);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 3e-4;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 500;
    std::uint64_t seed = 0;
    int checkpoint_interval = 0;  // steps between checkpoints, 0 = final only
    std::uint64_t max_steps = 0;  // 0 = run all epochs
    int crop_height = 216;
    int crop_width = 325;
    double flip_probability = 0.5;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LayerMoments {
    std::vector<float> weight;
    std::vector<float> bias;

    friend bool operator==(const LayerMoments&, const LayerMoments&) = default;
};

/// Adam moment accumulators, shaped like the network parameters.
struct OptimizerState {
    std::vector<LayerMoments> first_moment;
    std::vector<LayerMoments> second_moment;
    std::uint64_t step = 0;

    static OptimizerState zeros_like(const NetworkParams& params);
    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct BatchGradients {
    Gradients sum;
    double loss_sum = 0.0;
    std::size_t count = 0;
};

/// Summed per-sample gradients, accumulated in batch order.
BatchGradients batch_gradients(const NetworkParams& params, std::span<const ScenePair> batch);

/// One Adam step on the batch-mean gradient. Returns the mean batch loss.
/// Parameters and optimizer state are untouched if an error is thrown.
double train_step(NetworkParams& params, OptimizerState& state, std::span<const ScenePair> batch,
                  const TrainConfig& cfg);

struct TrainLogEntry {
    std::uint64_t step = 0;
    double loss = 0.0;
};

using TrainCallback = std::function<void(const NetworkParams&, const OptimizerState&, const TrainLogEntry&)>;

struct TrainResult {
    NetworkParams params;
    OptimizerState optimizer;
    std::vector<TrainLogEntry> log;
};

/// Epoch loop with seeded shuffling and augmentation.
TrainResult train(std::span<const ScenePair> data, const Architecture& arch, const TrainConfig& cfg,
                  const TrainCallback& on_step = {});

/// Mean map error of the network over a set of scenes.
double evaluate_map_error(const NetworkParams& params, std::span<const ScenePair> data);

LocalEstimator network_estimator(NetworkParams params);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { version_mismatch, shape_mismatch, corrupt };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    CheckpointErrorKind kind() const noexcept { return kind_; }

private:
    CheckpointErrorKind kind_;
};

struct Checkpoint {
    NetworkParams params;
    OptimizerState optimizer;
    TrainConfig config;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                  const std::optional<Architecture>& expected = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Architecture>& expected = std::nullopt);

}  // namespace memcc
