// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include <cmath>
#include <numeric>

#include "memcc/memnet.hpp"

namespace memcc {

void TrainConfig::validate() const {
    auto fail = [](const char* msg) { throw DomainError(std::string("train config: ") + msg); };
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be finite and >= 0");
    if (batch_size < 1) fail("batch size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (checkpoint_interval < 0) fail("checkpoint interval must be >= 0");
    if (crop_height < 1 || crop_width < 1) fail("crop dimensions must be positive");
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) fail("flip probability must be in [0, 1]");
}

OptimizerState OptimizerState::zeros_like(const NetworkParams& params) {
    OptimizerState s;
    for (const auto& l : params.layers) {
        LayerMoments m{std::vector<float>(l.weight.size(), 0.0f), std::vector<float>(l.bias.size(), 0.0f)};
        s.first_moment.push_back(m);
        s.second_moment.push_back(std::move(m));
    }
    return s;
}

BatchGradients batch_gradients(const NetworkParams& params, std::span<const ScenePair> batch) {
    BatchGradients out;
    out.sum = Gradients::zeros_like(params);
    for (const ScenePair& pair : batch) {
        const RegionGrid grid(pair.gt.height(), pair.gt.width());
        const LossAndGradient lg = backward(params, encode_input(pair.scene), region_gt(pair.gt, grid));
        out.sum.add(lg.gradients);
        out.loss_sum += lg.loss;
        ++out.count;
    }
    return out;
}

namespace {

void adam_update(std::vector<float>& param, std::vector<float>& m, std::vector<float>& v,
                 const std::vector<double>& grad_sum, double inv_count, const TrainConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad_sum[i] * inv_count;
        m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
        v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] = static_cast<float>(param[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
}

}  // namespace

double train_step(NetworkParams& params, OptimizerState& state, std::span<const ScenePair> batch,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (batch.empty()) throw DomainError("train_step: empty batch");
    if (state.first_moment.size() != params.layers.size()) throw DomainError("train_step: optimizer state shape mismatch");

    const BatchGradients grads = batch_gradients(params, batch);

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const double inv = 1.0 / static_cast<double>(grads.count);
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        adam_update(params.layers[li].weight, state.first_moment[li].weight, state.second_moment[li].weight,
                    grads.sum.layers[li].weight, inv, cfg, bc1, bc2);
        adam_update(params.layers[li].bias, state.first_moment[li].bias, state.second_moment[li].bias,
                    grads.sum.layers[li].bias, inv, cfg, bc1, bc2);
    }
    return grads.loss_sum * inv;
}

TrainResult train(std::span<const ScenePair> data, const Architecture& arch, const TrainConfig& cfg,
                  const TrainCallback& on_step) {
    cfg.validate();
    if (data.empty()) throw DomainError("train: no training data");

    TrainResult result{NetworkParams::init(arch, derive_seed(cfg.seed, 0)), {}, {}};
    result.optimizer = OptimizerState::zeros_like(result.params);
    Rng rng(derive_seed(cfg.seed, 1));
    const AugmentationConfig aug{cfg.crop_height, cfg.crop_width, cfg.flip_probability, cfg.seed};

    std::vector<std::size_t> order(data.size());
    std::vector<ScenePair> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(augment(data[order[i]], aug, rng));

            const double batch_loss = train_step(result.params, result.optimizer, batch, cfg);
            const TrainLogEntry entry{result.optimizer.step, batch_loss};
            result.log.push_back(entry);
            if (on_step) on_step(result.params, result.optimizer, entry);
            if (cfg.max_steps != 0 && result.optimizer.step >= cfg.max_steps) return result;
        }
    }
    return result;
}

double evaluate_map_error(const NetworkParams& params, std::span<const ScenePair> data) {
    if (data.empty()) throw DomainError("evaluate_map_error: no data");
    double sum = 0.0;
    for (const ScenePair& pair : data) {
        const RegionGrid grid(pair.gt.height(), pair.gt.width());
        sum += loss(forward(params, encode_input(pair.scene)), region_gt(pair.gt, grid));
    }
    return sum / static_cast<double>(data.size());
}

}  // namespace memcc
