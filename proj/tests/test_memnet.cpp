// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "memcc/io.hpp"
#include "memcc/memnet.hpp"
#include "oracles.hpp"

using namespace memcc;
namespace fs = std::filesystem;

namespace {

ScenePair small_scene(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    SynthConfig cfg;
    cfg.height = h;
    cfg.width = w;
    return random_synthetic_scene(cfg, rng, "s" + std::to_string(seed));
}

EstimateMap random_map(Rng& rng) {
    EstimateMap m;
    for (int j = 0; j < kMapCells; ++j) m[j] = Illuminant(oracle::random_rgb(rng, 0.1, 1.0));
    return m;
}

}  // namespace

TEST_CASE("region_gt: constant gt, sort oracle and step gt") {
    const LinearImage flat(12, 20, 0.4);
    for (const Illuminant& cell : region_gt(flat, RegionGrid(12, 20))) CHECK(cell == Illuminant());

    // One region of five pixels: 5x10 image split into 6 rows is impossible,
    // so use a 6x50 image whose first region is 1x5.
    LinearImage gt(6, 50, 0.5);
    const double reds[5] = {0.1, 0.9, 0.5, 0.3, 0.7};
    for (int c = 0; c < 5; ++c) gt(0, c, 0) = reds[c];
    const auto med = region_median(gt, RegionGrid(6, 50));
    CHECK(med[0][0] == 0.5);

    Rng rng(1);
    for (auto [h, w] : {std::pair{216, 325}, std::pair{37, 61}}) {
        const LinearImage g = oracle::random_image(h, w, rng);
        const RegionGrid grid(h, w);
        CHECK(region_median(g, grid) == oracle::region_medians(g, grid));
    }

    const Illuminant left(1.2, 1.0, 0.8), right(0.8, 1.0, 1.2);
    LinearImage step(60, 100);
    for (int r = 0; r < 60; ++r) {
        for (int c = 0; c < 100; ++c) step.set_pixel(r, c, c < 50 ? left.rgb() : right.rgb());
    }
    const EstimateMap m = region_gt(step, RegionGrid(60, 100));
    for (int row = 0; row < kMapRows; ++row) {
        for (int col = 0; col < kMapCols; ++col) CHECK(m.at(row, col) == (col < 5 ? left : right));
    }
}

TEST_CASE("region_median: even counts take the lower middle") {
    LinearImage gt(6, 20, 0.5);
    gt(0, 0, 1) = 0.2;
    gt(0, 1, 1) = 0.8;
    CHECK(region_median(gt, RegionGrid(6, 20))[0][1] == 0.2);
}

TEST_CASE("loss: zero, arithmetic mean, oracle, symmetry and scaling") {
    Rng rng(2);
    const EstimateMap a = random_map(rng);
    CHECK(loss(a, a) == 0.0);

    EstimateMap x(Illuminant(1.0, 1e-12, 1e-12)), y;
    for (int j = 0; j < kMapCells; ++j) y[j] = j < 30 ? x[j] : Illuminant(1e-12, 1.0, 1e-12);
    CHECK(loss(x, y) == doctest::Approx(45.0).epsilon(1e-9));

    const EstimateMap b = random_map(rng);
    double expected = 0.0;
    for (int j = 0; j < kMapCells; ++j) expected += oracle::angle_deg(a[j].rgb(), b[j].rgb());
    expected /= kMapCells;
    CHECK(std::abs(loss(a, b) - expected) < 1e-9);
    CHECK(loss(a, b) == doctest::Approx(loss(b, a)).epsilon(1e-15));
    CHECK(loss(a, b) >= 0.0);
    CHECK(loss(a, b) <= 180.0);
}

TEST_CASE("architecture: descriptor round trip and validation") {
    for (const Architecture& a : {Architecture::standard(), Architecture::tiny()}) {
        CHECK(Architecture::parse(a.descriptor()) == a);
        CHECK_NOTHROW(a.validate());
    }
    CHECK(Architecture::standard().min_height() == 48);
    CHECK(Architecture::standard().min_width() == 80);
    CHECK_THROWS_AS(Architecture::parse("conv3x3s2:3>16:relu"), DomainError);
    CHECK_THROWS_AS(Architecture::parse("conv3x3s1:3>4:relu;conv1x1s1:5>3:linear;pool6x10"), DomainError);
    CHECK(NetworkParams::init(Architecture::standard(), 0).parameter_count() ==
          (16 * 27 + 16) + (32 * 144 + 32) + (64 * 288 + 64) + (3 * 64 + 3));
}

TEST_CASE("forward: output contract, constant head, determinism") {
    const ScenePair s = small_scene(64, 100, 3);
    const EncodedInput in = encode_input(s.scene);
    const NetworkParams p = NetworkParams::init(Architecture::standard(), 7);
    const EstimateMap m = forward(p, in);
    for (const Illuminant& cell : m) {
        CHECK(cell[0] > 0.0);
        CHECK(std::hypot(cell[0], cell[1], cell[2]) == doctest::Approx(kSqrt3).epsilon(1e-12));
    }
    CHECK(forward(p, in) == m);
    CHECK(forward(NetworkParams::init(Architecture::standard(), 7), in) == m);

    NetworkParams head = p;
    std::fill(head.layers.back().weight.begin(), head.layers.back().weight.end(), 0.0f);
    std::fill(head.layers.back().bias.begin(), head.layers.back().bias.end(), 1.0f);
    for (const Illuminant& cell : forward(head, in)) CHECK(cell == Illuminant());
}

TEST_CASE("forward: input size and non-finite errors") {
    const NetworkParams p = NetworkParams::init(Architecture::standard(), 1);
    CHECK_THROWS_AS(forward(p, encode_input(LinearImage(47, 80, 0.5))), DomainError);
    CHECK_NOTHROW(forward(p, encode_input(LinearImage(48, 80, 0.5))));

    NetworkParams broken = p;
    broken.layers[1].weight[0] = std::numeric_limits<float>::infinity();
    try {
        forward(broken, encode_input(small_scene(48, 80, 2).scene));
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(e.layer() == 1);
    }
}

TEST_CASE("encode_input scales to peak 1 and applies gamma") {
    LinearImage img(48, 80, 0.5);
    img(3, 4, 2) = 2.0;
    const EncodedInput in = encode_input(img);
    CHECK(in.tensor().at(2, 3, 4) == doctest::Approx(1.0));
    CHECK(in.tensor().at(0, 0, 0) == doctest::Approx(std::pow(0.25, 1.0 / 2.2)));
}

TEST_CASE("adaptive_bins cover the axis") {
    for (int in : {6, 7, 13, 27, 57}) {
        const auto bins = adaptive_bins(in, 6);
        CHECK(bins.front().first == 0);
        CHECK(bins.back().second == in);
        for (std::size_t i = 1; i < bins.size(); ++i) CHECK(bins[i].first <= bins[i - 1].second);
    }
}

TEST_CASE("backward: finite differences on the tiny net") {
    for (std::uint64_t seed : {1u, 2u}) {
        const ScenePair s = small_scene(16, 20, seed + 10);
        const NetworkParams p = NetworkParams::init(Architecture::tiny(), seed);
        const gradcheck::Result r =
            gradcheck::check(p, encode_input(s.scene), region_gt(s.gt, RegionGrid(16, 20)));
        CHECK(r.checked > r.skipped);
        CHECK(r.max_rel_error <= 1e-3);
    }
}

TEST_CASE("backward: sampled finite differences on the standard net") {
    const ScenePair s = small_scene(48, 80, 21);
    const NetworkParams p = NetworkParams::init(Architecture::standard(), 5);
    // Truncation error grows as h^2 and the small-weight head is curved at h=1e-3.
    const gradcheck::Result r = gradcheck::check(p, encode_input(s.scene), region_gt(s.gt, RegionGrid(48, 80)), 3e-4, 37);
    CHECK(r.checked > 50);
    CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("backward: exact agreement keeps gradients finite") {
    const ScenePair s = small_scene(16, 20, 30);
    NetworkParams p = NetworkParams::init(Architecture::tiny(), 3);
    const EncodedInput in = encode_input(s.scene);
    const LossAndGradient lg = backward(p, in, forward(p, in));
    CHECK(lg.loss < 1e-6);
    CHECK(std::isfinite(lg.gradients.squared_norm()));
    CHECK(lg.gradients.squared_norm() < 1e3);
}

TEST_CASE("batch gradients are a plain sum") {
    const ScenePair s = small_scene(48, 80, 40);
    const NetworkParams p = NetworkParams::init(Architecture::standard(), 2);
    const std::vector<ScenePair> one{s}, two{s, s};
    const BatchGradients g1 = batch_gradients(p, one);
    const BatchGradients g2 = batch_gradients(p, two);
    CHECK(g2.loss_sum == doctest::Approx(2 * g1.loss_sum).epsilon(1e-12));
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        for (std::size_t i = 0; i < g1.sum.layers[li].weight.size(); ++i) {
            CHECK(std::abs(g2.sum.layers[li].weight[i] - 2 * g1.sum.layers[li].weight[i]) < 1e-9);
        }
    }
}

TEST_CASE("train_step: zero rate, step counter, no mutation on error") {
    const ScenePair s = small_scene(48, 80, 50);
    const std::vector<ScenePair> batch{s};
    NetworkParams p = NetworkParams::init(Architecture::standard(), 4);
    OptimizerState st = OptimizerState::zeros_like(p);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    const NetworkParams before = p;
    train_step(p, st, batch, cfg);
    CHECK(p == before);
    CHECK(st.step == 1);
    CHECK(st.first_moment != OptimizerState::zeros_like(p).first_moment);

    cfg.learning_rate = 3e-4;
    train_step(p, st, batch, cfg);
    CHECK(st.step == 2);
    CHECK(p != before);

    const NetworkParams frozen = p;
    const OptimizerState frozen_state = st;
    const std::vector<ScenePair> bad{ScenePair{LinearImage(20, 20, 0.5), LinearImage(20, 20, 0.5), "tiny"}};
    CHECK_THROWS(train_step(p, st, bad, cfg));
    CHECK(p == frozen);
    CHECK(st == frozen_state);
}

TEST_CASE("train: identical seeds give identical trajectories") {
    std::vector<ScenePair> data;
    for (std::uint64_t i = 0; i < 3; ++i) data.push_back(small_scene(56, 90, 60 + i));
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.crop_height = 48;
    cfg.crop_width = 80;
    cfg.max_steps = 4;
    cfg.seed = 9;
    const TrainResult a = train(data, Architecture::standard(), cfg);
    const TrainResult b = train(data, Architecture::standard(), cfg);
    CHECK(a.params == b.params);
    CHECK(a.optimizer == b.optimizer);
    REQUIRE(a.log.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("checkpoint: round trip, truncation, architecture and version guards") {
    const fs::path dir = fs::temp_directory_path() / ("memcc_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(dir);

    Checkpoint c{NetworkParams::init(Architecture::standard(), 11), {}, {}};
    c.optimizer = OptimizerState::zeros_like(c.params);
    Rng rng(3);
    for (auto& m : c.optimizer.first_moment) {
        for (float& v : m.weight) v = static_cast<float>(rng.normal());
    }
    c.optimizer.step = 123;
    c.config.seed = 77;
    c.config.learning_rate = 1e-3;

    save_checkpoint(dir / "a.ckpt", c);
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.params == c.params);
    CHECK(back.optimizer == c.optimizer);
    CHECK(back.config == c.config);

    const auto bytes = serialize_checkpoint(c);
    auto expect_kind = [](auto&& fn, CheckpointErrorKind kind) {
        try {
            fn();
            FAIL("expected a checkpoint error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == kind);
        }
    };
    expect_kind([&] { deserialize_checkpoint(std::span(bytes).first(bytes.size() - 9)); }, CheckpointErrorKind::corrupt);
    auto extra = bytes;
    extra.push_back(0);
    expect_kind([&] { deserialize_checkpoint(extra); }, CheckpointErrorKind::corrupt);
    expect_kind([&] { deserialize_checkpoint(bytes, Architecture::tiny()); }, CheckpointErrorKind::shape_mismatch);
    auto old = bytes;
    old[4] = 9;
    expect_kind([&] { deserialize_checkpoint(old); }, CheckpointErrorKind::version_mismatch);

    // A failed load leaves the caller's checkpoint untouched.
    Checkpoint target = c;
    {
        std::ofstream(dir / "t.ckpt", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 100);
    }
    CHECK_THROWS_AS(target = load_checkpoint(dir / "t.ckpt"), CheckpointError);
    CHECK(target.params == c.params);

    fs::remove_all(dir);
}
