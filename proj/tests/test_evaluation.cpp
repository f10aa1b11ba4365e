// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "memcc/evaluation.hpp"
#include "memcc/io.hpp"
#include "oracles.hpp"

using namespace memcc;
namespace fs = std::filesystem;

namespace {

std::vector<ScenePair> synthetic_set(int n, std::uint64_t seed) {
    Rng rng(seed);
    SynthConfig cfg;
    cfg.height = 60;
    cfg.width = 100;
    std::vector<ScenePair> out;
    for (int i = 0; i < n; ++i) out.push_back(random_synthetic_scene(cfg, rng, "scene" + std::to_string(i)));
    return out;
}

void check_against_oracle(const SummaryStats& s, const std::vector<double>& v) {
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    long double sum = 0;
    for (double x : v) sum += x;
    CHECK(s.mean == doctest::Approx(static_cast<double>(sum / v.size())).epsilon(1e-12));
    CHECK(s.median == sorted[(sorted.size() - 1) / 2]);
    CHECK(s.std == doctest::Approx(oracle::sample_std(v)).epsilon(1e-9));
    CHECK(s.q3 == doctest::Approx(oracle::rank_quantile(v, 0.75)).epsilon(1e-12));
    CHECK(s.q1 == doctest::Approx(std::min(oracle::rank_quantile(v, 0.25), s.median)).epsilon(1e-12));
    CHECK(s.max == sorted.back());
}

}  // namespace

TEST_CASE("summarize: singleton and worked example") {
    const std::vector<double> one{3.0};
    const SummaryStats a = summarize(one);
    CHECK(a.mean == 3.0);
    CHECK(a.median == 3.0);
    CHECK(a.std == 0.0);
    CHECK(a.q1 == 3.0);
    CHECK(a.q3 == 3.0);
    CHECK(a.max == 3.0);

    const std::vector<double> five{1, 2, 3, 4, 5};
    const SummaryStats b = summarize(five);
    CHECK(b.mean == 3.0);
    CHECK(b.median == 3.0);
    CHECK(b.std == doctest::Approx(std::sqrt(2.5)));
    CHECK(b.q1 == 2.0);
    CHECK(b.q3 == 4.0);
    CHECK(b.max == 5.0);

    CHECK_THROWS_AS(summarize(std::vector<double>{}), DomainError);
}

TEST_CASE("summarize: random lists against rank oracles, bounds, permutation") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.index(40);
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(0.0, 30.0);
        const SummaryStats s = summarize(v);
        check_against_oracle(s, v);
        const double lo = *std::min_element(v.begin(), v.end());
        CHECK(lo <= s.q1);
        CHECK(s.q1 <= s.median);
        CHECK(s.median <= s.q3);
        CHECK(s.q3 <= s.max);
        CHECK(s.mean >= lo);
        CHECK(s.mean <= s.max);

        std::vector<double> shuffled = v;
        for (std::size_t i = n; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
        const SummaryStats p = summarize(shuffled);
        CHECK(p.median == s.median);
        CHECK(p.q1 == s.q1);
        CHECK(p.q3 == s.q3);
        CHECK(p.max == s.max);
    }
}

TEST_CASE("metric_map and metric_global") {
    const auto scenes = synthetic_set(3, 2);
    for (const ScenePair& s : scenes) {
        const RegionGrid grid(s.gt.height(), s.gt.width());
        CHECK(metric_map(region_gt(s.gt, grid), s.gt, grid) == 0.0);
        CHECK(metric_global(global_gt_vector(s.gt), s.gt) == 0.0);

        Rng rng(3);
        EstimateMap est;
        for (int j = 0; j < kMapCells; ++j) est[j] = Illuminant(oracle::random_rgb(rng, 0.2, 1.0));
        const EstimateMap gt_map = region_gt(s.gt, grid);
        double expected = 0.0;
        for (int j = 0; j < kMapCells; ++j) expected += oracle::angle_deg(est[j].rgb(), gt_map[j].rgb());
        CHECK(std::abs(metric_map(est, s.gt, grid) - expected / kMapCells) < 1e-9);
    }

    // Uniform reddish gt against a white estimate: one angle everywhere.
    const Rgb red{1.3, 1.0, 0.7};
    LinearImage gt(30, 50);
    for (int r = 0; r < 30; ++r) {
        for (int c = 0; c < 50; ++c) gt.set_pixel(r, c, red);
    }
    const RegionGrid grid(30, 50);
    const double angle = oracle::angle_deg({1, 1, 1}, red);
    CHECK(std::abs(metric_map(EstimateMap(), gt, grid) - angle) < 1e-9);
    CHECK(std::abs(metric_global(Illuminant(), gt) - angle) < 1e-9);

    // Chromatically orthogonal estimate built from a near-axis gt.
    LinearImage blue(6, 10);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 10; ++c) blue.set_pixel(r, c, {1e-9, 1e-9, 1.0});
    }
    CHECK(metric_global(Illuminant(1.0, 1e-9, 1e-9), blue) == doctest::Approx(90.0).epsilon(1e-5));
}

TEST_CASE("metric_global: gray-world against the cluster-derived gt vector") {
    const auto scenes = synthetic_set(2, 4);
    for (const ScenePair& s : scenes) {
        const Illuminant gw = estimate_global(s.scene, EstimatorSpec::gray_world());
        CHECK(metric_global(gw, s.gt) == doctest::Approx(angular_error(gw, global_gt_vector(s.gt))).epsilon(1e-15));
    }
}

TEST_CASE("method names") {
    CHECK(MethodSpec::parse("gt-oracle").kind == MethodSpec::Kind::gt_oracle);
    CHECK(MethodSpec::parse("mem").kind == MethodSpec::Kind::mem);
    CHECK(MethodSpec::parse("gray-edge-2-local").estimator.order == 2);
    CHECK(MethodSpec::parse("white-patch-global").kind == MethodSpec::Kind::global);
    try {
        MethodSpec::parse("gray-world");
        FAIL("expected an error");
    } catch (const EvalError& e) {
        CHECK(e.kind() == EvalErrorKind::unknown_method);
    }
}

TEST_CASE("run_eval: shape, oracle method and ordering") {
    auto scenes = synthetic_set(4, 5);
    std::reverse(scenes.begin(), scenes.end());
    EvalOptions opt;
    opt.methods = {"gt-oracle", "gray-world-local"};
    opt.metrics = {MetricKind::map};
    const EvalReport rep = run_eval(scenes, opt);
    REQUIRE(rep.records.size() == 8);
    CHECK(rep.summaries.size() == 2);
    CHECK(rep.records.front().scene_id == "scene0");
    for (const auto& r : rep.records) {
        if (r.method == "gt-oracle") CHECK(r.degrees == 0.0);
    }
    const std::string csv = format_records_csv(rep.records);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK(format_summary_csv(rep.summaries, MetricKind::map).rfind("method,mean,median,std,q1,q3,max\n", 0) == 0);

    const auto parsed = parse_records_csv(csv);
    REQUIRE(parsed.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(parsed[i].degrees == rep.records[i].degrees);
    CHECK(run_eval(scenes, opt).records.size() == 8);
    CHECK(format_records_csv(run_eval(scenes, opt).records) == csv);
}

TEST_CASE("run_eval: local beats global on two-light scenes") {
    const auto scenes = synthetic_set(6, 6);
    EvalOptions opt;
    opt.methods = {"gray-world-local", "gray-world-global"};
    opt.metrics = {MetricKind::map};
    const EvalReport rep = run_eval(scenes, opt);
    CHECK(rep.summaries[0].stats.mean < rep.summaries[1].stats.mean);
}

TEST_CASE("run_eval: distinct errors for missing checkpoint and empty test split") {
    const fs::path dir = fs::temp_directory_path() / ("memcc_eval_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto scenes = synthetic_set(1, 7);
    DatasetManifest m;
    m.root = dir;
    m.entries.push_back({"s.png", "g.png", "only", Split::train, Transfer::linear});
    save_pair(dir, m.entries[0], scenes[0]);
    EvalOptions opt;
    opt.methods = {"gray-world-local"};
    try {
        run_eval(m, opt);
        FAIL("expected an error");
    } catch (const EvalError& e) {
        CHECK(e.kind() == EvalErrorKind::empty_test_split);
    }

    m.entries[0].split = Split::test;
    opt.methods = {"mem"};
    opt.checkpoint = dir / "nope.ckpt";
    try {
        run_eval(m, opt);
        FAIL("expected an error");
    } catch (const EvalError& e) {
        CHECK(e.kind() == EvalErrorKind::missing_checkpoint);
    }

    opt.methods = {"gray-world-local", "gt-oracle"};
    const EvalReport rep = run_eval(m, opt);
    CHECK(rep.records.size() == 4);
    fs::remove_all(dir);
}

TEST_CASE("report CSV parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_records_csv(""), DomainError);
    CHECK_THROWS_AS(parse_records_csv("a,b,c\n"), DomainError);
    CHECK_THROWS_AS(parse_records_csv("scene_id,method,metric,degrees\nx,m,map\n"), DomainError);
    CHECK_THROWS_AS(parse_records_csv("scene_id,method,metric,degrees\nx,m,map,abc\n"), DomainError);
    CHECK_THROWS_AS(parse_records_csv("scene_id,method,metric,degrees\nx,m,both,1\n"), DomainError);
    CHECK(parse_records_csv("scene_id,method,metric,degrees\r\nx,m,global,1.5\r\n")[0].degrees == 1.5);
}
