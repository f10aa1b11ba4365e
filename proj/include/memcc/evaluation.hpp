// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memcc/core.hpp"
#include "memcc/dataset.hpp"
#include "memcc/estimators.hpp"
#include "memcc/memnet.hpp"

namespace memcc {

enum class MetricKind { map, global };

std::string_view to_string(MetricKind m);
MetricKind parse_metric(std::string_view s);

struct EvalRecord {
    std::string scene_id;
    std::string method;
    MetricKind metric = MetricKind::map;
    double degrees = 0.0;
};

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double std = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Mean, lower-middle median, sample std (0 for a single value), Q1/Q3 by
/// linear interpolation between closest ranks, max. Q1 is capped at the
/// median, which only matters for two values.
SummaryStats summarize(std::span<const double> values);
SummaryStats summarize(std::span<const EvalRecord> records);

double metric_map(const EstimateMap& est, const LinearImage& gt, const RegionGrid& grid);
double metric_global(const Illuminant& est, const LinearImage& gt);

/// Single vector standing in for a map: normalized mean of the 60 cells.
Illuminant collapse(const EstimateMap& map);

/// "gt-oracle", "mem", "<estimator>-local" or "<estimator>-global".
struct MethodSpec {
    enum class Kind { gt_oracle, mem, local, global };
    Kind kind = Kind::gt_oracle;
    EstimatorSpec estimator;
    std::string name;

    static MethodSpec parse(const std::string& name);
};

enum class EvalErrorKind { missing_checkpoint, empty_test_split, unknown_method };

class EvalError : public std::runtime_error {
public:
    EvalError(EvalErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    EvalErrorKind kind() const noexcept { return kind_; }

private:
    EvalErrorKind kind_;
};

struct EvalOptions {
    std::vector<std::string> methods;
    std::vector<MetricKind> metrics{MetricKind::map, MetricKind::global};
    std::optional<std::filesystem::path> checkpoint;  // required by "mem"
};

struct MethodSummary {
    std::string method;
    MetricKind metric = MetricKind::map;
    SummaryStats stats;
};

struct EvalReport {
    std::vector<EvalRecord> records;  // sorted by scene id, then method and metric order
    std::vector<MethodSummary> summaries;
};

/// Scores every method on every test-split scene of the manifest.
EvalReport run_eval(const DatasetManifest& manifest, const EvalOptions& options);

/// Same, on scenes already in memory. `network` is used by "mem".
EvalReport run_eval(std::span<const ScenePair> scenes, const EvalOptions& options,
                    const std::optional<NetworkParams>& network = std::nullopt);

/// Header `scene_id,method,metric,degrees`.
std::string format_records_csv(std::span<const EvalRecord> records);
std::vector<EvalRecord> parse_records_csv(std::string_view text);

/// Header `method,mean,median,std,q1,q3,max`, rows of one metric only.
std::string format_summary_csv(std::span<const MethodSummary> summaries, MetricKind metric);

/// Groups records by (method, metric) in first-appearance order.
std::vector<MethodSummary> summarize_by_method(std::span<const EvalRecord> records);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace memcc
