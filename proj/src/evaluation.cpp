// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

#include "memcc/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace memcc {

std::string_view to_string(MetricKind m) { return m == MetricKind::map ? "map" : "global"; }

MetricKind parse_metric(std::string_view s) {
    if (s == "map") return MetricKind::map;
    if (s == "global") return MetricKind::global;
    throw DomainError("unknown metric '" + std::string(s) + "' (expected map or global)");
}

namespace {

// Linear interpolation between closest ranks on sorted data.
double quantile(const std::vector<double>& sorted, double q) {
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

SummaryStats summarize(std::span<const double> values) {
    if (values.empty()) throw DomainError("summarize: no values");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());

    SummaryStats s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    s.median = v[(v.size() - 1) / 2];
    s.q1 = std::min(quantile(v, 0.25), s.median);
    s.q3 = quantile(v, 0.75);
    s.max = v.back();
    return s;
}

SummaryStats summarize(std::span<const EvalRecord> records) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.degrees);
    return summarize(values);
}

double metric_map(const EstimateMap& est, const LinearImage& gt, const RegionGrid& grid) {
    return loss(est, region_gt(gt, grid));
}

double metric_global(const Illuminant& est, const LinearImage& gt) { return angular_error(est, global_gt_vector(gt)); }

Illuminant collapse(const EstimateMap& map) {
    Rgb sum{0.0, 0.0, 0.0};
    for (const Illuminant& cell : map) {
        for (int c = 0; c < 3; ++c) sum[c] += cell[c];
    }
    return Illuminant(sum);
}

MethodSpec MethodSpec::parse(const std::string& name) {
    MethodSpec m;
    m.name = name;
    if (name == "gt-oracle") {
        m.kind = Kind::gt_oracle;
        return m;
    }
    if (name == "mem") {
        m.kind = Kind::mem;
        return m;
    }
    auto ends_with = [&](std::string_view suffix) {
        return name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    std::string base;
    if (ends_with("-local")) {
        m.kind = Kind::local;
        base = name.substr(0, name.size() - 6);
    } else if (ends_with("-global")) {
        m.kind = Kind::global;
        base = name.substr(0, name.size() - 7);
    } else {
        throw EvalError(EvalErrorKind::unknown_method,
                        "unknown method '" + name + "' (expected gt-oracle, mem, <estimator>-local or <estimator>-global)");
    }
    try {
        m.estimator = EstimatorSpec::parse(base);
    } catch (const DomainError& e) {
        throw EvalError(EvalErrorKind::unknown_method, "unknown method '" + name + "': " + e.what());
    }
    return m;
}

namespace {

struct Scored {
    EstimateMap map;
    Illuminant global;
};

Scored score(const MethodSpec& m, const ScenePair& pair, const RegionGrid& grid, const NetworkParams* network) {
    switch (m.kind) {
    case MethodSpec::Kind::gt_oracle:
        return {region_gt(pair.gt, grid), global_gt_vector(pair.gt)};
    case MethodSpec::Kind::mem: {
        const EstimateMap map = forward(*network, encode_input(pair.scene));
        return {map, collapse(map)};
    }
    case MethodSpec::Kind::local: {
        const EstimateMap map = estimate_local(pair.scene, m.estimator, grid).map;
        return {map, collapse(map)};
    }
    case MethodSpec::Kind::global: {
        const Illuminant e = estimate_global(pair.scene, m.estimator);
        return {EstimateMap(e), e};
    }
    }
    throw DomainError("unreachable method kind");
}

}  // namespace

EvalReport run_eval(std::span<const ScenePair> scenes, const EvalOptions& options,
                    const std::optional<NetworkParams>& network) {
    if (options.methods.empty()) throw DomainError("eval: no methods given");
    if (options.metrics.empty()) throw DomainError("eval: no metrics given");
    std::vector<MethodSpec> methods;
    for (const auto& name : options.methods) {
        methods.push_back(MethodSpec::parse(name));
        if (methods.back().kind == MethodSpec::Kind::mem && !network) {
            throw EvalError(EvalErrorKind::missing_checkpoint, "method 'mem' needs a trained checkpoint");
        }
    }
    if (scenes.empty()) throw EvalError(EvalErrorKind::empty_test_split, "eval: the test split is empty");

    std::vector<const ScenePair*> order;
    for (const auto& s : scenes) order.push_back(&s);
    std::stable_sort(order.begin(), order.end(), [](const ScenePair* a, const ScenePair* b) { return a->id < b->id; });

    EvalReport report;
    for (const ScenePair* pair : order) {
        const RegionGrid grid(pair->gt.height(), pair->gt.width());
        std::optional<Illuminant> gt_global;
        for (const MethodSpec& m : methods) {
            const Scored s = score(m, *pair, grid, network ? &*network : nullptr);
            for (MetricKind metric : options.metrics) {
                double deg = 0.0;
                if (metric == MetricKind::map) {
                    deg = metric_map(s.map, pair->gt, grid);
                } else {
                    if (!gt_global) gt_global = global_gt_vector(pair->gt);
                    deg = angular_error(s.global, *gt_global);
                }
                report.records.push_back({pair->id, m.name, metric, deg});
            }
        }
    }
    report.summaries = summarize_by_method(report.records);
    return report;
}

EvalReport run_eval(const DatasetManifest& manifest, const EvalOptions& options) {
    std::optional<NetworkParams> network;
    for (const auto& name : options.methods) {
        if (MethodSpec::parse(name).kind != MethodSpec::Kind::mem || network) continue;
        if (!options.checkpoint) throw EvalError(EvalErrorKind::missing_checkpoint, "method 'mem' needs --checkpoint");
        if (!std::filesystem::exists(*options.checkpoint)) {
            throw EvalError(EvalErrorKind::missing_checkpoint,
                            "checkpoint not found: " + options.checkpoint->string());
        }
        network = load_checkpoint(*options.checkpoint).params;
    }
    const auto entries = manifest.entries_in(Split::test);
    if (entries.empty()) throw EvalError(EvalErrorKind::empty_test_split, "eval: the manifest has no test scenes");
    std::vector<ScenePair> scenes;
    scenes.reserve(entries.size());
    for (const auto& e : entries) scenes.push_back(load_pair(manifest, e));
    return run_eval(scenes, options, network);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_records_csv(std::span<const EvalRecord> records) {
    std::string out = "scene_id,method,metric,degrees\n";
    for (const auto& r : records) {
        out += r.scene_id + ',' + r.method + ',' + std::string(to_string(r.metric)) + ',' + format_double(r.degrees) + '\n';
    }
    return out;
}

std::vector<EvalRecord> parse_records_csv(std::string_view text) {
    std::vector<EvalRecord> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "scene_id,method,metric,degrees") {
                throw DomainError("report CSV: expected header 'scene_id,method,metric,degrees'");
            }
            continue;
        }
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
            f.push_back(line.substr(start, pos - start));
        }
        f.push_back(line.substr(start));
        if (f.size() != 4) throw DomainError("report CSV line " + std::to_string(line_no) + ": expected 4 fields");
        EvalRecord r{f[0], f[1], parse_metric(f[2]), 0.0};
        const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), r.degrees);
        if (res.ec != std::errc() || res.ptr != f[3].data() + f[3].size() || !(r.degrees >= 0.0 && r.degrees <= 180.0)) {
            throw DomainError("report CSV line " + std::to_string(line_no) + ": bad angle '" + f[3] + "'");
        }
        out.push_back(std::move(r));
    }
    if (header) throw DomainError("report CSV: empty input");
    return out;
}

std::vector<MethodSummary> summarize_by_method(std::span<const EvalRecord> records) {
    std::vector<std::pair<std::string, MetricKind>> keys;
    std::map<std::pair<std::string, MetricKind>, std::vector<double>> groups;
    for (const auto& r : records) {
        auto key = std::make_pair(r.method, r.metric);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) keys.push_back(key);
        it->second.push_back(r.degrees);
    }
    std::vector<MethodSummary> out;
    for (const auto& key : keys) out.push_back({key.first, key.second, summarize(groups[key])});
    return out;
}

std::string format_summary_csv(std::span<const MethodSummary> summaries, MetricKind metric) {
    std::string out = "method,mean,median,std,q1,q3,max\n";
    for (const auto& s : summaries) {
        if (s.metric != metric) continue;
        const SummaryStats& t = s.stats;
        out += s.method;
        for (double v : {t.mean, t.median, t.std, t.q1, t.q3, t.max}) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

}  // namespace memcc
