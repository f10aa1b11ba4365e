// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

// memcc command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memcc/dataset.hpp"
#include "memcc/evaluation.hpp"
#include "memcc/io.hpp"
#include "memcc/memnet.hpp"
#include "memcc/pipeline.hpp"

using namespace memcc;
namespace fs = std::filesystem;

namespace {

struct SceneInput {
    std::string scene;
    std::string transfer = "linear";
};

LinearImage load_scene(const SceneInput& in) {
    LinearImage img = io::read_png(in.scene);
    if (in.transfer == "gamma22") img = gamma_decode(img);
    return img;
}

void add_scene_flags(CLI::App* cmd, SceneInput& in) {
    cmd->add_option("--scene", in.scene, "Scene PNG")->required()->check(CLI::ExistingFile);
    cmd->add_option("--transfer", in.transfer, "Transfer curve of the scene PNG")
        ->check(CLI::IsMember({"linear", "gamma22"}));
}

struct MethodInput {
    std::string method = "gray-world-local";
    std::string checkpoint;
};

LocalEstimator make_estimator(const MethodInput& in) {
    const MethodSpec m = MethodSpec::parse(in.method);
    switch (m.kind) {
    case MethodSpec::Kind::local:
        return statistical_estimator(m.estimator);
    case MethodSpec::Kind::global: {
        const EstimatorSpec spec = m.estimator;
        return [spec](const LinearImage& scene, const RegionGrid&) {
            return EstimateMap(estimate_global(scene, spec));
        };
    }
    case MethodSpec::Kind::mem:
        if (in.checkpoint.empty()) throw EvalError(EvalErrorKind::missing_checkpoint, "method 'mem' needs --checkpoint");
        if (!fs::exists(in.checkpoint)) {
            throw EvalError(EvalErrorKind::missing_checkpoint, "checkpoint not found: " + in.checkpoint);
        }
        return network_estimator(load_checkpoint(in.checkpoint).params);
    case MethodSpec::Kind::gt_oracle:
        break;
    }
    throw DomainError("method '" + in.method + "' needs ground truth and is only available in eval");
}

void add_method_flags(CLI::App* cmd, MethodInput& in) {
    cmd->add_option("--method", in.method, "gt-oracle is eval-only; otherwise mem, <estimator>-local or <estimator>-global");
    cmd->add_option("--checkpoint", in.checkpoint, "Network checkpoint for --method mem");
}

// Illuminant fields carry norm sqrt(3); rescale so the brightest channel is 1.
void write_field_png(const fs::path& path, const IlluminantField& field) {
    LinearImage img = retag<LinearImage>(field);
    const double peak = max_component(img);
    if (peak > 0.0) {
        for (double& v : img.data()) v /= peak;
    }
    io::write_png(path, img);
}

IlluminantField map_image(const EstimateMap& map) {
    IlluminantField f(kMapRows, kMapCols);
    for (int r = 0; r < kMapRows; ++r) {
        for (int c = 0; c < kMapCols; ++c) f.set_pixel(r, c, map[r * kMapCols + c].rgb());
    }
    return f;
}

std::string map_dump(const EstimateMap& map) {
    std::string out = "row,col,r,g,b,degrees_from_white\n";
    for (int r = 0; r < kMapRows; ++r) {
        for (int c = 0; c < kMapCols; ++c) {
            const Illuminant& e = map[r * kMapCols + c];
            out += std::to_string(r) + "," + std::to_string(c) + "," + format_double(e[0]) + "," + format_double(e[1]) +
                   "," + format_double(e[2]) + "," + format_double(angular_error(e, Illuminant())) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
    std::string out;
    int count = 20;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    SynthConfig synth;
    bool single_light = false;
    bool gamma = false;
};

int run_gen_synth(const GenSynthArgs& a) {
    fs::create_directories(a.out);
    Rng rng(derive_seed(a.seed, 0));
    const std::vector<Split> splits = seeded_split(static_cast<std::size_t>(a.count), a.train_fraction, derive_seed(a.seed, 1));
    DatasetManifest m;
    m.root = a.out;
    for (int i = 0; i < a.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "scene%04d", i);
        ScenePair pair;
        if (a.single_light) {
            const Illuminant light = random_light(rng);
            const LinearImage refl = random_reflectance(a.synth.height, a.synth.width, a.synth.patch_size,
                                                        a.synth.chroma_spread, rng);
            pair = synth_scene(light, light, refl, Mask(a.synth.height, a.synth.width, 1.0), a.synth.noise_sigma, rng, id);
        } else {
            pair = random_synthetic_scene(a.synth, rng, id);
        }
        ManifestEntry e{std::string(id) + "_scene.png", std::string(id) + "_gt.png", id, splits[static_cast<std::size_t>(i)],
                        a.gamma ? Transfer::gamma22 : Transfer::linear};
        save_pair(a.out, e, pair);
        m.entries.push_back(std::move(e));
    }
    io::write_file_atomic(fs::path(a.out) / "manifest.tsv", format_manifest(m));
    std::cout << "wrote " << a.count << " scenes to " << a.out << "\n";
    return 0;
}

struct EstimateArgs {
    SceneInput scene;
    MethodInput method;
    int k = kDefaultSmoothingWindow;
    std::string out;
};

int run_estimate(const EstimateArgs& a) {
    const LinearImage scene = load_scene(a.scene);
    const RegionGrid grid(scene.height(), scene.width());
    const EstimateMap map = make_estimator(a.method)(scene, grid);
    const IlluminantField raw = upsample(map, grid);
    const fs::path out(a.out);
    fs::create_directories(out);
    write_field_png(out / "map.png", map_image(map));
    write_field_png(out / "map_full.png", raw);
    write_field_png(out / "field.png", smooth(raw, a.k));
    io::write_file_atomic(out / "map.csv", map_dump(map));
    return 0;
}

struct CorrectArgs {
    SceneInput scene;
    MethodInput method;
    int k = kDefaultSmoothingWindow;
    std::string out;
    bool display = false;
};

int run_correct(const CorrectArgs& a) {
    const LinearImage scene = load_scene(a.scene);
    const Correction c = mem_correct(scene, make_estimator(a.method), a.k);
    LinearImage img = c.corrected;
    if (a.display) {
        img = to_display(img);
    } else {
        const double peak = max_component(img);
        if (peak > 1.0) {
            for (double& v : img.data()) v /= peak;
        }
    }
    io::write_png(a.out, img);
    return 0;
}

struct TrainArgs {
    std::string manifest;
    std::string out;
    std::string arch = "standard";
    TrainConfig cfg;
};

Architecture parse_arch(const std::string& s) {
    if (s == "standard") return Architecture::standard();
    if (s == "tiny") return Architecture::tiny();
    return Architecture::parse(s);
}

int run_train(const TrainArgs& a) {
    a.cfg.validate();
    const Architecture arch = parse_arch(a.arch);
    const DatasetManifest m = read_manifest(a.manifest);
    std::vector<ScenePair> data;
    for (const ManifestEntry& e : m.entries_in(Split::train)) data.push_back(load_pair(m, e));
    if (data.empty()) throw DomainError("manifest has no train entries");

    const fs::path out(a.out);
    fs::create_directories(out);
    std::string log = "step,loss_degrees\n";
    const TrainResult res = train(data, arch, a.cfg,
                                  [&](const NetworkParams& p, const OptimizerState& st, const TrainLogEntry& e) {
                                      log += std::to_string(e.step) + "," + format_double(e.loss) + "\n";
                                      if (a.cfg.checkpoint_interval > 0 && e.step % a.cfg.checkpoint_interval == 0) {
                                          char name[48];
                                          std::snprintf(name, sizeof name, "step%08llu.ckpt",
                                                        static_cast<unsigned long long>(e.step));
                                          save_checkpoint(out / name, {p, st, a.cfg});
                                          io::write_file_atomic(out / "loss.csv", log);
                                      }
                                  });
    save_checkpoint(out / "final.ckpt", {res.params, res.optimizer, a.cfg});
    io::write_file_atomic(out / "loss.csv", log);
    const double last = res.log.empty() ? 0.0 : res.log.back().loss;
    std::cout << "trained " << res.optimizer.step << " steps, last batch loss " << format_double(last) << " deg\n";
    return 0;
}

struct EvalArgs {
    std::string manifest;
    std::vector<std::string> methods;
    std::string metric = "both";
    std::string checkpoint;
    std::string out;
};

void print_summaries(const std::vector<MethodSummary>& summaries) {
    for (const MetricKind metric : {MetricKind::map, MetricKind::global}) {
        bool any = false;
        for (const auto& s : summaries) any = any || s.metric == metric;
        if (!any) continue;
        std::cout << "[" << to_string(metric) << "]\n" << format_summary_csv(summaries, metric);
    }
}

int run_eval_cmd(const EvalArgs& a) {
    EvalOptions opt;
    opt.methods = a.methods;
    if (a.metric != "both") opt.metrics = {parse_metric(a.metric)};
    if (!a.checkpoint.empty()) opt.checkpoint = fs::path(a.checkpoint);
    const EvalReport rep = run_eval(read_manifest(a.manifest), opt);

    const fs::path out(a.out);
    fs::create_directories(out);
    io::write_file_atomic(out / "report.csv", format_records_csv(rep.records));
    for (const MetricKind metric : opt.metrics) {
        io::write_file_atomic(out / ("summary_" + std::string(to_string(metric)) + ".csv"),
                              format_summary_csv(rep.summaries, metric));
    }
    print_summaries(rep.summaries);
    return 0;
}

int run_stats(const std::string& path) {
    const std::vector<EvalRecord> records = parse_records_csv(io::read_file(path));
    if (records.empty()) throw DomainError("no records in " + path);
    print_summaries(summarize_by_method(records));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Region-wise illuminant estimation and colour correction"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;

    GenSynthArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-synth", "Write synthetic two-light scenes and a manifest");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--count", gen.count, "Number of scenes")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--train-fraction", gen.train_fraction)->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--height", gen.synth.height)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--width", gen.synth.width)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--min-separation", gen.synth.min_separation_deg, "Degrees between the two lights");
    gen_cmd->add_option("--max-separation", gen.synth.max_separation_deg);
    gen_cmd->add_option("--noise", gen.synth.noise_sigma)->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--patch", gen.synth.patch_size)->check(CLI::PositiveNumber);
    gen_cmd->add_flag("--single-light", gen.single_light, "One light over the whole scene");
    gen_cmd->add_flag("--gamma", gen.gamma, "Store scenes gamma-encoded");
    gen_cmd->add_option("--seed", seed);

    EstimateArgs est;
    auto* est_cmd = app.add_subcommand("estimate", "Estimate the illuminant map of a scene");
    add_scene_flags(est_cmd, est.scene);
    add_method_flags(est_cmd, est.method);
    est_cmd->add_option("--k", est.k, "Smoothing window (odd)");
    est_cmd->add_option("--out", est.out, "Output directory")->required();
    est_cmd->add_option("--seed", seed);

    CorrectArgs cor;
    auto* cor_cmd = app.add_subcommand("correct", "Remove the estimated illuminant from a scene");
    add_scene_flags(cor_cmd, cor.scene);
    add_method_flags(cor_cmd, cor.method);
    cor_cmd->add_option("--k", cor.k, "Smoothing window (odd)");
    cor_cmd->add_option("--out", cor.out, "Output PNG")->required();
    cor_cmd->add_flag("--display", cor.display, "Gamma-encode and clip for viewing");
    cor_cmd->add_option("--seed", seed);

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "Train the region estimator network");
    tr_cmd->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
    tr_cmd->add_option("--out", tr.out, "Output directory")->required();
    tr_cmd->add_option("--arch", tr.arch, "standard, tiny or a layer descriptor");
    tr_cmd->add_option("--epochs", tr.cfg.epochs);
    tr_cmd->add_option("--lr", tr.cfg.learning_rate);
    tr_cmd->add_option("--batch", tr.cfg.batch_size);
    tr_cmd->add_option("--max-steps", tr.cfg.max_steps, "Stop after this many steps (0 = all epochs)");
    tr_cmd->add_option("--checkpoint-interval", tr.cfg.checkpoint_interval);
    tr_cmd->add_option("--crop-height", tr.cfg.crop_height);
    tr_cmd->add_option("--crop-width", tr.cfg.crop_width);
    tr_cmd->add_option("--flip-probability", tr.cfg.flip_probability);
    tr_cmd->add_option("--seed", seed);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Score methods on the test split");
    ev_cmd->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--method", ev.methods, "Repeatable")->required();
    ev_cmd->add_option("--metric", ev.metric)->check(CLI::IsMember({"map", "global", "both"}));
    ev_cmd->add_option("--checkpoint", ev.checkpoint);
    ev_cmd->add_option("--out", ev.out, "Output directory")->required();
    ev_cmd->add_option("--seed", seed);

    std::string stats_in;
    auto* st_cmd = app.add_subcommand("stats", "Summarize a report CSV");
    st_cmd->add_option("report", stats_in, "report.csv from eval")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "memcc: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen_cmd) {
            gen.seed = seed;
            return run_gen_synth(gen);
        }
        if (*est_cmd) return run_estimate(est);
        if (*cor_cmd) return run_correct(cor);
        if (*tr_cmd) {
            tr.cfg.seed = seed;
            return run_train(tr);
        }
        if (*ev_cmd) return run_eval_cmd(ev);
        if (*st_cmd) return run_stats(stats_in);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& ch : msg) {
            if (ch == '\n') ch = ' ';
        }
        std::cerr << "memcc: error: " << msg << "\n";
        return 1;
    }
    return 1;
}
