#pragma once

// Command-line front end: match, eval, gen-synth, inspect.
//
// Exit codes: 0 success, 1 invalid input (bad flags, malformed data),
// 2 I/O failure (missing or unwritable paths).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "noctis/assignment.hpp"
#include "noctis/descriptor_store.hpp"
#include "noctis/error.hpp"
#include "noctis/evaluation.hpp"
#include "noctis/scoring.hpp"
#include "noctis/synth.hpp"

namespace noctis::cli {

struct MatchOptions {
    std::string templates;
    std::vector<std::string> proposals;
    std::string out;
    ScoreConfig score;
    AssignmentConfig assign;
    bool no_clamp = false;
    std::uint64_t seed = 0;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    bool record_time = false;
};

struct EvalOptions {
    std::string results;
    std::string gt;
    std::string out;
};

struct InspectOptions {
    std::string path;
};

namespace cli_detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) {
        throw InvalidInput(message);
    }
}

inline void validate_match(const MatchOptions& o) {
    require(o.score.delta_ct >= 0.0, "delta-ct must be ≥ 0");
    require(o.score.w_appe > 0.0, "w-appe must be > 0");
    require(o.score.semantic_top_k >= 1, "top-k must be ≥ 1");
    require(o.assign.conf_threshold >= 0.0 && o.assign.conf_threshold <= 1.0, "conf-thresh must lie in [0, 1]");
    require(o.assign.nms_iou >= 0.0 && o.assign.nms_iou <= 1.0, "nms-iou must lie in [0, 1]");
    require(o.assign.min_proposal_conf >= 0.0 && o.assign.min_proposal_conf <= 1.0,
            "min-prop-conf must lie in [0, 1]");
    require(o.assign.min_relative_area >= 0.0 && o.assign.min_relative_area <= 1.0,
            "min-rel-area must lie in [0, 1]");
    require(o.score.batch_proposals >= 1, "batch-proposals must be ≥ 1");
    require(o.score.batch_objects >= 1, "batch-objects must be ≥ 1");
    require(o.jobs >= 1, "jobs must be ≥ 1");
}

struct SceneOutcome {
    std::vector<DetectionResult> detections;
    std::size_t n_proposals = 0;
    double seconds = 0.0;
    std::exception_ptr error;
};

inline int cmd_match(MatchOptions o, std::ostream& out) {
    o.score.clamp_weighted_appearance = !o.no_clamp;
    validate_match(o);

    const auto lib = read_template_library(o.templates);
    std::vector<SceneProposals> scenes;
    for (const auto& p : o.proposals) {
        for (auto& s : read_scene_set(p)) {
            scenes.push_back(std::move(s));
        }
    }
    std::stable_sort(scenes.begin(), scenes.end(), [](const SceneProposals& a, const SceneProposals& b) {
        return std::tie(a.scene_id, a.image_id) < std::tie(b.scene_id, b.image_id);
    });

    std::vector<SceneOutcome> outcomes(scenes.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < scenes.size(); i = next++) {
            auto& res = outcomes[i];
            try {
                const auto start = std::chrono::steady_clock::now();
                res.detections = run_matching(scenes[i], lib, o.score, o.assign);
                res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                res.n_proposals = scenes[i].proposals.size();
            } catch (...) {
                res.error = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(o.jobs, std::max<std::size_t>(1, scenes.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }

    std::vector<DetectionResult> all;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto& res = outcomes[i];
        if (res.error) {
            std::rethrow_exception(res.error);
        }
        std::sort(res.detections.begin(), res.detections.end(),
                  [](const DetectionResult& a, const DetectionResult& b) { return a.proposal_index < b.proposal_index; });
        for (auto& d : res.detections) {
            d.time = o.record_time ? res.seconds : -1.0;
            all.push_back(std::move(d));
        }
        char line[160];
        std::snprintf(line, sizeof(line), "scene %lld image %lld: %zu proposals, %zu detections, %.3f s\n",
                      static_cast<long long>(scenes[i].scene_id), static_cast<long long>(scenes[i].image_id),
                      res.n_proposals, res.detections.size(), res.seconds);
        out << line;
    }
    write_results(o.out, all);
    return 0;
}

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
    const auto report = evaluate_dataset(o.results, o.gt);
    const auto text = report_to_json(report).dump(2);
    out << text << '\n';
    if (!o.out.empty()) {
        std::ofstream f(o.out, std::ios::trunc);
        if (!f || !(f << text << '\n')) {
            throw IoError("cannot write report: " + o.out);
        }
    }
    return 0;
}

inline int cmd_gen_synth(const SynthConfig& cfg, const std::string& out_dir, std::ostream& out) {
    const auto bench = make_benchmark(cfg);
    write_benchmark(bench, out_dir);
    out << "wrote " << bench.library.objects.size() << " objects, " << bench.scenes.size() << " scene(s), "
        << bench.ground_truth.size() << " ground-truth instances to " << out_dir << '\n';
    return 0;
}

struct ValidStats {
    std::size_t n = 0;
    std::size_t min = std::numeric_limits<std::size_t>::max();
    std::size_t max = 0;
    double sum = 0.0;

    void add(const PatchGridDescriptor& d) {
        const auto v = d.valid_count();
        ++n;
        min = std::min(min, v);
        max = std::max(max, v);
        sum += static_cast<double>(v);
    }

    std::string str() const {
        if (n == 0) {
            return "valid patches: n/a";
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "valid patches per descriptor: min %zu, mean %.1f, max %zu", min,
                      sum / static_cast<double>(n), max);
        return buf;
    }
};

inline void print_shape(std::ostream& out, std::size_t embed_dim, GridShape grid) {
    out << "format: " << kFormatTag << '\n'
        << "embed_dim: " << embed_dim << '\n'
        << "grid: " << grid.rows << "x" << grid.cols << '\n';
}

inline int cmd_inspect(const InspectOptions& o, std::ostream& out) {
    namespace fs = std::filesystem;
    const fs::path path = o.path;
    const auto manifest_path = path / "manifest.json";
    if (!fs::exists(manifest_path)) {
        // Possibly a directory of scene containers.
        const auto scenes = read_scene_set(path);
        for (const auto& s : scenes) {
            ValidStats stats;
            for (const auto& p : s.proposals) {
                stats.add(p.descriptor);
            }
            out << "scene " << s.scene_id << " image " << s.image_id << ": " << s.proposals.size() << " proposals, "
                << stats.str() << '\n';
        }
        return 0;
    }
    std::ifstream in(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("manifest is not valid JSON: " + std::string(e.what()));
    }
    if (j.contains("objects")) {
        const auto lib = read_template_library(path);
        ValidStats stats;
        std::size_t n_templates = 0;
        for (const auto& obj : lib.objects) {
            n_templates += obj.templates.size();
            for (const auto& t : obj.templates) {
                stats.add(t);
            }
        }
        out << "template library\n";
        print_shape(out, lib.embed_dim, lib.grid);
        out << "objects: " << lib.objects.size() << '\n' << "templates: " << n_templates << '\n';
        for (const auto& obj : lib.objects) {
            out << "  object " << obj.object_id << ": " << obj.templates.size() << " templates\n";
        }
        out << stats.str() << '\n';
    } else {
        const auto scene = read_scene_proposals(path);
        ValidStats stats;
        for (const auto& p : scene.proposals) {
            stats.add(p.descriptor);
        }
        out << "scene proposals\n";
        print_shape(out, scene.embed_dim, scene.grid);
        out << "scene_id: " << scene.scene_id << '\n'
            << "image_id: " << scene.image_id << '\n'
            << "image_size: " << scene.image_size.width << "x" << scene.image_size.height << '\n'
            << "proposals: " << scene.proposals.size() << '\n'
            << stats.str() << '\n';
    }
    return 0;
}

} // namespace cli_detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"noctis: template matching and evaluation for zero-shot instance segmentation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a TOML/INI file");

    MatchOptions match;
    auto* m = app.add_subcommand("match", "Score proposals against templates and write detections");
    m->add_option("--templates", match.templates, "Template library container")->required();
    m->add_option("--proposals", match.proposals, "Scene container, or directory of scene containers (repeatable)")
        ->required();
    m->add_option("--out", match.out, "Result JSON file")->required();
    m->add_option("--delta-ct", match.score.delta_ct, "Cyclic distance threshold, grid cells")
        ->capture_default_str();
    m->add_option("--w-appe", match.score.w_appe, "Appearance weight")->capture_default_str();
    m->add_flag("--no-clamp", match.no_clamp, "Do not clamp the weighted appearance term to [0, 1]");
    m->add_option("--top-k", match.score.semantic_top_k, "Templates averaged by the semantic score")
        ->capture_default_str();
    m->add_option("--conf-thresh", match.assign.conf_threshold, "Minimum detection score")->capture_default_str();
    m->add_option("--nms-iou", match.assign.nms_iou, "Mask IoU above which NMS suppresses")->capture_default_str();
    m->add_option("--min-prop-conf", match.assign.min_proposal_conf, "Minimum proposal confidence")
        ->capture_default_str();
    m->add_option("--min-rel-area", match.assign.min_relative_area, "Minimum mask area relative to the image")
        ->capture_default_str();
    m->add_option("--batch-proposals", match.score.batch_proposals, "Proposals per score tile")
        ->capture_default_str();
    m->add_option("--batch-objects", match.score.batch_objects, "Objects per score tile")->capture_default_str();
    m->add_option("--seed", match.seed, "Accepted for config compatibility; matching is deterministic");
    m->add_option("--jobs", match.jobs, "Scenes processed in parallel")->capture_default_str();
    m->add_flag("--record-time", match.record_time, "Write measured per-image seconds instead of -1");

    EvalOptions eval;
    auto* e = app.add_subcommand("eval", "Compute mask AP of a result file against ground truth");
    e->add_option("--results", eval.results, "Result JSON file")->required();
    e->add_option("--gt", eval.gt, "Ground-truth JSON file")->required();
    e->add_option("--out", eval.out, "Also write the report here");

    SynthConfig synth;
    std::string synth_out;
    auto* g = app.add_subcommand("gen-synth", "Generate a synthetic benchmark");
    g->add_option("--seed", synth.seed)->capture_default_str();
    g->add_option("--n-objects", synth.n_objects)->capture_default_str();
    g->add_option("--n-templates", synth.n_templates, "Templates per object")->capture_default_str();
    g->add_option("--n-proposals", synth.n_proposals, "Proposals per scene")->capture_default_str();
    g->add_option("--n-scenes", synth.n_scenes)->capture_default_str();
    g->add_option("--embed-dim", synth.embed_dim)->capture_default_str();
    g->add_option("--grid", synth.grid, "Patch grid side")->capture_default_str();
    g->add_option("--noise", synth.noise_sigma, "Per-component noise sigma")->capture_default_str();
    g->add_option("--distractors", synth.distractor_fraction, "Fraction of distractor proposals")
        ->capture_default_str();
    g->add_option("--cell-px", synth.cell_px, "Image cell size per proposal")->capture_default_str();
    g->add_option("--out", synth_out, "Output directory")->required();

    InspectOptions inspect;
    auto* i = app.add_subcommand("inspect", "Summarize a descriptor container");
    i->add_option("path", inspect.path, "Container directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& ex) {
        err << ex.what() << '\n';
        return 1;
    }

    try {
        if (*m) {
            return cli_detail::cmd_match(match, out);
        }
        if (*e) {
            return cli_detail::cmd_eval(eval, out);
        }
        if (*g) {
            return cli_detail::cmd_gen_synth(synth, synth_out, out);
        }
        return cli_detail::cmd_inspect(inspect, out);
    } catch (const IoError& ex) {
        err << "error: " << ex.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& ex) {
        err << "error: " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return 1;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"noctis"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace noctis::cli
