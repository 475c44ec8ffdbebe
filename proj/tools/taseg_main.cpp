#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "bench.hpp"
#include "taseg/core.hpp"
#include "taseg/data.hpp"
#include "taseg/exact.hpp"
#include "taseg/fifa.hpp"
#include "taseg/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taseg;

namespace {

constexpr const char* kSubcommands[] = {"infer", "eval", "synth", "estimate-lengths", "bench"};

// JSON config files, overridable by command-line flags. Flat keys apply to
// whichever subcommand runs; an object value scopes its keys to the named
// subcommand, e.g. {"steps": 30} or {"infer": {"steps": 30}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::FileError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        const auto inputs_of = [](const json& value) {
            std::vector<std::string> inputs;
            if (value.is_array()) {
                for (const auto& v : value) {
                    inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                }
            } else {
                inputs.push_back(value.is_string() ? value.get<std::string>() : value.dump());
            }
            return inputs;
        };
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                for (const auto& [name, inner] : value.items()) {
                    CLI::ConfigItem item;
                    item.parents = {key};
                    item.name = name;
                    item.inputs = inputs_of(inner);
                    items.push_back(std::move(item));
                }
            } else {
                for (const char* sub : kSubcommands) {
                    CLI::ConfigItem item;
                    item.parents = {sub};
                    item.name = key;
                    item.inputs = inputs_of(value);
                    items.push_back(std::move(item));
                }
            }
        }
        return items;
    }
};

void emit_error(errc kind, const std::string& message) {
    json j;
    j["error"] = {{"kind", errc_name(kind)}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

int exit_code_for(errc kind) { return kind == errc::runtime ? 3 : 2; }

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << std::endl;
        return;
    }
    std::ofstream out(path);
    if (!out) throw error(errc::io, "cannot open " + path + " for writing");
    out << text << '\n';
}

fifa::Exec exec_for_threads(int threads) {
#ifdef _OPENMP
    if (threads == 1) return fifa::Exec::serial;
    if (threads > 1) omp_set_num_threads(threads);
    return fifa::Exec::parallel;
#else
    (void)threads;
    return fifa::Exec::serial;
#endif
}

struct CommonFifaFlags {
    std::string optimizer = "adam";
    std::string family = "laplace";
    bool raw_mask = false;

    void add_to(CLI::App* cmd, fifa::FifaConfig& cfg) {
        cmd->add_option("--steps", cfg.steps, "gradient steps")->capture_default_str();
        cmd->add_option("--optimizer", optimizer, "sgd or adam")
            ->check(CLI::IsMember({"sgd", "adam"}))
            ->capture_default_str();
        cmd->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
        cmd->add_option("--sharpness", cfg.sharpness, "mask sharpness")->capture_default_str();
        cmd->add_option("--beta", cfg.beta, "length energy multiplier")->capture_default_str();
        cmd->add_option("--length-family", family, "laplace or gaussian length energy")
            ->check(CLI::IsMember({"laplace", "gaussian"}))
            ->capture_default_str();
        cmd->add_option("--adam-beta1", cfg.adam_beta1)->capture_default_str();
        cmd->add_option("--adam-beta2", cfg.adam_beta2)->capture_default_str();
        cmd->add_option("--adam-eps", cfg.adam_eps)->capture_default_str();
        cmd->add_flag("--raw-mask", raw_mask,
                      "optimize the unnormalized mask energy instead of the per-frame "
                      "soft assignment");
    }

    void apply(fifa::FifaConfig& cfg) const {
        cfg.optimizer = fifa::optimizer_from_name(optimizer);
        cfg.length_family = length_family_from_name(family);
        cfg.normalize_mask = !raw_mask;
    }
};

struct ExactFlags {
    void add_to(CLI::App* cmd, exact::ExactConfig& cfg) {
        cmd->add_option("--max-segment-len", cfg.max_segment_len, "cap on segment length")
            ->capture_default_str();
        cmd->add_option("--stride", cfg.frame_sample_stride, "frame sampling stride")
            ->capture_default_str();
        cmd->add_option("--beam", cfg.beam_width, "beam width over running lengths, 0 = dense")
            ->capture_default_str();
    }
};

json decode_to_json(const DecodeResult& decode, const Transcript& transcript, int transcript_index) {
    json j;
    j["transcript_index"] = transcript_index;
    j["transcript"] = transcript;
    j["lengths"] = decode.lengths;
    j["frame_labels"] = to_framewise(transcript, decode.lengths);
    if (!decode.real_lengths.empty()) j["real_lengths"] = decode.real_lengths;
    if (decode.energy.has_value()) {
        j["energy"] = {{"total", decode.energy->total},
                       {"observation", decode.energy->observation},
                       {"length", decode.energy->length}};
    }
    if (std::isfinite(decode.log_prob)) j["log_prob"] = decode.log_prob;
    j["elapsed_seconds"] = decode.elapsed_seconds;
    return j;
}

// ---------------------------------------------------------------- infer

struct InferOptions {
    std::string probs_path;
    std::string probs_format = "auto";
    double prob_floor = kDefaultProbFloor;
    std::string transcript_path;
    std::string candidates_dir;
    std::string model_path;
    std::string method = "both";
    std::string init = "from-model";
    std::string output = "-";
    std::string trace_csv;
    int threads = 1;
    exact::ExactConfig exact_cfg;
    fifa::FifaConfig fifa_cfg;
    CommonFifaFlags fifa_flags;
    ExactFlags exact_flags;
};

ProbMatrix load_probs_auto(const std::string& path, const std::string& format, double floor) {
    const data::ProbFormat resolved = format == "csv"    ? data::ProbFormat::csv
                                      : format == "segp" ? data::ProbFormat::packed_f32
                                                         : data::prob_format_from_path(path);
    return data::load_probs(path, resolved, floor);
}

std::vector<Transcript> gather_candidates(const InferOptions& opts) {
    std::vector<Transcript> candidates;
    if (!opts.transcript_path.empty()) {
        candidates.push_back(data::load_transcript(opts.transcript_path));
        return candidates;
    }
    std::vector<std::string> files;
    if (!fs::is_directory(opts.candidates_dir)) {
        throw error(errc::io, opts.candidates_dir + " is not a directory");
    }
    for (const auto& entry : fs::directory_iterator(opts.candidates_dir)) {
        if (entry.path().extension() == ".txt") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& file : files) candidates.push_back(data::load_transcript(file));
    if (candidates.empty()) {
        throw error(errc::io, "no candidate transcripts under " + opts.candidates_dir);
    }
    return candidates;
}

int cmd_infer(InferOptions& opts) {
    opts.fifa_flags.apply(opts.fifa_cfg);
    const fifa::Exec exec = exec_for_threads(opts.threads);
    const ProbMatrix probs = load_probs_auto(opts.probs_path, opts.probs_format, opts.prob_floor);
    const LengthModel model = data::load_length_model(opts.model_path);
    const std::vector<Transcript> candidates = gather_candidates(opts);
    const fifa::InitMode init_mode =
        opts.init == "equal" ? fifa::InitMode::equal : fifa::InitMode::from_model;

    json out;
    out["probs"] = opts.probs_path;
    out["frames"] = probs.num_frames;
    out["classes"] = probs.num_classes;
    out["method"] = opts.method;

    if (opts.method == "exact" || opts.method == "both") {
        const auto [index, decode] =
            exact::select_transcript_exact(probs, candidates, model, opts.exact_cfg);
        out["results"]["exact"] = decode_to_json(decode, candidates[index], index);
    }
    if (opts.method == "fifa" || opts.method == "both") {
        // the energy anchors where the from-model initialization starts, so
        // the per-video model is rescaled to the video length
        const auto align_candidate = [&](const Transcript& transcript) {
            const LengthModel base =
                init_mode == fifa::InitMode::equal
                    ? fifa::uniform_length_model(
                          probs.num_classes,
                          probs.num_frames / static_cast<double>(transcript.size()))
                    : model;
            LengthModel anchor = fifa::anchored_model(base, transcript, probs.num_frames);
            anchor.family = opts.fifa_cfg.length_family;
            const std::vector<double> init = fifa::init_lengths(
                fifa::InitMode::from_model, transcript, anchor, probs.num_frames);
            return fifa::fifa_align(probs, transcript, init, anchor, opts.fifa_cfg, exec);
        };

        int best = -1;
        fifa::FifaResult best_result;
        if (candidates.size() == 1) {
            best = 0;
            best_result = align_candidate(candidates[0]);
        } else {
            std::string failures;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                try {
                    fifa::FifaResult result = align_candidate(candidates[i]);
                    if (best < 0 ||
                        result.decode.energy->total < best_result.decode.energy->total) {
                        best = static_cast<int>(i);
                        best_result = std::move(result);
                    }
                } catch (const error& e) {
                    failures += "candidate " + std::to_string(i) + ": " + e.what() + "; ";
                }
            }
            if (best < 0) {
                throw error(errc::infeasible, "every candidate transcript failed: " + failures);
            }
        }
        out["results"]["fifa"] = decode_to_json(best_result.decode, candidates[best], best);
        if (!opts.trace_csv.empty()) {
            std::ofstream trace(opts.trace_csv);
            if (!trace) throw error(errc::io, "cannot open " + opts.trace_csv + " for writing");
            best_result.trace.write_csv(trace);
        }
    }
    write_output(opts.output, out.dump(2));
    return 0;
}

// ----------------------------------------------------------------- eval

struct EvalOptions {
    std::string pred_path;
    std::string gt_path;
    std::vector<int> background;
    std::string output = "-";
};

int cmd_eval(const EvalOptions& opts) {
    const Segmentation pred = data::load_segmentation(opts.pred_path);
    const Segmentation gt = data::load_segmentation(opts.gt_path);
    const metrics::MetricReport report = metrics::evaluate(pred, gt, opts.background);
    write_output(opts.output, report.to_json());
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
    data::SynthConfig cfg;
    int count = 1;
    std::string out_dir;
    std::string format = "segp";
};

int cmd_synth(const SynthOptions& opts) {
    if (opts.count < 1) throw error(errc::validation, "count must be >= 1");
    fs::create_directories(opts.out_dir);
    const data::ProbFormat format =
        opts.format == "csv" ? data::ProbFormat::csv : data::ProbFormat::packed_f32;
    for (int i = 0; i < opts.count; ++i) {
        data::SynthConfig cfg = opts.cfg;
        cfg.seed = opts.cfg.seed + static_cast<std::uint64_t>(i);
        cfg.validate();
        const data::ProblemInstance inst = data::synth_instance(cfg);
        std::ostringstream id;
        id << "inst_" << std::setw(4) << std::setfill('0') << i;
        const std::string stem = (fs::path(opts.out_dir) / id.str()).string();
        data::save_probs(stem + (format == data::ProbFormat::csv ? ".probs.csv" : ".probs.segp"),
                         inst.probs, format);
        data::save_segmentation(stem + ".gt.txt", *inst.gt);
        data::save_transcript(stem + ".transcript.txt", *inst.transcript);
    }
    json summary;
    summary["count"] = opts.count;
    summary["dir"] = opts.out_dir;
    summary["seed"] = opts.cfg.seed;
    std::cout << summary.dump() << std::endl;
    return 0;
}

// ------------------------------------------------------- estimate-lengths

struct EstimateOptions {
    std::vector<std::string> gt_paths;
    std::string dir;
    int num_classes = 0;
    std::string family = "poisson";
    std::string output = "-";
};

int cmd_estimate(const EstimateOptions& opts) {
    std::vector<std::string> paths = opts.gt_paths;
    if (!opts.dir.empty()) {
        if (!fs::is_directory(opts.dir)) {
            throw error(errc::io, opts.dir + " is not a directory");
        }
        for (const auto& entry : fs::directory_iterator(opts.dir)) {
            const std::string name = entry.path().filename().string();
            if (name.size() > 7 && name.compare(name.size() - 7, 7, ".gt.txt") == 0) {
                paths.push_back(entry.path().string());
            }
        }
        std::sort(paths.begin(), paths.end());
    }
    if (paths.empty()) throw error(errc::validation, "no ground-truth files given");
    std::vector<Segmentation> train;
    train.reserve(paths.size());
    for (const std::string& path : paths) train.push_back(data::load_segmentation(path));
    const LengthModel model = data::estimate_length_model(
        train, opts.num_classes, length_family_from_name(opts.family));
    if (opts.output == "-") {
        json j;
        j["family"] = length_family_name(model.family);
        j["expected"] = model.expected;
        j["scale"] = model.scale;
        std::cout << j.dump(2) << std::endl;
    } else {
        data::save_length_model(opts.output, model);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal action segmentation inference: exact dynamic programming and "
                 "gradient-based approximate alignment"};
    app.require_subcommand(1);
    app.fallthrough();  // --config may follow the subcommand
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; explicit flags win");

    InferOptions infer_opts;
    EvalOptions eval_opts;
    SynthOptions synth_opts;
    EstimateOptions estimate_opts;
    bench::BenchOptions bench_opts;
    CommonFifaFlags bench_fifa_flags;
    ExactFlags bench_exact_flags;
    std::string bench_init = "from-model";
    std::string bench_grid;

    CLI::App* infer = app.add_subcommand("infer", "Decode one video's probabilities");
    infer->add_option("--probs", infer_opts.probs_path, "probability matrix file")->required();
    infer->add_option("--probs-format", infer_opts.probs_format, "csv, segp or auto")
        ->check(CLI::IsMember({"csv", "segp", "auto"}))
        ->capture_default_str();
    infer->add_option("--prob-floor", infer_opts.prob_floor,
                      "probability floor applied on load")
        ->capture_default_str();
    auto* transcript_opt =
        infer->add_option("--transcript", infer_opts.transcript_path, "known transcript file");
    infer->add_option("--candidates", infer_opts.candidates_dir,
                      "directory of candidate transcripts (*.txt, sorted by name)")
        ->excludes(transcript_opt);
    infer->add_option("--length-model", infer_opts.model_path, "length model JSON")->required();
    infer->add_option("--method", infer_opts.method, "exact, fifa or both")
        ->check(CLI::IsMember({"exact", "fifa", "both"}))
        ->capture_default_str();
    infer->add_option("--init", infer_opts.init, "from-model or equal initial lengths")
        ->check(CLI::IsMember({"from-model", "equal"}))
        ->capture_default_str();
    infer->add_option("--output", infer_opts.output, "output JSON path, - for stdout")
        ->capture_default_str();
    infer->add_option("--trace-csv", infer_opts.trace_csv,
                      "write the per-step optimization trace as CSV");
    infer->add_option("--threads", infer_opts.threads, "kernel threads, 1 = serial")
        ->capture_default_str();
    infer_opts.exact_flags.add_to(infer, infer_opts.exact_cfg);
    infer_opts.fifa_flags.add_to(infer, infer_opts.fifa_cfg);

    CLI::App* eval = app.add_subcommand("eval", "Score a predicted segmentation");
    eval->add_option("--pred", eval_opts.pred_path, "predicted frame labels")->required();
    eval->add_option("--gt", eval_opts.gt_path, "ground-truth frame labels")->required();
    eval->add_option("--background", eval_opts.background, "background class indices");
    eval->add_option("--output", eval_opts.output, "output JSON path, - for stdout")
        ->capture_default_str();

    CLI::App* synth = app.add_subcommand("synth", "Generate synthetic instances");
    synth->add_option("--frames", synth_opts.cfg.num_frames, "frames per video")
        ->capture_default_str();
    synth->add_option("--segments", synth_opts.cfg.num_segments, "segments per video")
        ->capture_default_str();
    synth->add_option("--classes", synth_opts.cfg.num_classes, "number of classes")
        ->capture_default_str();
    synth->add_option("--noise-temp", synth_opts.cfg.noise_temp,
                      "softmax temperature, 0 for one-hot rows")
        ->capture_default_str();
    synth->add_option("--confusion-prob", synth_opts.cfg.confusion_prob,
                      "chance a frame's argmax is swapped away")
        ->capture_default_str();
    synth->add_option("--dirichlet-alpha", synth_opts.cfg.dirichlet_alpha,
                      "length composition concentration")
        ->capture_default_str();
    synth->add_option("--class-length-spread", synth_opts.cfg.class_length_spread,
                      "how strongly expected length grows with the class index, in [0,1)")
        ->capture_default_str();
    synth->add_option("--seed", synth_opts.cfg.seed, "seed of the first instance")
        ->capture_default_str();
    synth->add_option("--count", synth_opts.count, "number of instances")->capture_default_str();
    synth->add_option("--out-dir", synth_opts.out_dir, "output directory")->required();
    synth->add_option("--format", synth_opts.format, "probs file format: segp or csv")
        ->check(CLI::IsMember({"segp", "csv"}))
        ->capture_default_str();

    CLI::App* estimate = app.add_subcommand("estimate-lengths",
                                            "Estimate a length model from ground-truth labels");
    estimate->add_option("--gt", estimate_opts.gt_paths, "ground-truth files");
    estimate->add_option("--dir", estimate_opts.dir, "directory of *.gt.txt files");
    estimate->add_option("--num-classes", estimate_opts.num_classes, "number of classes")
        ->required();
    estimate->add_option("--family", estimate_opts.family, "poisson, laplace or gaussian")
        ->check(CLI::IsMember({"poisson", "laplace", "gaussian"}))
        ->capture_default_str();
    estimate->add_option("--output", estimate_opts.output, "model JSON path, - for stdout")
        ->capture_default_str();

    CLI::App* bench = app.add_subcommand("bench", "Benchmark scenarios over an instance directory");
    bench->add_option("--scenario", bench_opts.scenario,
                      "steps-sweep, exact-sampling-sweep, beta-sweep, lr-sweep, init-ablation "
                      "or speedup-head-to-head")
        ->required()
        ->check(CLI::IsMember({"steps-sweep", "exact-sampling-sweep", "beta-sweep", "lr-sweep",
                               "init-ablation", "speedup-head-to-head"}));
    bench->add_option("--instances", bench_opts.instances_dir, "instance directory")->required();
    bench->add_option("--out", bench_opts.output_path, "CSV path, - for stdout")
        ->capture_default_str();
    bench->add_option("--length-model", bench_opts.length_model_path,
                      "length model JSON; estimated from the instance labels when omitted");
    bench->add_option("--grid", bench_grid, "comma-separated scenario values");
    bench->add_option("--repeats", bench_opts.repeats, "timing repetitions per point")
        ->capture_default_str();
    bench->add_option("--threads", bench_opts.threads, "instance worker pool size")
        ->capture_default_str();
    bench->add_option("--seed", bench_opts.seed, "recorded in every row")->capture_default_str();
    bench->add_option("--background", bench_opts.background, "background class indices");
    bench->add_option("--init", bench_init, "from-model or equal")
        ->check(CLI::IsMember({"from-model", "equal"}))
        ->capture_default_str();
    bench_exact_flags.add_to(bench, bench_opts.exact_cfg);
    bench_fifa_flags.add_to(bench, bench_opts.fifa_cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        json j;
        j["error"] = {{"kind", "usage"}, {"message", e.what()}};
        std::cerr << j.dump() << std::endl;
        return 2;
    }

    try {
        if (infer->parsed()) return cmd_infer(infer_opts);
        if (eval->parsed()) return cmd_eval(eval_opts);
        if (synth->parsed()) return cmd_synth(synth_opts);
        if (estimate->parsed()) return cmd_estimate(estimate_opts);
        if (bench->parsed()) {
            bench_fifa_flags.apply(bench_opts.fifa_cfg);
            bench_opts.init_mode = bench_init == "equal" ? fifa::InitMode::equal
                                                         : fifa::InitMode::from_model;
            if (!bench_grid.empty()) {
                std::stringstream ss(bench_grid);
                std::string token;
                while (std::getline(ss, token, ',')) {
                    bench_opts.grid.push_back(std::stod(token));
                }
            }
            bench::run_bench(bench_opts);
            return 0;
        }
    } catch (const error& e) {
        emit_error(e.kind(), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        emit_error(errc::runtime, e.what());
        return 3;
    }
    return 0;
}
