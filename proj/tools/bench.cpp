#include "bench.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "taseg/core.hpp"
#include "taseg/data.hpp"
#include "taseg/metrics.hpp"

namespace taseg::bench {

namespace fs = std::filesystem;

const char* const kCsvHeader =
    "scenario,point,agg,repeat,method,steps,optimizer,lr,sharpness,beta,family,init,stride,beam,"
    "threads,seed,instances,errors,status,mof,mof_bg,iou,iod,edit,f1_10,f1_25,f1_50,"
    "decode_seconds_total,decode_seconds_mean,note";

namespace {

struct Instance {
    std::string id;
    ProbMatrix probs;
    Segmentation gt;
    Transcript transcript;
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), std::string::npos, suffix) == 0;
}

std::vector<Instance> load_instances(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw error(errc::io, dir + " is not a directory");
    }
    std::vector<std::pair<std::string, data::ProbFormat>> found;  // id, probs format
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (ends_with(name, ".probs.segp")) {
            found.emplace_back(name.substr(0, name.size() - 11), data::ProbFormat::packed_f32);
        } else if (ends_with(name, ".probs.csv")) {
            found.emplace_back(name.substr(0, name.size() - 10), data::ProbFormat::csv);
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<Instance> out;
    for (const auto& [id, format] : found) {
        const std::string stem = (fs::path(dir) / id).string();
        Instance inst;
        inst.id = id;
        inst.probs = data::load_probs(
            stem + (format == data::ProbFormat::packed_f32 ? ".probs.segp" : ".probs.csv"),
            format);
        inst.gt = data::load_segmentation(stem + ".gt.txt");
        inst.transcript = data::load_transcript(stem + ".transcript.txt");
        out.push_back(std::move(inst));
    }
    if (out.empty()) {
        throw error(errc::io, "no instances found under " + dir);
    }
    return out;
}

struct RunSpec {
    std::string point;
    std::string method;  // "exact" or "fifa"
    exact::ExactConfig exact_cfg;
    fifa::FifaConfig fifa_cfg;
    fifa::InitMode init_mode = fifa::InitMode::from_model;
};

struct RowStats {
    int instances = 0;
    int errors = 0;
    metrics::MetricReport mean;
    double decode_seconds_total = 0.0;
    std::string first_error;
};

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RowStats run_point(const RunSpec& spec, const std::vector<Instance>& instances,
                   const LengthModel& model, const std::vector<int>& background, int threads) {
    const int count = static_cast<int>(instances.size());
    std::vector<metrics::MetricReport> reports(count);
    std::vector<double> seconds(count, 0.0);
    std::vector<std::string> errors(count);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads)) if (threads > 1)
#endif
    for (int i = 0; i < count; ++i) {
        const Instance& inst = instances[i];
        try {
            const int frames = inst.probs.num_frames;
            const int n_seg = static_cast<int>(inst.transcript.size());
            // the equal condition replaces the length model with an
            // uninformative per-video one, for both inference methods
            const LengthModel video_model =
                spec.init_mode == fifa::InitMode::equal
                    ? fifa::uniform_length_model(inst.probs.num_classes,
                                                 frames / static_cast<double>(n_seg))
                    : model;

            DecodeResult decode;
            if (spec.method == "exact") {
                decode = exact::viterbi_with_sampling(inst.probs, inst.transcript, video_model,
                                                      spec.exact_cfg);
            } else {
                LengthModel anchor =
                    fifa::anchored_model(video_model, inst.transcript, frames);
                anchor.family = spec.fifa_cfg.length_family;
                const std::vector<double> init = fifa::init_lengths(
                    fifa::InitMode::from_model, inst.transcript, anchor, frames);
                decode = fifa::fifa_align(inst.probs, inst.transcript, init, anchor,
                                          spec.fifa_cfg, fifa::Exec::serial)
                             .decode;
            }
            const Segmentation pred = to_framewise(inst.transcript, decode.lengths);
            reports[i] = metrics::evaluate(pred, inst.gt, background);
            seconds[i] = decode.elapsed_seconds;
        } catch (const std::exception& e) {
            errors[i] = inst.id + ": " + e.what();
        }
    }

    RowStats stats;
    stats.instances = count;
    for (int i = 0; i < count; ++i) {
        if (!errors[i].empty()) {
            ++stats.errors;
            if (stats.first_error.empty()) stats.first_error = errors[i];
            continue;
        }
        stats.mean.mof += reports[i].mof;
        stats.mean.mof_bg += reports[i].mof_bg;
        stats.mean.iou += reports[i].iou;
        stats.mean.iod += reports[i].iod;
        stats.mean.edit += reports[i].edit;
        stats.mean.f1_10 += reports[i].f1_10;
        stats.mean.f1_25 += reports[i].f1_25;
        stats.mean.f1_50 += reports[i].f1_50;
        stats.decode_seconds_total += seconds[i];
    }
    const int ok = stats.instances - stats.errors;
    if (ok > 0) {
        stats.mean.mof /= ok;
        stats.mean.mof_bg /= ok;
        stats.mean.iou /= ok;
        stats.mean.iod /= ok;
        stats.mean.edit /= ok;
        stats.mean.f1_10 /= ok;
        stats.mean.f1_25 /= ok;
        stats.mean.f1_50 /= ok;
    }
    return stats;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

struct Row {
    const BenchOptions* opts;
    const RunSpec* spec;
    std::string agg;
    int repeat = 0;
    RowStats stats;
    std::string note;

    void write(std::ostream& os) const {
        const RunSpec& s = *spec;
        const char* status = stats.errors == 0              ? "ok"
                             : stats.errors < stats.instances ? "partial"
                                                              : "error";
        os << opts->scenario << ',' << csv_escape(s.point) << ',' << agg << ',' << repeat << ','
           << s.method << ',' << s.fifa_cfg.steps << ',' << fifa::optimizer_name(s.fifa_cfg.optimizer)
           << ',' << s.fifa_cfg.learning_rate << ',' << s.fifa_cfg.sharpness << ','
           << s.fifa_cfg.beta << ',' << length_family_name(s.fifa_cfg.length_family) << ','
           << (s.init_mode == fifa::InitMode::equal ? "equal" : "from-model") << ','
           << s.exact_cfg.frame_sample_stride << ',' << s.exact_cfg.beam_width << ','
           << opts->threads << ',' << opts->seed << ',' << stats.instances << ',' << stats.errors
           << ',' << status << ',' << stats.mean.mof << ',' << stats.mean.mof_bg << ','
           << stats.mean.iou << ',' << stats.mean.iod << ',' << stats.mean.edit << ','
           << stats.mean.f1_10 << ',' << stats.mean.f1_25 << ',' << stats.mean.f1_50 << ','
           << stats.decode_seconds_total << ','
           << stats.decode_seconds_total / std::max(1, stats.instances - stats.errors) << ','
           << csv_escape(note.empty() ? stats.first_error : note) << '\n';
    }
};

std::vector<RunSpec> scenario_points(const BenchOptions& opts) {
    std::vector<double> grid = opts.grid;
    std::vector<RunSpec> points;
    RunSpec base;
    base.exact_cfg = opts.exact_cfg;
    base.fifa_cfg = opts.fifa_cfg;
    base.init_mode = opts.init_mode;

    const auto as_steps = [](double v) { return static_cast<int>(v); };

    if (opts.scenario == "steps-sweep") {
        if (grid.empty()) grid = {0, 2, 5, 10, 30, 50, 60};
        for (double v : grid) {
            RunSpec spec = base;
            spec.method = "fifa";
            spec.fifa_cfg.steps = as_steps(v);
            spec.point = "steps=" + std::to_string(spec.fifa_cfg.steps);
            points.push_back(spec);
        }
        RunSpec reference = base;
        reference.method = "exact";
        reference.point = "exact";
        points.push_back(reference);
    } else if (opts.scenario == "exact-sampling-sweep") {
        if (grid.empty()) grid = {1, 2, 4, 8, 16};
        for (double v : grid) {
            RunSpec spec = base;
            spec.method = "exact";
            spec.exact_cfg.frame_sample_stride = as_steps(v);
            spec.point = "stride=" + std::to_string(spec.exact_cfg.frame_sample_stride);
            points.push_back(spec);
        }
        RunSpec reference = base;
        reference.method = "fifa";
        reference.point = "fifa";
        points.push_back(reference);
    } else if (opts.scenario == "beta-sweep") {
        if (grid.empty()) grid = {0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0};
        for (const LengthFamily family : {LengthFamily::laplace, LengthFamily::gaussian}) {
            for (double v : grid) {
                RunSpec spec = base;
                spec.method = "fifa";
                spec.fifa_cfg.beta = v;
                spec.fifa_cfg.length_family = family;
                std::ostringstream label;
                label << length_family_name(family) << ",beta=" << v;
                spec.point = label.str();
                points.push_back(spec);
            }
        }
    } else if (opts.scenario == "lr-sweep") {
        if (grid.empty()) grid = {0.001, 0.005, 0.01, 0.05, 0.1, 0.3, 1.0};
        for (const fifa::Optimizer opt : {fifa::Optimizer::sgd, fifa::Optimizer::adam}) {
            for (double v : grid) {
                RunSpec spec = base;
                spec.method = "fifa";
                spec.fifa_cfg.optimizer = opt;
                spec.fifa_cfg.learning_rate = v;
                std::ostringstream label;
                label << fifa::optimizer_name(opt) << ",lr=" << v;
                spec.point = label.str();
                points.push_back(spec);
            }
        }
    } else if (opts.scenario == "init-ablation") {
        for (const char* method : {"exact", "fifa"}) {
            for (const fifa::InitMode mode : {fifa::InitMode::from_model, fifa::InitMode::equal}) {
                RunSpec spec = base;
                spec.method = method;
                spec.init_mode = mode;
                spec.point = std::string(method) + "," +
                             (mode == fifa::InitMode::equal ? "equal" : "from-model");
                points.push_back(spec);
            }
        }
    } else if (opts.scenario == "speedup-head-to-head") {
        RunSpec exact_spec = base;
        exact_spec.method = "exact";
        exact_spec.point = "exact";
        points.push_back(exact_spec);
        RunSpec fifa_spec = base;
        fifa_spec.method = "fifa";
        fifa_spec.point = "fifa";
        points.push_back(fifa_spec);
    } else {
        throw error(errc::validation, "unknown scenario: " + opts.scenario);
    }
    return points;
}

}  // namespace

void run_bench(const BenchOptions& opts) {
    if (opts.repeats < 1) throw error(errc::validation, "repeats must be >= 1");
    const std::vector<Instance> instances = load_instances(opts.instances_dir);

    LengthModel model;
    if (!opts.length_model_path.empty()) {
        model = data::load_length_model(opts.length_model_path);
    } else {
        std::vector<Segmentation> labels;
        labels.reserve(instances.size());
        for (const Instance& inst : instances) labels.push_back(inst.gt);
        model = data::estimate_length_model(labels, instances.front().probs.num_classes,
                                            LengthFamily::poisson);
    }

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (opts.output_path != "-") {
        file.open(opts.output_path);
        if (!file) throw error(errc::io, "cannot open " + opts.output_path + " for writing");
        os = &file;
    }
    os->precision(10);
    *os << kCsvHeader << '\n';

    const std::vector<RunSpec> points = scenario_points(opts);
    std::vector<double> median_decode_total(points.size(), 0.0);

    for (std::size_t p = 0; p < points.size(); ++p) {
        const RunSpec& spec = points[p];
        std::vector<RowStats> repeats;
        for (int rep = 0; rep < opts.repeats; ++rep) {
            RowStats stats =
                run_point(spec, instances, model, opts.background, opts.threads);
            Row row{&opts, &spec, "run", rep, stats, ""};
            row.write(*os);
            repeats.push_back(std::move(stats));
        }

        // median summary over the repeats
        RowStats median;
        median.instances = repeats.front().instances;
        for (const RowStats& r : repeats) median.errors = std::max(median.errors, r.errors);
        const auto med = [&](auto getter) {
            std::vector<double> values;
            for (const RowStats& r : repeats) values.push_back(getter(r));
            return median_of(std::move(values));
        };
        median.mean.mof = med([](const RowStats& r) { return r.mean.mof; });
        median.mean.mof_bg = med([](const RowStats& r) { return r.mean.mof_bg; });
        median.mean.iou = med([](const RowStats& r) { return r.mean.iou; });
        median.mean.iod = med([](const RowStats& r) { return r.mean.iod; });
        median.mean.edit = med([](const RowStats& r) { return r.mean.edit; });
        median.mean.f1_10 = med([](const RowStats& r) { return r.mean.f1_10; });
        median.mean.f1_25 = med([](const RowStats& r) { return r.mean.f1_25; });
        median.mean.f1_50 = med([](const RowStats& r) { return r.mean.f1_50; });
        median.decode_seconds_total =
            med([](const RowStats& r) { return r.decode_seconds_total; });
        median_decode_total[p] = median.decode_seconds_total;

        std::string note;
        if (opts.scenario == "speedup-head-to-head" && spec.method == "fifa" && p > 0 &&
            median.decode_seconds_total > 0.0) {
            std::ostringstream ss;
            ss << "speedup_vs_exact=" << median_decode_total[0] / median.decode_seconds_total;
            note = ss.str();
        }
        Row row{&opts, &spec, "median", -1, median, note};
        row.write(*os);
    }
    os->flush();
}

}  // namespace taseg::bench
