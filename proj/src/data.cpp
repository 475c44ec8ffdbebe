#include "taseg/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "taseg/core.hpp"

#include "json.hpp"

namespace taseg::data {

namespace {

std::ifstream open_in(const std::string& path, std::ios_base::openmode mode = std::ios_base::in) {
    std::ifstream in(path, mode);
    if (!in) throw error(errc::io, "cannot open " + path + " for reading");
    return in;
}

std::ofstream open_out(const std::string& path, std::ios_base::openmode mode = std::ios_base::out) {
    std::ofstream out(path, mode);
    if (!out) throw error(errc::io, "cannot open " + path + " for writing");
    return out;
}

int parse_int(const std::string& token, const std::string& path, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const int value = std::stoi(token, &pos);
        if (pos != token.size()) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        throw error(errc::parse,
                    path + ":" + std::to_string(line_no) + ": expected an integer, got '" +
                        token + "'");
    }
}

double parse_double(const std::string& token, const std::string& path, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double value = std::stod(token, &pos);
        if (pos != token.size()) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        throw error(errc::parse,
                    path + ":" + std::to_string(line_no) + ": expected a number, got '" + token +
                        "'");
    }
}

constexpr char kPackedMagic[4] = {'S', 'E', 'G', 'P'};

}  // namespace

std::vector<std::string> load_class_names(const std::string& path) {
    std::ifstream in = open_in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": " + e.what());
    }
    std::vector<std::string> names;
    try {
        names = j.get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": expected a JSON array of strings");
    }
    if (names.empty()) throw error(errc::validation, path + ": no class names");
    return names;
}

void save_class_names(const std::string& path, const std::vector<std::string>& names) {
    std::ofstream out = open_out(path);
    out << nlohmann::json(names).dump() << '\n';
    if (!out) throw error(errc::io, "failed writing " + path);
}

namespace {

std::vector<std::string> sidecar_names(const std::string& probs_path, std::size_t n_classes) {
    const std::string sidecar = probs_path + ".names.json";
    if (!std::ifstream(sidecar)) return {};
    std::vector<std::string> names = load_class_names(sidecar);
    if (names.size() != n_classes) {
        throw error(errc::validation,
                    sidecar + ": " + std::to_string(names.size()) + " names for " +
                        std::to_string(n_classes) + " classes");
    }
    return names;
}

}  // namespace

ProbFormat prob_format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return ProbFormat::csv;
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".segp") == 0) {
        return ProbFormat::packed_f32;
    }
    throw error(errc::validation, "cannot infer probability format from path: " + path);
}

ProbMatrix load_probs(const std::string& path, ProbFormat format, double floor) {
    if (format == ProbFormat::csv) {
        std::ifstream in = open_in(path);
        std::vector<double> values;
        std::size_t cols = 0;
        std::size_t rows = 0;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string token;
            std::size_t row_cols = 0;
            while (std::getline(ss, token, ',')) {
                values.push_back(parse_double(token, path, line_no));
                ++row_cols;
            }
            if (cols == 0) {
                cols = row_cols;
            } else if (row_cols != cols) {
                throw error(errc::parse,
                            path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(cols) + " columns, got " +
                                std::to_string(row_cols));
            }
            ++rows;
        }
        if (rows == 0) throw error(errc::parse, path + ": no probability rows");
        Matrix raw(rows, cols);
        raw.v = std::move(values);
        return ProbMatrix::from_rows(std::move(raw), floor, sidecar_names(path, cols));
    }

    std::ifstream in = open_in(path, std::ios_base::in | std::ios_base::binary);
    char magic[4];
    std::uint32_t dims[2];
    if (!in.read(magic, 4) || std::memcmp(magic, kPackedMagic, 4) != 0) {
        throw error(errc::parse, path + ": missing SEGP magic");
    }
    if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims))) {
        throw error(errc::parse, path + ": truncated header");
    }
    const std::size_t rows = dims[0];
    const std::size_t cols = dims[1];
    if (rows < 1 || cols < 1 || rows * cols > (1ull << 32)) {
        throw error(errc::parse, path + ": implausible dimensions in header");
    }
    std::vector<float> buf(rows * cols);
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
        throw error(errc::parse, path + ": truncated payload");
    }
    Matrix raw(rows, cols);
    for (std::size_t i = 0; i < buf.size(); ++i) raw.v[i] = static_cast<double>(buf[i]);
    return ProbMatrix::from_rows(std::move(raw), floor, sidecar_names(path, cols));
}

void save_probs(const std::string& path, const ProbMatrix& probs, ProbFormat format) {
    if (format == ProbFormat::csv) {
        std::ofstream out = open_out(path);
        out.precision(17);
        for (int t = 0; t < probs.num_frames; ++t) {
            for (int c = 0; c < probs.num_classes; ++c) {
                if (c > 0) out << ',';
                out << probs.at(t, c);
            }
            out << '\n';
        }
        return;
    }
    std::ofstream out = open_out(path, std::ios_base::out | std::ios_base::binary);
    out.write(kPackedMagic, 4);
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(probs.num_frames),
                                   static_cast<std::uint32_t>(probs.num_classes)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> buf(probs.probs.v.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(probs.probs.v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw error(errc::io, "failed writing " + path);
}

Segmentation load_segmentation(const std::string& path) {
    std::ifstream in = open_in(path);
    Segmentation seg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        seg.push_back(parse_int(line, path, line_no));
    }
    if (seg.empty()) throw error(errc::parse, path + ": no frame labels");
    return seg;
}

void save_segmentation(const std::string& path, const Segmentation& seg) {
    std::ofstream out = open_out(path);
    for (int label : seg) out << label << '\n';
    if (!out) throw error(errc::io, "failed writing " + path);
}

Transcript load_transcript(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw error(errc::parse, path + ": empty transcript");
    std::stringstream ss(line);
    Transcript transcript;
    std::string token;
    while (ss >> token) transcript.push_back(parse_int(token, path, 1));
    if (transcript.empty()) throw error(errc::parse, path + ": empty transcript");
    return transcript;
}

void save_transcript(const std::string& path, const Transcript& transcript) {
    std::ofstream out = open_out(path);
    for (std::size_t n = 0; n < transcript.size(); ++n) {
        if (n > 0) out << ' ';
        out << transcript[n];
    }
    out << '\n';
    if (!out) throw error(errc::io, "failed writing " + path);
}

LengthModel load_length_model(const std::string& path) {
    std::ifstream in = open_in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": " + e.what());
    }
    LengthModel model;
    try {
        model.family = length_family_from_name(j.at("family").get<std::string>());
        model.expected = j.at("expected").get<std::vector<double>>();
        if (j.contains("scale")) {
            model.scale = j.at("scale").get<std::vector<double>>();
        } else {
            model.scale.assign(model.expected.size(), 1.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": " + e.what());
    }
    model.validate();
    return model;
}

void save_length_model(const std::string& path, const LengthModel& model) {
    model.validate();
    nlohmann::json j;
    j["family"] = length_family_name(model.family);
    j["expected"] = model.expected;
    j["scale"] = model.scale;
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw error(errc::io, "failed writing " + path);
}

void save_metric_report(const std::string& path, const metrics::MetricReport& report) {
    std::ofstream out = open_out(path);
    out << report.to_json() << '\n';
    if (!out) throw error(errc::io, "failed writing " + path);
}

metrics::MetricReport load_metric_report(const std::string& path) {
    std::ifstream in = open_in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": " + e.what());
    }
    metrics::MetricReport report;
    try {
        report.mof = j.at("mof").get<double>();
        report.mof_bg = j.at("mof_bg").get<double>();
        report.iou = j.at("iou").get<double>();
        report.iod = j.at("iod").get<double>();
        report.edit = j.at("edit").get<double>();
        report.f1_10 = j.at("f1_10").get<double>();
        report.f1_25 = j.at("f1_25").get<double>();
        report.f1_50 = j.at("f1_50").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::parse, path + ": " + e.what());
    }
    return report;
}

LengthModel estimate_length_model(const std::vector<Segmentation>& train, int num_classes,
                                  LengthFamily family) {
    if (num_classes < 1) throw error(errc::validation, "class count must be >= 1");
    std::vector<double> sum(num_classes, 0.0);
    std::vector<int> count(num_classes, 0);
    for (const Segmentation& seg : train) {
        const auto [labels, lengths] = to_segmentwise(seg);
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] < 0 || labels[n] >= num_classes) {
                throw error(errc::validation,
                            "training label " + std::to_string(labels[n]) + " outside [0, " +
                                std::to_string(num_classes) + ")");
            }
            sum[labels[n]] += lengths[n];
            count[labels[n]] += 1;
        }
    }
    std::string missing;
    for (int c = 0; c < num_classes; ++c) {
        if (count[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    }
    if (!missing.empty()) {
        throw error(errc::validation, "classes never seen in training: " + missing);
    }
    LengthModel model;
    model.family = family;
    model.expected.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) model.expected[c] = sum[c] / count[c];
    model.scale.assign(num_classes, 1.0);
    return model;
}

void SynthConfig::validate() const {
    if (num_segments < 1) throw error(errc::validation, "segment count must be >= 1");
    if (num_frames < num_segments) {
        throw error(errc::infeasible,
                    std::to_string(num_segments) + " segments cannot fit in " +
                        std::to_string(num_frames) + " frames");
    }
    if (num_classes < 2) throw error(errc::validation, "class count must be >= 2");
    if (noise_temp < 0.0) throw error(errc::validation, "noise temperature must be >= 0");
    if (confusion_prob < 0.0 || confusion_prob > 1.0) {
        throw error(errc::validation, "confusion probability must be in [0, 1]");
    }
    if (!(dirichlet_alpha > 0.0)) {
        throw error(errc::validation, "dirichlet concentration must be positive");
    }
    if (class_length_spread < 0.0 || class_length_spread >= 1.0) {
        throw error(errc::validation, "class length spread must be in [0, 1)");
    }
}

ProblemInstance synth_instance(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    // Transcript without adjacent repeats.
    Transcript transcript(cfg.num_segments);
    std::uniform_int_distribution<int> any_class(0, cfg.num_classes - 1);
    std::uniform_int_distribution<int> other_class(0, cfg.num_classes - 2);
    transcript[0] = any_class(rng);
    for (int n = 1; n < cfg.num_segments; ++n) {
        int label = other_class(rng);
        if (label >= transcript[n - 1]) ++label;
        transcript[n] = label;
    }

    // Dirichlet-proportional composition of the video, optionally skewed so
    // the expected share grows with the class index.
    std::gamma_distribution<double> gamma(cfg.dirichlet_alpha, 1.0 / cfg.dirichlet_alpha);
    std::vector<double> raw(cfg.num_segments);
    for (int n = 0; n < cfg.num_segments; ++n) {
        const double class_weight =
            cfg.num_classes > 1
                ? 1.0 + cfg.class_length_spread *
                            (2.0 * transcript[n] / (cfg.num_classes - 1.0) - 1.0)
                : 1.0;
        raw[n] = std::max(class_weight * gamma(rng), 1e-9);
    }
    std::vector<double> real_lengths(cfg.num_segments);
    for (int n = 0; n < cfg.num_segments; ++n) {
        real_lengths[n] = raw[n] * static_cast<double>(cfg.num_frames);
    }
    const std::vector<int> lengths = round_lengths(real_lengths, cfg.num_frames);
    const Segmentation gt = to_framewise(transcript, lengths);

    // Probability rows: softened one-hot plus occasional argmax corruption.
    Matrix rows(static_cast<std::size_t>(cfg.num_frames),
                static_cast<std::size_t>(cfg.num_classes));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < cfg.num_frames; ++t) {
        double* row = rows.row(t);
        const int label = gt[t];
        if (cfg.noise_temp == 0.0) {
            for (int c = 0; c < cfg.num_classes; ++c) row[c] = (c == label) ? 1.0 : 0.0;
        } else {
            const double hot = std::exp(1.0 / cfg.noise_temp);
            const double norm = hot + (cfg.num_classes - 1);
            for (int c = 0; c < cfg.num_classes; ++c) row[c] = (c == label ? hot : 1.0) / norm;
        }
        if (cfg.confusion_prob > 0.0 && unit(rng) < cfg.confusion_prob) {
            int swap_to = other_class(rng);
            if (swap_to >= label) ++swap_to;
            std::swap(row[label], row[swap_to]);
        }
    }

    ProblemInstance out;
    out.probs = ProbMatrix::from_rows(std::move(rows));
    out.gt = gt;
    out.transcript = transcript;
    out.video_id = "synth-" + std::to_string(cfg.seed);
    return out;
}

}  // namespace taseg::data
