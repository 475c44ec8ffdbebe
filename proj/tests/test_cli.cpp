#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("taseg-cli-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RunResult run(const std::string& args, const std::string& stderr_path = "") {
    std::string command = std::string(TASEG_CLI) + " " + args;
    command += stderr_path.empty() ? " 2>/dev/null" : " 2>" + stderr_path;
    RunResult result;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buffer[4096];
    std::size_t got = 0;
    while ((got = fread(buffer, 1, sizeof(buffer), pipe)) > 0) result.out.append(buffer, got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// split a CSV line honoring double quotes
std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

void make_instances(const TempDir& dir, const std::string& sub, const std::string& extra = "") {
    const RunResult synth = run("synth --frames 60 --segments 3 --classes 4 --noise-temp 0 "
                                "--confusion-prob 0 --dirichlet-alpha 50 --seed 11 --count 3 "
                                "--out-dir " +
                                dir.file(sub) + " " + extra);
    REQUIRE(synth.exit_code == 0);
}

}  // namespace

TEST_CASE("missing input files fail with a machine-readable io error") {
    TempDir dir;
    const RunResult result = run("infer --probs nope.segp --transcript t.txt --length-model m.json",
                                 dir.file("err.json"));
    CHECK(result.exit_code == 2);
    const json err = json::parse(slurp(dir.file("err.json")));
    CHECK(err["error"]["kind"] == "io");
}

TEST_CASE("usage errors exit with code 2") {
    TempDir dir;
    const RunResult result = run("infer --no-such-flag", dir.file("err.json"));
    CHECK(result.exit_code == 2);
    const json err = json::parse(slurp(dir.file("err.json")));
    CHECK(err["error"]["kind"] == "usage");
    CHECK(run("bogus-subcommand", dir.file("err2.json")).exit_code == 2);
}

TEST_CASE("synthetic generation is deterministic and loadable") {
    TempDir dir;
    make_instances(dir, "a");
    make_instances(dir, "b");
    for (const char* name : {"inst_0000.probs.segp", "inst_0001.gt.txt", "inst_0002.transcript.txt"}) {
        CHECK(slurp(dir.file("a/" + std::string(name))) ==
              slurp(dir.file("b/" + std::string(name))));
    }
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir.file("a"))) {
        (void)entry;
        ++files;
    }
    CHECK(files == 9);  // three files per instance

    const RunResult infeasible =
        run("synth --frames 3 --segments 5 --out-dir " + dir.file("c"), dir.file("err.json"));
    CHECK(infeasible.exit_code == 2);
}

TEST_CASE("length models estimate from generated labels") {
    TempDir dir;
    make_instances(dir, "train");
    const RunResult estimate = run("estimate-lengths --dir " + dir.file("train") +
                                   " --num-classes 4 --output " + dir.file("model.json"));
    CHECK(estimate.exit_code == 0);
    const json model = json::parse(slurp(dir.file("model.json")));
    CHECK(model["family"] == "poisson");
    CHECK(model["expected"].size() == 4);
}

TEST_CASE("noiseless decodes agree between the two methods") {
    TempDir dir;
    make_instances(dir, "data");
    REQUIRE(run("estimate-lengths --dir " + dir.file("data") + " --num-classes 4 --output " +
                dir.file("model.json"))
                .exit_code == 0);

    // a converged gradient run settles mid-way between the boundary frames
    // and rounds to the same labels the dynamic program picks
    const RunResult infer = run(
        "infer --probs " + dir.file("data/inst_0000.probs.segp") + " --transcript " +
        dir.file("data/inst_0000.transcript.txt") + " --length-model " + dir.file("model.json") +
        " --method both --steps 200 --output -");
    REQUIRE(infer.exit_code == 0);
    const json out = json::parse(infer.out);
    CHECK(out["results"]["exact"]["frame_labels"] == out["results"]["fifa"]["frame_labels"]);

    // ground truth is recovered by both
    std::vector<int> gt;
    {
        std::ifstream in(dir.file("data/inst_0000.gt.txt"));
        int label;
        while (in >> label) gt.push_back(label);
    }
    CHECK(out["results"]["exact"]["frame_labels"].get<std::vector<int>>() == gt);

    // at the default step count the two stay within a frame per boundary
    const RunResult defaults = run(
        "infer --probs " + dir.file("data/inst_0000.probs.segp") + " --transcript " +
        dir.file("data/inst_0000.transcript.txt") + " --length-model " + dir.file("model.json") +
        " --method both --output -");
    REQUIRE(defaults.exit_code == 0);
    const json out2 = json::parse(defaults.out);
    const auto exact_labels = out2["results"]["exact"]["frame_labels"].get<std::vector<int>>();
    const auto fifa_labels = out2["results"]["fifa"]["frame_labels"].get<std::vector<int>>();
    int agree = 0;
    for (std::size_t t = 0; t < exact_labels.size(); ++t) {
        if (exact_labels[t] == fifa_labels[t]) ++agree;
    }
    CHECK(agree >= static_cast<int>(0.95 * exact_labels.size()));
}

TEST_CASE("zero steps return the initialization segmentation") {
    TempDir dir;
    make_instances(dir, "data");
    REQUIRE(run("estimate-lengths --dir " + dir.file("data") + " --num-classes 4 --output " +
                dir.file("model.json"))
                .exit_code == 0);
    const RunResult infer = run(
        "infer --probs " + dir.file("data/inst_0000.probs.segp") + " --transcript " +
        dir.file("data/inst_0000.transcript.txt") + " --length-model " + dir.file("model.json") +
        " --method fifa --init equal --steps 0 --trace-csv " + dir.file("trace.csv"));
    REQUIRE(infer.exit_code == 0);
    const json out = json::parse(infer.out);
    CHECK(out["results"]["fifa"]["lengths"] == std::vector<int>{20, 20, 20});

    std::istringstream trace(slurp(dir.file("trace.csv")));
    std::string line;
    std::getline(trace, line);
    CHECK(line == "step,total,e_obs,e_len,len_1,len_2,len_3");
    int rows = 0;
    while (std::getline(trace, line)) ++rows;
    CHECK(rows == 1);
}

TEST_CASE("json config files feed defaults that flags override") {
    TempDir dir;
    make_instances(dir, "data");
    REQUIRE(run("estimate-lengths --dir " + dir.file("data") + " --num-classes 4 --output " +
                dir.file("model.json"))
                .exit_code == 0);
    {
        std::ofstream cfg(dir.file("cfg.json"));
        cfg << R"({"steps": 3, "init": "equal"})";
    }
    const std::string base = "infer --probs " + dir.file("data/inst_0000.probs.segp") +
                             " --transcript " + dir.file("data/inst_0000.transcript.txt") +
                             " --length-model " + dir.file("model.json") +
                             " --method fifa --config " + dir.file("cfg.json") + " --trace-csv " +
                             dir.file("trace.csv");

    REQUIRE(run(base).exit_code == 0);
    std::istringstream trace(slurp(dir.file("trace.csv")));
    std::string line;
    int rows = -1;  // don't count the header
    while (std::getline(trace, line)) ++rows;
    CHECK(rows == 4);  // 3 steps from the config, plus the initial state

    REQUIRE(run(base + " --steps 1").exit_code == 0);
    std::istringstream trace2(slurp(dir.file("trace.csv")));
    rows = -1;
    while (std::getline(trace2, line)) ++rows;
    CHECK(rows == 2);  // the explicit flag wins
}

TEST_CASE("evaluation reports the fixed metric keys") {
    TempDir dir;
    make_instances(dir, "data");
    const std::string gt = dir.file("data/inst_0000.gt.txt");
    const RunResult self = run("eval --pred " + gt + " --gt " + gt);
    REQUIRE(self.exit_code == 0);
    const json report = json::parse(self.out);
    for (const char* key : {"mof", "mof_bg", "iou", "iod", "edit", "f1_10", "f1_25", "f1_50"}) {
        CHECK(report[key] == 1.0);
    }

    {
        std::ofstream pred(dir.file("wrong.txt"));
        std::ifstream in(gt);
        int label;
        while (in >> label) pred << (label == 3 ? 2 : 3) << '\n';
    }
    const RunResult wrong = run("eval --pred " + dir.file("wrong.txt") + " --gt " + gt);
    REQUIRE(wrong.exit_code == 0);
    CHECK(json::parse(wrong.out)["mof"] == 0.0);

    {
        std::ofstream pred(dir.file("short.txt"));
        pred << "0\n1\n";
    }
    CHECK(run("eval --pred " + dir.file("short.txt") + " --gt " + gt, dir.file("err.json"))
              .exit_code == 2);

    // four-frame worked example with a background class
    {
        std::ofstream g(dir.file("gt4.txt"));
        g << "0\n0\n1\n9\n";
        std::ofstream p(dir.file("pred4.txt"));
        p << "0\n1\n1\n9\n";
    }
    const RunResult worked =
        run("eval --pred " + dir.file("pred4.txt") + " --gt " + dir.file("gt4.txt") +
            " --background 9");
    REQUIRE(worked.exit_code == 0);
    const json worked_report = json::parse(worked.out);
    CHECK(worked_report["mof"] == 0.75);
    CHECK(std::abs(worked_report["mof_bg"].get<double>() - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("bench emits a stable csv schema") {
    TempDir dir;
    make_instances(dir, "data");
    const std::string out_csv = dir.file("bench.csv");
    const RunResult bench = run("bench --scenario steps-sweep --grid 0,2,5 --instances " +
                                dir.file("data") + " --repeats 2 --out " + out_csv);
    REQUIRE(bench.exit_code == 0);

    std::istringstream csv(slurp(out_csv));
    std::string header;
    REQUIRE(static_cast<bool>(std::getline(csv, header)));
    const std::vector<std::string> columns = csv_fields(header);
    CHECK(columns.size() == 30);
    CHECK(columns.front() == "scenario");
    CHECK(columns.back() == "note");

    std::string line;
    int runs = 0;
    int medians = 0;
    std::vector<std::string> first_run_metrics;
    while (std::getline(csv, line)) {
        const std::vector<std::string> fields = csv_fields(line);
        REQUIRE(fields.size() == columns.size());
        CHECK(fields[18] == "ok");
        // metric columns parse as numbers in [0, 1]
        for (int i = 19; i <= 26; ++i) {
            const double value = std::stod(fields[i]);
            CHECK(value >= 0.0);
            CHECK(value <= 1.0);
        }
        if (fields[2] == "run") ++runs;
        if (fields[2] == "median") ++medians;
        // repeats of a deterministic decode yield identical metrics
        if (fields[1] == "steps=2" && fields[2] == "run") {
            std::vector<std::string> metrics(fields.begin() + 19, fields.begin() + 27);
            if (first_run_metrics.empty()) {
                first_run_metrics = metrics;
            } else {
                CHECK(first_run_metrics == metrics);
            }
        }
    }
    CHECK(runs == 8);     // (3 grid points + exact reference) x 2 repeats
    CHECK(medians == 4);  // one summary per point
}

TEST_CASE("diverging optimization exits with the runtime code") {
    TempDir dir;
    make_instances(dir, "data");
    REQUIRE(run("estimate-lengths --dir " + dir.file("data") + " --num-classes 4 --output " +
                dir.file("model.json"))
                .exit_code == 0);
    const RunResult diverged = run(
        "infer --probs " + dir.file("data/inst_0000.probs.segp") + " --transcript " +
            dir.file("data/inst_0000.transcript.txt") + " --length-model " +
            dir.file("model.json") + " --method fifa --optimizer sgd --lr 1e6",
        dir.file("err.json"));
    CHECK(diverged.exit_code == 3);
    CHECK(json::parse(slurp(dir.file("err.json")))["error"]["kind"] == "runtime");
}

TEST_CASE("bench records per-instance failures and keeps going") {
    TempDir dir;
    make_instances(dir, "data");
    {
        // a transcript longer than the video makes this instance infeasible
        std::ofstream bad(dir.file("data/inst_0001.transcript.txt"));
        for (int i = 0; i < 61; ++i) bad << (i % 4) << ' ';
        bad << '\n';
    }
    const RunResult bench = run("bench --scenario speedup-head-to-head --instances " +
                                dir.file("data") + " --out -");
    REQUIRE(bench.exit_code == 0);
    std::istringstream csv(bench.out);
    std::string line;
    std::getline(csv, line);  // header
    int partial_rows = 0;
    while (std::getline(csv, line)) {
        const std::vector<std::string> fields = csv_fields(line);
        if (fields[18] == "partial") ++partial_rows;
        CHECK(std::stoi(fields[17]) == 1);  // one failing instance
    }
    CHECK(partial_rows >= 2);
}

TEST_CASE("csv-format instances work end to end") {
    TempDir dir;
    make_instances(dir, "data", "--format csv");
    const RunResult infer = run(
        "infer --probs " + dir.file("data/inst_0000.probs.csv") + " --transcript " +
        dir.file("data/inst_0000.transcript.txt") + " --length-model missing.json",
        dir.file("err.json"));
    CHECK(infer.exit_code == 2);  // model missing, but the csv parsed first

    const RunResult bench = run("bench --scenario steps-sweep --grid 0 --instances " +
                                dir.file("data") + " --out -");
    CHECK(bench.exit_code == 0);
}

TEST_CASE("speedup scenario reports the ratio") {
    TempDir dir;
    make_instances(dir, "data");
    const RunResult bench = run("bench --scenario speedup-head-to-head --instances " +
                                dir.file("data") + " --out -");
    REQUIRE(bench.exit_code == 0);
    CHECK(bench.out.find("speedup_vs_exact=") != std::string::npos);
}
