// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "derail/eval.hpp"
#include "derail/forecast.hpp"
#include "derail/ingest.hpp"

using namespace derail;
namespace fs = std::filesystem;

namespace {

const std::string kTool = TOOL_PATH;
const std::string kFixtures = FIXTURES_DIR;

struct CliWorkspace {
    fs::path dir;

    CliWorkspace() {
        dir = fs::temp_directory_path() / "derailcast_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }

    std::string path(const std::string &name) const { return (dir / name).string(); }
};

int run(const std::string &args) {
    const std::string cmd = kTool + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const std::string &path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// One shared pipeline workspace; commands build on each other in order.
CliWorkspace &ws() {
    static CliWorkspace w;
    return w;
}

} // namespace

TEST_CASE("cli: full desk-scale pipeline runs clean") {
    auto &w = ws();
    CHECK(run("synth --output-dir " + w.path("corpus")) == 0);
    CHECK(fs::exists(w.path("corpus/train.jsonl")));
    CHECK(fs::exists(w.path("corpus/manifest.json")));

    CHECK(run("train-generator --input " + w.path("corpus/train.jsonl") + " --model-out " +
              w.path("bigram.json") + " --scheme-file " + w.path("corpus/scheme.json")) == 0);

    CHECK(run("train-classifier --input " + w.path("corpus/train.jsonl") + " --generator " +
              w.path("bigram.json") + " --model-out " + w.path("bow.json") + " --scheme-file " +
              w.path("corpus/scheme.json") + " --gen-config " + w.path("corpus/gen_params.json") +
              " --l 2 --dump-augmented " + w.path("augmented.jsonl")) == 0);

    // 1 real + 2 synthetic examples per training conversation.
    const auto train = load_canonical_jsonl(w.path("corpus/train.jsonl"));
    std::ifstream augmented(w.path("augmented.jsonl"));
    int lines = 0;
    std::string line;
    while (std::getline(augmented, line))
        if (!line.empty())
            ++lines;
    CHECK(lines == static_cast<int>(train.conversations.size()) * 3);

    CHECK(run("forecast --input " + w.path("corpus/test.jsonl") + " --generator " +
              w.path("bigram.json") + " --classifier " + w.path("bow.json") + " --output " +
              w.path("batch.jsonl") + " --scheme-file " + w.path("corpus/scheme.json") +
              " --gen-config " + w.path("corpus/gen_params.json")) == 0);

    CHECK(run("evaluate --input " + w.path("batch.jsonl") + " --output " + w.path("report.json") +
              " --markdown " + w.path("report.md")) == 0);

    const auto report = read_json(w.path("report.json"));
    CHECK(report.at("metrics").at("accuracy").get<double>() >= 0.9);
    CHECK(report.at("metrics").at("n").get<int>() == 60);
}

TEST_CASE("cli: evaluate output matches compute_metrics on the batch file") {
    auto &w = ws();
    const auto entries = load_forecast_batch(w.path("batch.jsonl"));
    const auto metrics = metrics_from_batch(entries);
    const auto report = read_json(w.path("report.json"));
    CHECK(report.at("metrics").at("accuracy").get<double>() == doctest::Approx(metrics.accuracy));
    CHECK(report.at("metrics").at("tp").get<int>() == metrics.tp);
    CHECK(report.at("metrics").at("tn").get<int>() == metrics.tn);

    const std::string md = read_file(w.path("report.md"));
    CHECK(md.find("| Method | Acc. | Prec. | Rec. | F1 |") != std::string::npos);
}

TEST_CASE("cli: replaying the forecast reproduces byte-identical output") {
    auto &w = ws();
    CHECK(run("forecast --input " + w.path("corpus/test.jsonl") + " --generator " +
              w.path("bigram.json") + " --classifier " + w.path("bow.json") + " --output " +
              w.path("batch_replay.jsonl") + " --scheme-file " + w.path("corpus/scheme.json") +
              " --gen-config " + w.path("corpus/gen_params.json")) == 0);
    CHECK(read_file(w.path("batch.jsonl")) == read_file(w.path("batch_replay.jsonl")));
    // The manifests agree on the input digests.
    const auto m1 = read_json(w.path("batch.jsonl.manifest.json"));
    const auto m2 = read_json(w.path("batch_replay.jsonl.manifest.json"));
    CHECK(m1.at("inputs") == m2.at("inputs"));
    CHECK(m1.at("config") == m2.at("config"));
}

TEST_CASE("cli: ingest keeps official cga_wiki splits") {
    auto &w = ws();
    CHECK(run("ingest --dataset cga_wiki --input " + kFixtures + "/cga_wiki_sample.jsonl" +
              " --output-dir " + w.path("cga")) == 0);
    CHECK(load_canonical_jsonl(w.path("cga/train.jsonl")).conversations.size() == 16);
    CHECK(load_canonical_jsonl(w.path("cga/validation.jsonl")).conversations.size() == 2);
    CHECK(load_canonical_jsonl(w.path("cga/test.jsonl")).conversations.size() == 2);
    const auto report = read_json(w.path("cga/load_report.json"));
    CHECK(report.at("kept").get<int>() == 20);
}

TEST_CASE("cli: ingest applies the seeded 8:1:1 split to bnc") {
    auto &w = ws();
    CHECK(run("ingest --dataset bnc --input " + kFixtures + "/bnc_sample.jsonl" + " --output-dir " +
              w.path("bnc") + " --split-seed 7") == 0);
    CHECK(load_canonical_jsonl(w.path("bnc/train.jsonl")).conversations.size() == 16);
    CHECK(load_canonical_jsonl(w.path("bnc/validation.jsonl")).conversations.size() == 2);
    CHECK(load_canonical_jsonl(w.path("bnc/test.jsonl")).conversations.size() == 2);

    // Same seed reproduces the same membership.
    CHECK(run("ingest --dataset bnc --input " + kFixtures + "/bnc_sample.jsonl" + " --output-dir " +
              w.path("bnc2") + " --split-seed 7") == 0);
    CHECK(read_file(w.path("bnc/train.jsonl")) == read_file(w.path("bnc2/train.jsonl")));
}

TEST_CASE("cli: missing input exits 2, malformed input exits 1") {
    auto &w = ws();
    CHECK(run("ingest --dataset bnc --input " + w.path("does_not_exist.jsonl") + " --output-dir " +
              w.path("nowhere")) == 2);
    CHECK(run("forecast --input " + w.path("nope.jsonl") + " --generator " + w.path("bigram.json") +
              " --classifier " + w.path("bow.json") + " --output " + w.path("x.jsonl")) == 2);

    std::ofstream bad(w.path("bad.jsonl"));
    bad << "this is not json\n";
    bad.close();
    CHECK(run("ingest --dataset bnc --input " + w.path("bad.jsonl") + " --output-dir " +
              w.path("badout")) == 1);

    CHECK(run("definitely-not-a-command") == 2);
}

TEST_CASE("cli: ablate produces the vote and prefix grids") {
    auto &w = ws();
    CHECK(run("ablate --mode votes --input " + w.path("corpus/validation.jsonl") + " --generator " +
              w.path("bigram.json") + " --classifier " + w.path("bow.json") + " --output " +
              w.path("votes.json") + " --scheme-file " + w.path("corpus/scheme.json") +
              " --gen-config " + w.path("corpus/gen_params.json") + " --L-values 1,3,5") == 0);
    const auto votes = read_json(w.path("votes.json"));
    REQUIRE(votes.at("rows").size() == 3);
    CHECK(votes.at("rows")[0].at("L").get<int>() == 1);

    CHECK(run("ablate --mode prefix --input " + w.path("corpus/test.jsonl") + " --generator " +
              w.path("bigram.json") + " --classifier " + w.path("bow.json") + " --output " +
              w.path("prefix.json") + " --scheme-file " + w.path("corpus/scheme.json") +
              " --gen-config " + w.path("corpus/gen_params.json") + " --k-values 2,4") == 0);
    const auto prefix = read_json(w.path("prefix.json"));
    REQUIRE(prefix.at("rows").size() == 2);
    const double acc2 = prefix.at("rows")[0].at("metrics").at("accuracy").get<double>();
    const double acc4 = prefix.at("rows")[1].at("metrics").at("accuracy").get<double>();
    CHECK(acc4 >= acc2);
    CHECK(prefix.at("rows")[0].at("median_generated_turns").get<double>() >= 1.0);
}

TEST_CASE("cli: generate then diversity reports self-BLEU in [0,1]") {
    auto &w = ws();
    CHECK(run("generate --input " + w.path("corpus/test.jsonl") + " --generator " +
              w.path("bigram.json") + " --output " + w.path("conts.jsonl") + " --scheme-file " +
              w.path("corpus/scheme.json") + " --gen-config " + w.path("corpus/gen_params.json")) == 0);
    CHECK(run("diversity --input " + w.path("conts.jsonl") + " --output " + w.path("div.json")) == 0);
    const auto div = read_json(w.path("div.json"));
    const double mean = div.at("mean_self_bleu").get<double>();
    CHECK(mean >= 0.0);
    CHECK(mean <= 1.0);
    CHECK(div.at("sets").get<int>() == 60);
}

TEST_CASE("cli: annotate labels every turn and resume skips labeled conversations") {
    auto &w = ws();
    CHECK(run("annotate --input " + w.path("corpus/test.jsonl") + " --output " +
              w.path("annotated.jsonl")) == 0);
    const auto annotated = load_canonical_jsonl(w.path("annotated.jsonl"));
    for (const auto &c : annotated.conversations)
        for (const auto &t : c.turns)
            CHECK(t.orientation.has_value());
    const auto report = read_json(w.path("annotated.jsonl.report.json"));
    CHECK(report.at("failures").empty());

    CHECK(run("annotate --input " + w.path("annotated.jsonl") + " --output " +
              w.path("annotated2.jsonl") + " --resume") == 0);
    const auto resume_report = read_json(w.path("annotated2.jsonl.report.json"));
    CHECK(resume_report.at("skipped_already_labeled").get<int>() ==
          static_cast<int>(annotated.conversations.size()));
    CHECK(resume_report.at("annotated").get<int>() == 0);
}

TEST_CASE("cli: motivation reports the detection vs forecasting gap") {
    auto &w = ws();
    CHECK(run("motivation --train " + w.path("corpus/train.jsonl") + " --test " +
              w.path("corpus/test.jsonl") + " --output " + w.path("motivation.json") +
              " --scheme-file " + w.path("corpus/scheme.json")) == 0);
    const auto report = read_json(w.path("motivation.json"));
    CHECK(report.at("all_turns").at("accuracy").get<double>() >= 0.95);
    CHECK(report.at("benign_prefix").at("accuracy").get<double>() <= 0.60);
}

TEST_CASE("cli: evaluate against a baseline emits the z-test and marker") {
    auto &w = ws();
    // Hand-built batches with known accuracies: 86/100 vs 50/100.
    auto write_batch = [&](const std::string &name, int correct) {
        std::ofstream out(w.path(name));
        for (int i = 0; i < 100; ++i) {
            const bool gold = i % 2 == 0;
            const bool final = i < correct ? gold : !gold;
            nlohmann::ordered_json row;
            row["conversation_id"] = "c" + std::to_string(i);
            row["probabilities"] = {final ? 0.9 : 0.1};
            row["votes"] = {final};
            row["final"] = final;
            row["gold"] = gold ? "derailed" : "benign";
            row["L"] = 1;
            row["seed"] = i;
            out << row.dump() << "\n";
        }
    };
    write_batch("strong.jsonl", 86);
    write_batch("weak.jsonl", 50);

    CHECK(run("evaluate --input " + w.path("strong.jsonl") + " --baseline " + w.path("weak.jsonl") +
              " --output " + w.path("ztest.json") + " --markdown " + w.path("ztest.md")) == 0);
    const auto report = read_json(w.path("ztest.json"));
    CHECK(report.at("metrics").at("accuracy").get<double>() == doctest::Approx(0.86));
    CHECK(report.at("baseline_metrics").at("accuracy").get<double>() == doctest::Approx(0.50));
    CHECK(report.at("z_test").at("significant").get<bool>());
    CHECK(report.at("z_test").at("p_value").get<double>() < 0.1);
    const std::string md = read_file(w.path("ztest.md"));
    CHECK(md.find("0.860 *") != std::string::npos); // significance marker on the accuracy cell
    CHECK(md.find("| baseline | 0.500 |") != std::string::npos);
}

TEST_CASE("cli: config file values are applied and flags override them") {
    auto &w = ws();
    std::ofstream cfg(w.path("run.toml"));
    cfg << "[synth]\noutput-dir = \"" << w.path("cfg_corpus") << "\"\ntrain-pairs = 5\n"
        << "validation-pairs = 2\ntest-pairs = 2\n";
    cfg.close();
    CHECK(run("--config " + w.path("run.toml") + " synth") == 0);
    CHECK(load_canonical_jsonl(w.path("cfg_corpus/train.jsonl")).conversations.size() == 10);

    // The command line wins over the config file.
    CHECK(run("--config " + w.path("run.toml") + " synth --output-dir " + w.path("cfg_corpus2") +
              " --train-pairs 7") == 0);
    CHECK(load_canonical_jsonl(w.path("cfg_corpus2/train.jsonl")).conversations.size() == 14);
}
