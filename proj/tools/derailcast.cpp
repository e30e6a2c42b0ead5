// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0
//
// derailcast: conversation derailment forecasting via sampled continuations
// and majority voting. Subcommands are thin wrappers over the library; every
// run writes a manifest (resolved config, seeds, input digests) so any
// artifact can be reproduced from its manifest.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/bleu.hpp"
#include "derail/classifier.hpp"
#include "derail/errors.hpp"
#include "derail/eval.hpp"
#include "derail/forecast.hpp"
#include "derail/generator.hpp"
#include "derail/ingest.hpp"
#include "derail/orientation.hpp"
#include "derail/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char *kVersion = "0.1.0";

uint64_t fnv1a64_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw derail::Error("cannot digest '" + path + "'");
    uint64_t hash = 1469598103934665603ull;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ull;
        }
        if (!in)
            break;
    }
    return hash;
}

std::string hex64(uint64_t value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

void write_json_file(const std::string &path, const ordered_json &j) {
    std::ofstream out(path);
    if (!out)
        throw derail::Error("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

void write_text_file(const std::string &path, const std::string &text) {
    std::ofstream out(path);
    if (!out)
        throw derail::Error("cannot write '" + path + "'");
    out << text;
}

void write_manifest(const std::string &path, const std::string &command, const ordered_json &config,
                    const std::vector<std::string> &inputs, const std::vector<std::string> &outputs) {
    ordered_json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = config;
    m["config_digest"] = hex64([&config] {
        uint64_t hash = 1469598103934665603ull;
        for (unsigned char c : config.dump()) {
            hash ^= c;
            hash *= 1099511628211ull;
        }
        return hash;
    }());
    ordered_json digests;
    for (const auto &input : inputs)
        digests[input] = hex64(fnv1a64_file(input));
    m["inputs"] = digests;
    m["outputs"] = outputs;
    write_json_file(path, m);
}

void require_input_file(const std::string &path) {
    if (!fs::exists(path))
        throw derail::ConfigError("input path does not exist: " + path);
}

struct SchemeOptions {
    std::string scheme_file;

    void attach(CLI::App *cmd) {
        cmd->add_option("--scheme-file", scheme_file,
                        "JSON serialization scheme (default: built-in scheme)");
    }

    derail::SerializationScheme resolve() const {
        if (scheme_file.empty())
            return {};
        require_input_file(scheme_file);
        std::ifstream in(scheme_file);
        nlohmann::json j;
        in >> j;
        return derail::SerializationScheme::from_json(j);
    }
};

struct GenParamsOptions {
    std::string config_file;
    double temperature = 1.0;
    double top_p = 0.9;
    double repetition_penalty = 1.05;
    int max_new_tokens = 256;

    void attach(CLI::App *cmd) {
        cmd->add_option("--gen-config", config_file, "JSON file with sampling parameters");
        cmd->add_option("--temperature", temperature, "sampling temperature");
        cmd->add_option("--top-p", top_p, "nucleus sampling mass");
        cmd->add_option("--repetition-penalty", repetition_penalty, "repetition penalty factor");
        cmd->add_option("--max-new-tokens", max_new_tokens, "generation length cap in tokens");
    }

    derail::GenerationParams resolve(const derail::SerializationScheme &scheme) const {
        derail::GenerationParams p;
        if (!config_file.empty()) {
            require_input_file(config_file);
            std::ifstream in(config_file);
            nlohmann::json j;
            in >> j;
            p = derail::GenerationParams::from_json(j);
        } else {
            p.temperature = temperature;
            p.top_p = top_p;
            p.repetition_penalty = repetition_penalty;
            p.max_new_tokens = max_new_tokens;
        }
        // Generation stops where the serialization ends conversations.
        p.stop_marker = scheme.end_marker;
        p.validate();
        return p;
    }
};

derail::Dataset load_dataset(const std::string &path) {
    require_input_file(path);
    return derail::load_canonical_jsonl(path);
}

std::unique_ptr<derail::GeneratorBackend> load_generator(const std::string &spec) {
    if (spec.rfind("server:", 0) == 0) {
        auto transport = std::make_shared<derail::SubprocessTransport>(spec.substr(7));
        return std::make_unique<derail::ServerGenerator>(std::move(transport));
    }
    require_input_file(spec);
    return std::make_unique<derail::BigramGenerator>(derail::BigramGenerator::load(spec));
}

std::unique_ptr<derail::ClassifierBackend> load_classifier(const std::string &spec) {
    if (spec.rfind("server:", 0) == 0) {
        auto transport = std::make_shared<derail::SubprocessTransport>(spec.substr(7));
        return std::make_unique<derail::ServerClassifier>(std::move(transport));
    }
    if (spec.rfind("keyword:", 0) == 0)
        return std::make_unique<derail::KeywordClassifier>(spec.substr(8));
    require_input_file(spec);
    return std::make_unique<derail::BowClassifier>(derail::BowClassifier::load(spec));
}

std::vector<int> parse_int_list(const std::string &csv, const char *what) {
    std::vector<int> values;
    std::string current;
    auto flush = [&]() {
        if (current.empty())
            return;
        try {
            values.push_back(std::stoi(current));
        } catch (...) {
            throw derail::ConfigError(std::string("bad ") + what + " list entry '" + current + "'");
        }
        current.clear();
    };
    for (char c : csv) {
        if (c == ',')
            flush();
        else if (!std::isspace(static_cast<unsigned char>(c)))
            current.push_back(c);
    }
    flush();
    if (values.empty())
        throw derail::ConfigError(std::string("empty ") + what + " list");
    return values;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"conversation derailment forecasting toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "declarative config file; command-line flags take precedence");
    app.set_version_flag("--version", kVersion);

    int exit_code = 0;
    auto guard = [&exit_code](auto fn) {
        return [fn, &exit_code]() {
            try {
                fn();
            } catch (const derail::ConfigError &e) {
                std::cerr << "config error: " << e.what() << "\n";
                exit_code = 2;
            } catch (const std::exception &e) {
                std::cerr << "error: " << e.what() << "\n";
                exit_code = 1;
            }
        };
    };

    // ---- synth ----
    auto *synth = app.add_subcommand("synth", "materialize the planted-signal synthetic corpus");
    struct {
        std::string output_dir;
        int train_pairs = 450, validation_pairs = 20, test_pairs = 30;
        uint64_t seed = 13;
    } synth_opt;
    synth->add_option("--output-dir", synth_opt.output_dir)->required();
    synth->add_option("--train-pairs", synth_opt.train_pairs);
    synth->add_option("--validation-pairs", synth_opt.validation_pairs);
    synth->add_option("--test-pairs", synth_opt.test_pairs);
    synth->add_option("--seed", synth_opt.seed);
    synth->callback(guard([&synth_opt]() {
        fs::create_directories(synth_opt.output_dir);
        derail::PlantedCorpusSpec spec;
        spec.train_pairs = synth_opt.train_pairs;
        spec.validation_pairs = synth_opt.validation_pairs;
        spec.test_pairs = synth_opt.test_pairs;
        spec.seed = synth_opt.seed;
        const auto corpus = derail::make_planted_corpus(spec);

        std::vector<std::string> outputs;
        for (const auto &[split, dataset] : corpus) {
            const std::string path =
                (fs::path(synth_opt.output_dir) / (std::string(derail::to_string(split)) + ".jsonl"))
                    .string();
            derail::save_canonical_jsonl(dataset, path);
            outputs.push_back(path);
        }
        const std::string scheme_path = (fs::path(synth_opt.output_dir) / "scheme.json").string();
        write_json_file(scheme_path, derail::planted_scheme().to_json());
        const std::string params_path = (fs::path(synth_opt.output_dir) / "gen_params.json").string();
        write_json_file(params_path, derail::planted_generation_params().to_json());
        outputs.push_back(scheme_path);
        outputs.push_back(params_path);

        ordered_json config;
        config["train_pairs"] = spec.train_pairs;
        config["validation_pairs"] = spec.validation_pairs;
        config["test_pairs"] = spec.test_pairs;
        config["seed"] = spec.seed;
        write_manifest((fs::path(synth_opt.output_dir) / "manifest.json").string(), "synth", config, {},
                       outputs);
        std::cerr << "synth: wrote " << outputs.size() << " files to " << synth_opt.output_dir << "\n";
    }));

    // ---- ingest ----
    auto *ingest = app.add_subcommand("ingest", "load a source corpus into canonical JSONL splits");
    struct {
        std::string dataset, input, output_dir;
        uint64_t split_seed = 7;
        std::string ratios = "0.8,0.1,0.1";
    } ingest_opt;
    ingest->add_option("--dataset", ingest_opt.dataset)
        ->required()
        ->check(CLI::IsMember({"cga_wiki", "bnc"}));
    ingest->add_option("--input", ingest_opt.input)->required();
    ingest->add_option("--output-dir", ingest_opt.output_dir)->required();
    ingest->add_option("--split-seed", ingest_opt.split_seed, "seed for the BNC 8:1:1 split");
    ingest->add_option("--ratios", ingest_opt.ratios, "train,validation,test ratios for BNC");
    ingest->callback(guard([&ingest_opt]() {
        require_input_file(ingest_opt.input);
        fs::create_directories(ingest_opt.output_dir);

        derail::LoadReport report;
        std::map<derail::Split, derail::Dataset> splits;
        ordered_json config;
        config["dataset"] = ingest_opt.dataset;
        if (ingest_opt.dataset == "cga_wiki") {
            // Official splits are preserved as-given.
            splits = derail::load_cga_wiki(ingest_opt.input, &report);
        } else {
            const auto unsplit = derail::load_bnc(ingest_opt.input, &report);
            std::vector<double> r;
            std::string cur;
            for (char c : ingest_opt.ratios + ",") {
                if (c == ',') {
                    if (!cur.empty())
                        r.push_back(std::stod(cur));
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
            if (r.size() != 3)
                throw derail::ConfigError("--ratios must have three comma-separated values");
            derail::SplitSpec spec;
            spec.train_ratio = r[0];
            spec.validation_ratio = r[1];
            spec.test_ratio = r[2];
            spec.seed = ingest_opt.split_seed;
            splits = derail::split_dataset(unsplit, spec);
            config["split_seed"] = ingest_opt.split_seed;
            config["ratios"] = ingest_opt.ratios;
        }

        std::vector<std::string> outputs;
        for (const auto &[split, dataset] : splits) {
            const std::string path =
                (fs::path(ingest_opt.output_dir) / (std::string(derail::to_string(split)) + ".jsonl"))
                    .string();
            derail::save_canonical_jsonl(dataset, path);
            outputs.push_back(path);
            std::cerr << "ingest: " << derail::to_string(split) << " = "
                      << dataset.conversations.size() << " conversations\n";
        }
        const std::string report_path = (fs::path(ingest_opt.output_dir) / "load_report.json").string();
        write_json_file(report_path, report.to_json());
        outputs.push_back(report_path);
        write_manifest((fs::path(ingest_opt.output_dir) / "manifest.json").string(), "ingest", config,
                       {ingest_opt.input}, outputs);
    }));

    // ---- annotate ----
    auto *annotate = app.add_subcommand("annotate", "fill social orientation labels via a backend");
    struct {
        std::string input, output, backend = "heuristic", template_path;
        int max_retries = 2;
        bool resume = false;
    } annotate_opt;
    annotate->add_option("--input", annotate_opt.input)->required();
    annotate->add_option("--output", annotate_opt.output)->required();
    annotate->add_option("--backend", annotate_opt.backend, "heuristic or server:<command>");
    annotate->add_option("--template", annotate_opt.template_path, "prompt template file");
    annotate->add_option("--max-retries", annotate_opt.max_retries);
    annotate->add_flag("--resume", annotate_opt.resume, "skip conversations already fully labeled");
    annotate->callback(guard([&annotate_opt]() {
        auto dataset = load_dataset(annotate_opt.input);
        const auto tmpl = annotate_opt.template_path.empty()
                              ? derail::AnnotationPromptTemplate::builtin()
                              : derail::AnnotationPromptTemplate::from_file(annotate_opt.template_path);

        std::unique_ptr<derail::AnnotationBackend> backend;
        if (annotate_opt.backend == "heuristic") {
            backend = std::make_unique<derail::HeuristicAnnotator>();
        } else if (annotate_opt.backend.rfind("server:", 0) == 0) {
            auto transport =
                std::make_shared<derail::SubprocessTransport>(annotate_opt.backend.substr(7));
            backend = std::make_unique<derail::ServerAnnotator>(std::move(transport));
        } else {
            throw derail::ConfigError("unknown annotation backend '" + annotate_opt.backend + "'");
        }

        ordered_json failures = ordered_json::array();
        int annotated = 0, skipped = 0;
        for (auto &c : dataset.conversations) {
            const bool fully_labeled = std::all_of(c.turns.begin(), c.turns.end(), [](const auto &t) {
                return t.orientation.has_value();
            });
            if (annotate_opt.resume && fully_labeled) {
                ++skipped;
                continue;
            }
            try {
                c = derail::annotate_conversation(*backend, tmpl, c, annotate_opt.max_retries);
                ++annotated;
            } catch (const derail::AnnotationError &e) {
                failures.push_back({{"conversation_id", c.id}, {"error", e.what()}});
            }
        }
        derail::save_canonical_jsonl(dataset, annotate_opt.output);

        ordered_json report;
        report["annotated"] = annotated;
        report["skipped_already_labeled"] = skipped;
        report["failures"] = failures;
        const std::string report_path = annotate_opt.output + ".report.json";
        write_json_file(report_path, report);

        ordered_json config;
        config["backend"] = annotate_opt.backend;
        config["max_retries"] = annotate_opt.max_retries;
        config["resume"] = annotate_opt.resume;
        write_manifest(annotate_opt.output + ".manifest.json", "annotate", config,
                       {annotate_opt.input}, {annotate_opt.output, report_path});
        std::cerr << "annotate: " << annotated << " labeled, " << failures.size() << " failed, "
                  << skipped << " skipped\n";
    }));

    // ---- train-generator ----
    auto *train_gen = app.add_subcommand("train-generator", "fit the toy bigram generation backend");
    struct {
        std::string input, model_out, k_policy = "gold";
        SchemeOptions scheme;
        size_t context_capacity = 4096;
    } tg_opt;
    train_gen->add_option("--input", tg_opt.input)->required();
    train_gen->add_option("--model-out", tg_opt.model_out)->required();
    train_gen->add_option("--k-policy", tg_opt.k_policy, "gold or fixed:<k>");
    train_gen->add_option("--context-capacity", tg_opt.context_capacity);
    tg_opt.scheme.attach(train_gen);
    train_gen->callback(guard([&tg_opt]() {
        const auto dataset = load_dataset(tg_opt.input);
        const auto scheme = tg_opt.scheme.resolve();

        derail::KPolicy policy = derail::KPolicy::gold();
        if (tg_opt.k_policy.rfind("fixed:", 0) == 0)
            policy = derail::KPolicy::fixed(std::stoi(tg_opt.k_policy.substr(6)));
        else if (tg_opt.k_policy != "gold")
            throw derail::ConfigError("--k-policy must be 'gold' or 'fixed:<k>'");

        const auto pairs = derail::build_training_pairs(dataset, scheme, policy);
        std::vector<std::vector<std::string>> sequences;
        sequences.reserve(pairs.pairs.size());
        for (const auto &pair : pairs.pairs)
            sequences.push_back(derail::split_whitespace(pair.context_text + pair.target_text));

        derail::BigramGenerator generator(scheme.end_marker, tg_opt.context_capacity);
        generator.train(sequences);
        generator.save(tg_opt.model_out);

        ordered_json config;
        config["k_policy"] = tg_opt.k_policy;
        config["scheme"] = scheme.to_json();
        config["context_capacity"] = tg_opt.context_capacity;
        config["training_pairs"] = pairs.pairs.size();
        config["excluded"] = pairs.excluded;
        write_manifest(tg_opt.model_out + ".manifest.json", "train-generator", config, {tg_opt.input},
                       {tg_opt.model_out});
        std::cerr << "train-generator: " << pairs.pairs.size() << " pairs (" << pairs.excluded
                  << " excluded)\n";
    }));

    // ---- train-classifier ----
    auto *train_clf = app.add_subcommand("train-classifier",
                                         "train the derailment classifier on the augmented set");
    struct {
        std::string input, generator, model_out, dump_augmented;
        int l = 2;
        uint64_t seed = 17;
        derail::TrainConfig train;
        SchemeOptions scheme;
        GenParamsOptions params;
        size_t context_capacity = 4096;
    } tc_opt;
    train_clf->add_option("--input", tc_opt.input)->required();
    train_clf->add_option("--generator", tc_opt.generator)->required();
    train_clf->add_option("--model-out", tc_opt.model_out)->required();
    train_clf->add_option("--l", tc_opt.l, "synthetic continuations per training sample");
    train_clf->add_option("--seed", tc_opt.seed);
    train_clf->add_option("--epochs", tc_opt.train.epochs);
    train_clf->add_option("--learning-rate", tc_opt.train.learning_rate);
    train_clf->add_option("--l2", tc_opt.train.l2);
    train_clf->add_option("--context-capacity", tc_opt.context_capacity);
    train_clf->add_option("--dump-augmented", tc_opt.dump_augmented,
                          "also write the augmented training set as JSONL");
    tc_opt.scheme.attach(train_clf);
    tc_opt.params.attach(train_clf);
    train_clf->callback(guard([&tc_opt]() {
        const auto dataset = load_dataset(tc_opt.input);
        const auto scheme = tc_opt.scheme.resolve();
        const auto params = tc_opt.params.resolve(scheme);
        const auto generator = load_generator(tc_opt.generator);

        derail::AugmentReport augment_report;
        const auto examples = derail::augment_training_set(dataset, *generator, scheme, tc_opt.l,
                                                           params, tc_opt.seed, &augment_report);
        if (!tc_opt.dump_augmented.empty())
            derail::save_augmented_examples(examples, tc_opt.dump_augmented);

        derail::BowClassifier classifier(tc_opt.context_capacity);
        const auto train_report =
            derail::train_derailment_classifier(classifier, examples, tc_opt.train);
        classifier.save(tc_opt.model_out);

        ordered_json report;
        report["training"] = train_report.to_json();
        report["augmentation"] = augment_report.to_json();
        const std::string report_path = tc_opt.model_out + ".report.json";
        write_json_file(report_path, report);

        ordered_json config;
        config["l"] = tc_opt.l;
        config["seed"] = tc_opt.seed;
        config["train"] = tc_opt.train.to_json();
        config["scheme"] = scheme.to_json();
        config["params"] = params.to_json();
        write_manifest(tc_opt.model_out + ".manifest.json", "train-classifier", config,
                       {tc_opt.input, tc_opt.generator}, {tc_opt.model_out, report_path});
        std::cerr << "train-classifier: " << examples.size() << " examples, final loss "
                  << train_report.final_loss << ", train accuracy " << train_report.train_accuracy
                  << "\n";
    }));

    // ---- generate ----
    auto *generate = app.add_subcommand("generate", "sample continuation sets for a dataset");
    struct {
        std::string input, generator, output;
        int L = 5, k = -1, max_turns_cap = 16;
        uint64_t seed = 31, seed_stride = 1000;
        SchemeOptions scheme;
        GenParamsOptions params;
    } gen_opt;
    generate->add_option("--input", gen_opt.input)->required();
    generate->add_option("--generator", gen_opt.generator)->required();
    generate->add_option("--output", gen_opt.output)->required();
    generate->add_option("--L", gen_opt.L, "continuations per conversation");
    generate->add_option("--k", gen_opt.k, "prefix length (-1 = each conversation's own)");
    generate->add_option("--seed", gen_opt.seed);
    generate->add_option("--seed-stride", gen_opt.seed_stride);
    generate->add_option("--max-turns-cap", gen_opt.max_turns_cap);
    gen_opt.scheme.attach(generate);
    gen_opt.params.attach(generate);
    generate->callback(guard([&gen_opt]() {
        const auto dataset = load_dataset(gen_opt.input);
        const auto scheme = gen_opt.scheme.resolve();
        const auto params = gen_opt.params.resolve(scheme);
        const auto generator = load_generator(gen_opt.generator);

        std::vector<derail::ContinuationSet> sets;
        sets.reserve(dataset.conversations.size());
        for (size_t i = 0; i < dataset.conversations.size(); ++i) {
            const auto &c = dataset.conversations[i];
            const int k = gen_opt.k < 0 ? c.prefix_len : gen_opt.k;
            sets.push_back(derail::sample_continuations(*generator, c, k, gen_opt.L, params, scheme,
                                                        gen_opt.seed + i * gen_opt.seed_stride,
                                                        gen_opt.max_turns_cap));
        }
        derail::save_continuation_sets(sets, gen_opt.output);

        ordered_json config;
        config["L"] = gen_opt.L;
        config["k"] = gen_opt.k;
        config["seed"] = gen_opt.seed;
        config["seed_stride"] = gen_opt.seed_stride;
        config["max_turns_cap"] = gen_opt.max_turns_cap;
        config["scheme"] = scheme.to_json();
        config["params"] = params.to_json();
        write_manifest(gen_opt.output + ".manifest.json", "generate", config,
                       {gen_opt.input, gen_opt.generator}, {gen_opt.output});
        std::cerr << "generate: " << sets.size() << " continuation sets\n";
    }));

    // ---- forecast ----
    auto *fc = app.add_subcommand("forecast", "sample, score, and majority-vote a dataset");
    struct {
        std::string input, generator, classifier, output, tie_rule = "predict_derailment";
        int L = 5, k = -1, max_turns_cap = 16, jobs = 1;
        double threshold = 0.5;
        uint64_t seed = 31, seed_stride = 1000;
        bool average = false;
        SchemeOptions scheme;
        GenParamsOptions params;
    } fc_opt;
    fc->add_option("--input", fc_opt.input)->required();
    fc->add_option("--generator", fc_opt.generator)->required();
    fc->add_option("--classifier", fc_opt.classifier)->required();
    fc->add_option("--output", fc_opt.output)->required();
    fc->add_option("--L", fc_opt.L);
    fc->add_option("--k", fc_opt.k, "prefix length (-1 = each conversation's own)");
    fc->add_option("--threshold", fc_opt.threshold);
    fc->add_option("--tie-rule", fc_opt.tie_rule)
        ->check(CLI::IsMember({"predict_derailment", "predict_benign"}));
    fc->add_option("--seed", fc_opt.seed);
    fc->add_option("--seed-stride", fc_opt.seed_stride);
    fc->add_option("--max-turns-cap", fc_opt.max_turns_cap);
    fc->add_option("--jobs", fc_opt.jobs, "parallel forecasts");
    fc->add_flag("--average-probabilities", fc_opt.average,
                 "study variant: mean probability instead of majority vote");
    fc_opt.scheme.attach(fc);
    fc_opt.params.attach(fc);
    fc->callback(guard([&fc_opt]() {
        const auto dataset = load_dataset(fc_opt.input);
        const auto scheme = fc_opt.scheme.resolve();
        const auto generator = load_generator(fc_opt.generator);
        const auto classifier = load_classifier(fc_opt.classifier);

        derail::ForecastConfig config;
        config.L = fc_opt.L;
        config.params = fc_opt.params.resolve(scheme);
        config.scheme = scheme;
        config.threshold = fc_opt.threshold;
        config.tie_rule = *derail::parse_tie_rule(fc_opt.tie_rule);
        config.seed = fc_opt.seed;
        config.seed_stride = fc_opt.seed_stride;
        config.max_turns_cap = fc_opt.max_turns_cap;
        config.average_probabilities = fc_opt.average;
        config.jobs = fc_opt.jobs;

        derail::BatchReport report;
        const auto entries = derail::forecast_batch(dataset, *generator, *classifier, config, fc_opt.k,
                                                    &report);
        derail::save_forecast_batch(entries, config, fc_opt.output);
        const std::string report_path = fc_opt.output + ".report.json";
        write_json_file(report_path, report.to_json());

        ordered_json cfg_json;
        cfg_json["L"] = fc_opt.L;
        cfg_json["k"] = fc_opt.k;
        cfg_json["threshold"] = fc_opt.threshold;
        cfg_json["tie_rule"] = fc_opt.tie_rule;
        cfg_json["seed"] = fc_opt.seed;
        cfg_json["seed_stride"] = fc_opt.seed_stride;
        cfg_json["max_turns_cap"] = fc_opt.max_turns_cap;
        cfg_json["average_probabilities"] = fc_opt.average;
        cfg_json["scheme"] = scheme.to_json();
        cfg_json["params"] = config.params.to_json();
        write_manifest(fc_opt.output + ".manifest.json", "forecast", cfg_json,
                       {fc_opt.input, fc_opt.generator, fc_opt.classifier},
                       {fc_opt.output, report_path});
        std::cerr << "forecast: " << entries.size() << " conversations, derailment rate "
                  << report.derailment_rate << "\n";
    }));

    // ---- evaluate ----
    auto *evaluate = app.add_subcommand("evaluate", "metrics (and significance) for a forecast batch");
    struct {
        std::string input, output, markdown, baseline, method = "forecast", sided = "one_sided";
    } ev_opt;
    evaluate->add_option("--input", ev_opt.input)->required();
    evaluate->add_option("--output", ev_opt.output)->required();
    evaluate->add_option("--markdown", ev_opt.markdown, "also render a markdown metrics table");
    evaluate->add_option("--baseline", ev_opt.baseline,
                         "baseline batch JSONL for the accuracy-gain z-test");
    evaluate->add_option("--method-name", ev_opt.method);
    evaluate->add_option("--sided", ev_opt.sided)->check(CLI::IsMember({"one_sided", "two_sided"}));
    evaluate->callback(guard([&ev_opt]() {
        require_input_file(ev_opt.input);
        const auto entries = derail::load_forecast_batch(ev_opt.input);
        const auto metrics = derail::metrics_from_batch(entries);

        ordered_json report;
        report["method"] = ev_opt.method;
        report["metrics"] = metrics.to_json();

        std::vector<derail::MetricsTableRow> rows;
        derail::MetricsTableRow main_row{ev_opt.method, metrics, ""};

        std::vector<std::string> inputs = {ev_opt.input};
        if (!ev_opt.baseline.empty()) {
            require_input_file(ev_opt.baseline);
            const auto baseline_entries = derail::load_forecast_batch(ev_opt.baseline);
            const auto baseline_metrics = derail::metrics_from_batch(baseline_entries);
            const auto sided =
                ev_opt.sided == "one_sided" ? derail::Sided::one_sided : derail::Sided::two_sided;
            const auto z = derail::two_proportion_z_test(metrics.accuracy, metrics.n,
                                                         baseline_metrics.accuracy,
                                                         baseline_metrics.n, sided);
            report["baseline_metrics"] = baseline_metrics.to_json();
            report["z_test"] = z.to_json();
            if (z.significant)
                main_row.marker = "*"; // significant accuracy gain, p < 0.1
            rows.push_back({"baseline", baseline_metrics, ""});
            inputs.push_back(ev_opt.baseline);
        }
        rows.insert(rows.begin(), main_row);

        write_json_file(ev_opt.output, report);
        std::vector<std::string> outputs = {ev_opt.output};
        if (!ev_opt.markdown.empty()) {
            write_text_file(ev_opt.markdown, derail::render_metrics_markdown(rows));
            outputs.push_back(ev_opt.markdown);
        }

        ordered_json config;
        config["method"] = ev_opt.method;
        config["sided"] = ev_opt.sided;
        write_manifest(ev_opt.output + ".manifest.json", "evaluate", config, inputs, outputs);
        std::cerr << "evaluate: accuracy " << metrics.accuracy << " over n=" << metrics.n << "\n";
    }));

    // ---- ablate ----
    auto *ablate = app.add_subcommand("ablate", "vote-count or prefix-length ablation grids");
    struct {
        std::string mode, input, generator, classifier, output;
        std::string L_values = "1,3,5,7,11,15", k_values = "2,4";
        int L = 5, max_turns_cap = 16;
        uint64_t seed = 31, seed_stride = 1000;
        double threshold = 0.5;
        SchemeOptions scheme;
        GenParamsOptions params;
    } ab_opt;
    ablate->add_option("--mode", ab_opt.mode)->required()->check(CLI::IsMember({"votes", "prefix"}));
    ablate->add_option("--input", ab_opt.input)->required();
    ablate->add_option("--generator", ab_opt.generator)->required();
    ablate->add_option("--classifier", ab_opt.classifier)->required();
    ablate->add_option("--output", ab_opt.output)->required();
    ablate->add_option("--L-values", ab_opt.L_values, "vote-count grid");
    ablate->add_option("--k-values", ab_opt.k_values, "prefix-length grid");
    ablate->add_option("--L", ab_opt.L, "votes per forecast in prefix mode");
    ablate->add_option("--seed", ab_opt.seed);
    ablate->add_option("--seed-stride", ab_opt.seed_stride);
    ablate->add_option("--max-turns-cap", ab_opt.max_turns_cap);
    ablate->add_option("--threshold", ab_opt.threshold);
    ab_opt.scheme.attach(ablate);
    ab_opt.params.attach(ablate);
    ablate->callback(guard([&ab_opt]() {
        const auto dataset = load_dataset(ab_opt.input);
        const auto scheme = ab_opt.scheme.resolve();
        const auto generator = load_generator(ab_opt.generator);
        const auto classifier = load_classifier(ab_opt.classifier);

        derail::ForecastConfig config;
        config.L = ab_opt.L;
        config.params = ab_opt.params.resolve(scheme);
        config.scheme = scheme;
        config.threshold = ab_opt.threshold;
        config.seed = ab_opt.seed;
        config.seed_stride = ab_opt.seed_stride;
        config.max_turns_cap = ab_opt.max_turns_cap;

        ordered_json report;
        if (ab_opt.mode == "votes") {
            const auto rows = derail::ablate_vote_count(dataset, *generator, *classifier, config,
                                                        parse_int_list(ab_opt.L_values, "L"));
            report["mode"] = "votes";
            report["rows"] = derail::vote_ablation_to_json(rows);
        } else {
            const auto rows = derail::ablate_prefix_length(dataset, *generator, *classifier, config,
                                                           parse_int_list(ab_opt.k_values, "k"));
            report["mode"] = "prefix";
            report["rows"] = derail::prefix_ablation_to_json(rows);
        }
        write_json_file(ab_opt.output, report);

        ordered_json cfg_json;
        cfg_json["mode"] = ab_opt.mode;
        cfg_json["L_values"] = ab_opt.L_values;
        cfg_json["k_values"] = ab_opt.k_values;
        cfg_json["L"] = ab_opt.L;
        cfg_json["seed"] = ab_opt.seed;
        cfg_json["scheme"] = scheme.to_json();
        cfg_json["params"] = config.params.to_json();
        write_manifest(ab_opt.output + ".manifest.json", "ablate", cfg_json,
                       {ab_opt.input, ab_opt.generator, ab_opt.classifier}, {ab_opt.output});
        std::cerr << "ablate: wrote " << ab_opt.output << "\n";
    }));

    // ---- diversity ----
    auto *diversity = app.add_subcommand("diversity", "leave-one-out self-BLEU of continuation sets");
    struct {
        std::string input, output;
        int max_ngram = 4;
    } dv_opt;
    diversity->add_option("--input", dv_opt.input)->required();
    diversity->add_option("--output", dv_opt.output)->required();
    diversity->add_option("--max-ngram", dv_opt.max_ngram);
    diversity->callback(guard([&dv_opt]() {
        require_input_file(dv_opt.input);
        const auto sets = derail::load_continuation_sets(dv_opt.input);
        ordered_json per_set = ordered_json::array();
        double total = 0.0;
        int counted = 0, skipped = 0;
        for (const auto &cs : sets) {
            if (cs.continuations.size() < 2) {
                ++skipped;
                continue;
            }
            const double bleu = derail::bleu_self_diversity(cs, dv_opt.max_ngram);
            per_set.push_back({{"conversation_id", cs.conversation_id}, {"self_bleu", bleu}});
            total += bleu;
            ++counted;
        }
        ordered_json report;
        report["max_ngram"] = dv_opt.max_ngram;
        report["smoothing"] = "additive 0.1 on zero n-gram counts, closest-reference brevity penalty";
        report["mean_self_bleu"] = counted ? total / counted : 0.0;
        report["sets"] = counted;
        report["skipped_small_sets"] = skipped;
        report["per_set"] = per_set;
        write_json_file(dv_opt.output, report);
        ordered_json config;
        config["max_ngram"] = dv_opt.max_ngram;
        write_manifest(dv_opt.output + ".manifest.json", "diversity", config, {dv_opt.input},
                       {dv_opt.output});
        std::cerr << "diversity: mean self-BLEU " << (counted ? total / counted : 0.0) << " over "
                  << counted << " sets\n";
    }));

    // ---- motivation ----
    auto *motivation = app.add_subcommand("motivation",
                                          "detection-vs-forecasting contrast (full vs prefix input)");
    struct {
        std::string train, test, output, markdown;
        derail::TrainConfig config;
        SchemeOptions scheme;
    } mo_opt;
    motivation->add_option("--train", mo_opt.train)->required();
    motivation->add_option("--test", mo_opt.test)->required();
    motivation->add_option("--output", mo_opt.output)->required();
    motivation->add_option("--markdown", mo_opt.markdown);
    motivation->add_option("--epochs", mo_opt.config.epochs);
    motivation->add_option("--learning-rate", mo_opt.config.learning_rate);
    motivation->add_option("--l2", mo_opt.config.l2);
    mo_opt.scheme.attach(motivation);
    motivation->callback(guard([&mo_opt]() {
        const auto train = load_dataset(mo_opt.train);
        const auto test = load_dataset(mo_opt.test);
        const auto scheme = mo_opt.scheme.resolve();
        const auto result = derail::run_motivation_experiment(train, test, scheme, mo_opt.config);
        write_json_file(mo_opt.output, result.to_json());

        std::vector<std::string> outputs = {mo_opt.output};
        if (!mo_opt.markdown.empty()) {
            write_text_file(
                mo_opt.markdown,
                derail::render_metrics_markdown({{"all turns", result.all_turns, ""},
                                                 {"benign prefix", result.benign_prefix, ""}}));
            outputs.push_back(mo_opt.markdown);
        }
        ordered_json config;
        config["train_config"] = mo_opt.config.to_json();
        write_manifest(mo_opt.output + ".manifest.json", "motivation", config,
                       {mo_opt.train, mo_opt.test}, outputs);
        std::cerr << "motivation: all-turns " << result.all_turns.accuracy << " vs prefix "
                  << result.benign_prefix.accuracy << "\n";
    }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2
    }
    return exit_code;
}
