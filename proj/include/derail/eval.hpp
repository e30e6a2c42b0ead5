// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/forecast.hpp"
#include "derail/ingest.hpp"

namespace derail {

// --------------------------------------------------------------------------
// Classification metrics. Derailment is the positive class. Zero-denominator
// metrics are reported as undefined (nullopt / "n/a"), never silently as 0.
// --------------------------------------------------------------------------

struct MetricsReport {
    int tp = 0, fp = 0, fn = 0, tn = 0;
    int n = 0;
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;

    nlohmann::ordered_json to_json() const;
};

MetricsReport compute_metrics(const std::vector<bool> &preds, const std::vector<bool> &golds);

MetricsReport metrics_from_batch(const std::vector<BatchEntry> &entries);

// --------------------------------------------------------------------------
// Two-proportion pooled z-test on accuracies. One-sided tests the improvement
// direction (a > b). The significance marker follows the p < 0.1 convention.
// --------------------------------------------------------------------------

enum class Sided { one_sided, two_sided };

struct ZTestResult {
    double z = 0.0;
    double p_value = 1.0;
    bool significant = false; // p < 0.1

    nlohmann::ordered_json to_json() const;
};

ZTestResult two_proportion_z_test(double acc_a, int n_a, double acc_b, int n_b,
                                  Sided sided = Sided::one_sided);

// --------------------------------------------------------------------------
// Experiment protocols
// --------------------------------------------------------------------------

// Detection vs forecasting contrast: train and evaluate one classifier on full
// transcripts (final turn included) and one on benign prefixes only.
struct MotivationResult {
    MetricsReport all_turns;
    MetricsReport benign_prefix;
    double accuracy_gap = 0.0; // all_turns - benign_prefix
    TrainReport all_turns_training;
    TrainReport benign_prefix_training;

    nlohmann::ordered_json to_json() const;
};

MotivationResult run_motivation_experiment(const Dataset &train, const Dataset &eval_set,
                                           const SerializationScheme &scheme, const TrainConfig &config);

// Vote-count ablation: continuations are sampled once at max(L_values) per
// conversation and prefix-reused for smaller L so rows are comparable.
struct VoteAblationRow {
    int L = 0;
    MetricsReport metrics;
};

std::vector<VoteAblationRow> ablate_vote_count(const Dataset &validation,
                                               const GeneratorBackend &generator,
                                               const ClassifierBackend &classifier,
                                               const ForecastConfig &config,
                                               const std::vector<int> &L_values);

// Prefix-length ablation: forecasts rebuilt from k-turn prefixes with
// open-ended generation; conversations too short for k are excluded and counted.
struct PrefixAblationRow {
    int k = 0;
    int included = 0;
    int excluded = 0;
    MetricsReport metrics;
    double median_generated_turns = 0.0;
};

std::vector<PrefixAblationRow> ablate_prefix_length(const Dataset &test,
                                                    const GeneratorBackend &generator,
                                                    const ClassifierBackend &classifier,
                                                    const ForecastConfig &config,
                                                    const std::vector<int> &k_values);

// --------------------------------------------------------------------------
// Report rendering
// --------------------------------------------------------------------------

struct MetricsTableRow {
    std::string method;
    MetricsReport metrics;
    std::string marker; // e.g. "*" when a z-test flags significance
};

// Markdown table: methods x {Acc, Prec, Rec, F1}, undefined cells as "n/a".
std::string render_metrics_markdown(const std::vector<MetricsTableRow> &rows);

nlohmann::ordered_json vote_ablation_to_json(const std::vector<VoteAblationRow> &rows);
nlohmann::ordered_json prefix_ablation_to_json(const std::vector<PrefixAblationRow> &rows);

} // namespace derail
