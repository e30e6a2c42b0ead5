// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "derail/classifier.hpp"
#include "derail/errors.hpp"
#include "derail/stats.hpp"

namespace derail {

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
    j["tn"] = tn;
    j["accuracy"] = accuracy;
    j["precision"] = precision ? nlohmann::ordered_json(*precision) : nlohmann::ordered_json(nullptr);
    j["recall"] = recall ? nlohmann::ordered_json(*recall) : nlohmann::ordered_json(nullptr);
    j["f1"] = f1 ? nlohmann::ordered_json(*f1) : nlohmann::ordered_json(nullptr);
    return j;
}

MetricsReport compute_metrics(const std::vector<bool> &preds, const std::vector<bool> &golds) {
    if (preds.size() != golds.size() || preds.empty())
        throw ArgumentError("compute_metrics requires equal non-empty prediction and gold lists");

    MetricsReport m;
    m.n = static_cast<int>(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] && golds[i])
            ++m.tp;
        else if (preds[i] && !golds[i])
            ++m.fp;
        else if (!preds[i] && golds[i])
            ++m.fn;
        else
            ++m.tn;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.n);
    if (m.tp + m.fp > 0)
        m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0)
        m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    return m;
}

MetricsReport metrics_from_batch(const std::vector<BatchEntry> &entries) {
    std::vector<bool> preds, golds;
    preds.reserve(entries.size());
    golds.reserve(entries.size());
    for (const auto &e : entries) {
        preds.push_back(e.result.final);
        golds.push_back(e.gold == Outcome::derailed);
    }
    return compute_metrics(preds, golds);
}

nlohmann::ordered_json ZTestResult::to_json() const {
    nlohmann::ordered_json j;
    j["z"] = z;
    j["p_value"] = p_value;
    j["significant"] = significant;
    return j;
}

ZTestResult two_proportion_z_test(double acc_a, int n_a, double acc_b, int n_b, Sided sided) {
    if (n_a < 1 || n_b < 1)
        throw ArgumentError("two_proportion_z_test: sample sizes must be >= 1");
    if (acc_a < 0 || acc_a > 1 || acc_b < 0 || acc_b > 1)
        throw ArgumentError("two_proportion_z_test: accuracies must be in [0,1]");

    const double pooled = (acc_a * n_a + acc_b * n_b) / static_cast<double>(n_a + n_b);
    if (pooled <= 0.0 || pooled >= 1.0)
        throw UndefinedStatisticError("two_proportion_z_test: pooled proportion is degenerate");

    const double se = std::sqrt(pooled * (1.0 - pooled) *
                                (1.0 / static_cast<double>(n_a) + 1.0 / static_cast<double>(n_b)));
    ZTestResult r;
    r.z = (acc_a - acc_b) / se;
    r.p_value = sided == Sided::one_sided ? 1.0 - normal_cdf(r.z) : 2.0 * (1.0 - normal_cdf(std::fabs(r.z)));
    r.significant = r.p_value < 0.1;
    return r;
}

// --------------------------------------------------------------------------
// Motivation experiment
// --------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, bool>> text_examples(const Dataset &d,
                                                        const SerializationScheme &scheme,
                                                        bool prefix_only) {
    std::vector<std::pair<std::string, bool>> out;
    out.reserve(d.conversations.size());
    for (const auto &c : d.conversations) {
        const auto end = prefix_only ? c.turns.begin() + c.prefix_len : c.turns.end();
        out.emplace_back(serialize(std::vector<Turn>(c.turns.begin(), end), scheme),
                         c.outcome == Outcome::derailed);
    }
    return out;
}

MetricsReport eval_direct(const BowClassifier &clf, const Dataset &d, const SerializationScheme &scheme,
                          bool prefix_only) {
    std::vector<bool> preds, golds;
    for (const auto &c : d.conversations) {
        const auto end = prefix_only ? c.turns.begin() + c.prefix_len : c.turns.end();
        const std::string text = serialize(std::vector<Turn>(c.turns.begin(), end), scheme);
        preds.push_back(clf.predict_proba(text) >= 0.5);
        golds.push_back(c.outcome == Outcome::derailed);
    }
    return compute_metrics(preds, golds);
}

} // namespace

nlohmann::ordered_json MotivationResult::to_json() const {
    nlohmann::ordered_json j;
    j["all_turns"] = all_turns.to_json();
    j["benign_prefix"] = benign_prefix.to_json();
    j["accuracy_gap"] = accuracy_gap;
    j["all_turns_training"] = all_turns_training.to_json();
    j["benign_prefix_training"] = benign_prefix_training.to_json();
    return j;
}

MotivationResult run_motivation_experiment(const Dataset &train, const Dataset &eval_set,
                                           const SerializationScheme &scheme, const TrainConfig &config) {
    MotivationResult result;

    BowClassifier all_turns;
    result.all_turns_training = all_turns.train(text_examples(train, scheme, false), config);
    result.all_turns = eval_direct(all_turns, eval_set, scheme, false);

    BowClassifier prefix_only;
    result.benign_prefix_training = prefix_only.train(text_examples(train, scheme, true), config);
    result.benign_prefix = eval_direct(prefix_only, eval_set, scheme, true);

    result.accuracy_gap = result.all_turns.accuracy - result.benign_prefix.accuracy;
    return result;
}

// --------------------------------------------------------------------------
// Ablations
// --------------------------------------------------------------------------

std::vector<VoteAblationRow> ablate_vote_count(const Dataset &validation,
                                               const GeneratorBackend &generator,
                                               const ClassifierBackend &classifier,
                                               const ForecastConfig &config,
                                               const std::vector<int> &L_values) {
    if (L_values.empty())
        throw ArgumentError("ablate_vote_count: L_values must be non-empty");
    const int max_L = *std::max_element(L_values.begin(), L_values.end());
    if (max_L < 1)
        throw ArgumentError("ablate_vote_count: L values must be positive");

    // One sampling pass at the largest L; smaller L reuse the leading samples.
    std::vector<ContinuationSet> sets;
    sets.reserve(validation.conversations.size());
    for (size_t i = 0; i < validation.conversations.size(); ++i) {
        const auto &c = validation.conversations[i];
        sets.push_back(sample_continuations(generator, c, c.prefix_len, max_L, config.params,
                                            config.scheme, config.seed + i * config.seed_stride,
                                            config.max_turns_cap));
    }

    std::vector<VoteAblationRow> rows;
    for (int L : L_values) {
        std::vector<bool> preds, golds;
        for (size_t i = 0; i < validation.conversations.size(); ++i) {
            const auto &c = validation.conversations[i];
            const auto r = forecast_from_continuations(c, sets[i], L, classifier, config);
            preds.push_back(r.final);
            golds.push_back(c.outcome == Outcome::derailed);
        }
        rows.push_back({L, compute_metrics(preds, golds)});
    }
    return rows;
}

std::vector<PrefixAblationRow> ablate_prefix_length(const Dataset &test,
                                                    const GeneratorBackend &generator,
                                                    const ClassifierBackend &classifier,
                                                    const ForecastConfig &config,
                                                    const std::vector<int> &k_values) {
    if (k_values.empty())
        throw ArgumentError("ablate_prefix_length: k_values must be non-empty");

    std::vector<PrefixAblationRow> rows;
    for (int k : k_values) {
        PrefixAblationRow row;
        row.k = k;
        std::vector<bool> preds, golds;
        std::vector<int> generated_turn_counts;
        for (size_t i = 0; i < test.conversations.size(); ++i) {
            const auto &c = test.conversations[i];
            if (static_cast<int>(c.turns.size()) <= k) {
                ++row.excluded;
                continue;
            }
            const auto cs = sample_continuations(generator, c, k, config.L, config.params, config.scheme,
                                                 config.seed + i * config.seed_stride,
                                                 config.max_turns_cap);
            for (const auto &cont : cs.continuations)
                generated_turn_counts.push_back(static_cast<int>(cont.size()));
            const auto r = forecast_from_continuations(c, cs, config.L, classifier, config);
            preds.push_back(r.final);
            golds.push_back(c.outcome == Outcome::derailed);
            ++row.included;
        }
        if (!preds.empty()) {
            row.metrics = compute_metrics(preds, golds);
            std::sort(generated_turn_counts.begin(), generated_turn_counts.end());
            const size_t m = generated_turn_counts.size();
            row.median_generated_turns =
                m % 2 ? generated_turn_counts[m / 2]
                      : (generated_turn_counts[m / 2 - 1] + generated_turn_counts[m / 2]) / 2.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// --------------------------------------------------------------------------
// Rendering
// --------------------------------------------------------------------------

namespace {

std::string fmt_metric(const std::optional<double> &v) {
    if (!v)
        return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return buf;
}

} // namespace

std::string render_metrics_markdown(const std::vector<MetricsTableRow> &rows) {
    std::ostringstream out;
    out << "| Method | Acc. | Prec. | Rec. | F1 |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto &row : rows) {
        out << "| " << row.method << " | " << fmt_metric(row.metrics.accuracy);
        if (!row.marker.empty())
            out << " " << row.marker;
        out << " | " << fmt_metric(row.metrics.precision) << " | " << fmt_metric(row.metrics.recall)
            << " | " << fmt_metric(row.metrics.f1) << " |\n";
    }
    return out.str();
}

nlohmann::ordered_json vote_ablation_to_json(const std::vector<VoteAblationRow> &rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto &row : rows) {
        nlohmann::ordered_json r;
        r["L"] = row.L;
        r["metrics"] = row.metrics.to_json();
        j.push_back(std::move(r));
    }
    return j;
}

nlohmann::ordered_json prefix_ablation_to_json(const std::vector<PrefixAblationRow> &rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto &row : rows) {
        nlohmann::ordered_json r;
        r["k"] = row.k;
        r["included"] = row.included;
        r["excluded"] = row.excluded;
        r["metrics"] = row.included > 0 ? row.metrics.to_json() : nlohmann::ordered_json(nullptr);
        r["median_generated_turns"] = row.median_generated_turns;
        j.push_back(std::move(r));
    }
    return j;
}

} // namespace derail
