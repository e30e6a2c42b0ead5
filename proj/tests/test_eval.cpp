// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "derail/bleu.hpp"
#include "derail/errors.hpp"
#include "derail/eval.hpp"
#include "derail/stats.hpp"
#include "derail/synthetic.hpp"
#include "helpers.hpp"

using namespace derail;
using namespace derail::testing;

namespace {

// ---- independent oracles ----

struct ConfusionOracle {
    int tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionOracle confusion_oracle(const std::vector<bool> &preds, const std::vector<bool> &golds) {
    ConfusionOracle o;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (golds[i]) {
            if (preds[i])
                ++o.tp;
            else
                ++o.fn;
        } else {
            if (preds[i])
                ++o.fp;
            else
                ++o.tn;
        }
    }
    return o;
}

// Simpson integration of the standard normal density on [0, |z|].
double normal_cdf_oracle(double z) {
    const double upper = std::fabs(z);
    const int steps = 2000;
    const double h = upper / steps;
    auto phi = [](double x) { return std::exp(-x * x / 2.0) / std::sqrt(2.0 * M_PI); };
    double sum = phi(0.0) + phi(upper);
    for (int i = 1; i < steps; ++i)
        sum += phi(i * h) * (i % 2 ? 4.0 : 2.0);
    const double half = sum * h / 3.0;
    return z >= 0 ? 0.5 + half : 0.5 - half;
}

// Independent leave-one-out BLEU built on explicit token-vector n-grams.
int oracle_count(const std::vector<std::vector<std::string>> &grams,
                 const std::vector<std::string> &needle) {
    int count = 0;
    for (const auto &g : grams)
        if (g == needle)
            ++count;
    return count;
}

std::vector<std::vector<std::string>> oracle_ngrams(const std::vector<std::string> &tokens, int n) {
    std::vector<std::vector<std::string>> out;
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i)
        out.emplace_back(tokens.begin() + i, tokens.begin() + i + n);
    return out;
}

double bleu_oracle(const std::vector<std::string> &hyp,
                   const std::vector<std::vector<std::string>> &refs) {
    if (hyp.empty())
        return 0.0;
    double log_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= 4; ++n) {
        const auto hyp_grams = oracle_ngrams(hyp, n);
        if (hyp_grams.empty())
            continue;
        std::vector<std::vector<std::string>> distinct;
        for (const auto &g : hyp_grams)
            if (!oracle_count(distinct, g))
                distinct.push_back(g);
        int correct = 0;
        for (const auto &g : distinct) {
            int best_ref = 0;
            for (const auto &ref : refs)
                best_ref = std::max(best_ref, oracle_count(oracle_ngrams(ref, n), g));
            correct += std::min(oracle_count(hyp_grams, g), best_ref);
        }
        const double total = static_cast<double>(hyp_grams.size());
        const double p = correct > 0 ? correct / total : 0.1 / total;
        log_sum += std::log(p);
        ++orders;
    }
    if (orders == 0)
        return 0.0;

    size_t closest = refs.front().size();
    auto diff = [&](size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
    for (const auto &ref : refs)
        if (diff(ref.size()) < diff(closest) || (diff(ref.size()) == diff(closest) && ref.size() < closest))
            closest = ref.size();
    double bp = 1.0;
    if (hyp.size() < closest)
        bp = std::exp(1.0 - static_cast<double>(closest) / static_cast<double>(hyp.size()));
    return bp * std::exp(log_sum / orders);
}

double self_bleu_oracle(const ContinuationSet &cs) {
    std::vector<std::vector<std::string>> lists;
    for (const auto &c : cs.continuations)
        lists.push_back(continuation_tokens(c));
    double total = 0.0;
    for (size_t i = 0; i < lists.size(); ++i) {
        std::vector<std::vector<std::string>> refs;
        for (size_t j = 0; j < lists.size(); ++j)
            if (j != i)
                refs.push_back(lists[j]);
        total += bleu_oracle(lists[i], refs);
    }
    return total / static_cast<double>(lists.size());
}

ContinuationSet make_set(const std::vector<std::vector<std::string>> &texts) {
    ContinuationSet cs;
    cs.conversation_id = "bleu";
    cs.prefix_len = 1;
    for (const auto &turns : texts) {
        std::vector<Turn> list;
        for (const auto &t : turns)
            list.push_back(turn("s", t));
        cs.continuations.push_back(std::move(list));
    }
    return cs;
}

// ---- shared planted pipeline fixture ----

struct PlantedPipeline {
    std::map<Split, Dataset> corpus;
    SerializationScheme scheme;
    GenerationParams params;
    BigramGenerator generator;
    BowClassifier classifier;
};

const PlantedPipeline &planted_pipeline() {
    static PlantedPipeline *pipeline = [] {
        auto *p = new PlantedPipeline;
        p->corpus = make_planted_corpus();
        p->scheme = planted_scheme();
        p->params = planted_generation_params();

        std::vector<std::vector<std::string>> sequences;
        for (const auto &pair : build_training_pairs(p->corpus.at(Split::train), p->scheme,
                                                     KPolicy::gold())
                                    .pairs)
            sequences.push_back(split_whitespace(pair.context_text + pair.target_text));
        p->generator.train(sequences);

        const auto examples = augment_training_set(p->corpus.at(Split::train), p->generator, p->scheme,
                                                   2, p->params, 21);
        train_derailment_classifier(p->classifier, examples, TrainConfig{});
        return p;
    }();
    return *pipeline;
}

ForecastConfig planted_config(const PlantedPipeline &p) {
    ForecastConfig cfg;
    cfg.L = 5;
    cfg.params = p.params;
    cfg.scheme = p.scheme;
    cfg.seed = 1007;
    return cfg;
}

} // namespace

TEST_CASE("compute_metrics hand case: tp=3 fp=1 fn=1 tn=3") {
    const std::vector<bool> preds = {true, true, true, true, false, false, false, false};
    const std::vector<bool> golds = {true, true, true, false, true, false, false, false};
    const auto m = compute_metrics(preds, golds);
    CHECK(m.tp == 3);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.tn == 3);
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(*m.precision == doctest::Approx(0.75));
    CHECK(*m.recall == doctest::Approx(0.75));
    CHECK(*m.f1 == doctest::Approx(0.75));
}

TEST_CASE("compute_metrics reports zero-denominator metrics as undefined") {
    // All predictions negative, golds mixed: precision undefined, recall 0.
    const auto m = compute_metrics({false, false, false}, {true, false, true});
    CHECK_FALSE(m.precision.has_value());
    REQUIRE(m.recall.has_value());
    CHECK(*m.recall == doctest::Approx(0.0));
    CHECK_FALSE(m.f1.has_value());
    CHECK(m.to_json().at("precision").is_null());
}

TEST_CASE("compute_metrics matches the brute-force confusion oracle") {
    Rng rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_index(60));
        std::vector<bool> preds, golds;
        for (int i = 0; i < n; ++i) {
            preds.push_back(rng.next_double() < 0.5);
            golds.push_back(rng.next_double() < 0.5);
        }
        const auto m = compute_metrics(preds, golds);
        const auto o = confusion_oracle(preds, golds);
        CHECK(m.tp == o.tp);
        CHECK(m.fp == o.fp);
        CHECK(m.fn == o.fn);
        CHECK(m.tn == o.tn);
        CHECK(m.accuracy == doctest::Approx((o.tp + o.tn) / static_cast<double>(n)));
    }
}

TEST_CASE("compute_metrics rejects mismatched lengths") {
    CHECK_THROWS_AS(compute_metrics({true}, {true, false}), ArgumentError);
    CHECK_THROWS_AS(compute_metrics({}, {}), ArgumentError);
}

TEST_CASE("z-test reproduces the documented example and its marker") {
    const auto r = two_proportion_z_test(0.60, 100, 0.50, 100, Sided::one_sided);
    CHECK(r.z == doctest::Approx(1.4213).epsilon(1e-4));
    CHECK(r.p_value == doctest::Approx(0.0776).epsilon(2e-3));
    CHECK(r.significant); // p < 0.1

    // Agreement with a numeric normal-CDF oracle.
    CHECK(r.p_value == doctest::Approx(1.0 - normal_cdf_oracle(r.z)).epsilon(1e-3));
}

TEST_CASE("z-test of equal accuracies is exactly 1 two-sided") {
    const auto r = two_proportion_z_test(0.7, 50, 0.7, 80, Sided::two_sided);
    CHECK(r.z == doctest::Approx(0.0));
    CHECK(r.p_value == doctest::Approx(1.0));
    CHECK_FALSE(r.significant);
}

TEST_CASE("z-test antisymmetry under group swap") {
    const auto a = two_proportion_z_test(0.64, 120, 0.55, 90, Sided::two_sided);
    const auto b = two_proportion_z_test(0.55, 90, 0.64, 120, Sided::two_sided);
    CHECK(a.z == doctest::Approx(-b.z));
    CHECK(a.p_value == doctest::Approx(b.p_value));
}

TEST_CASE("z-test degenerate pooled proportions raise an error") {
    CHECK_THROWS_AS(two_proportion_z_test(0.0, 10, 0.0, 10), UndefinedStatisticError);
    CHECK_THROWS_AS(two_proportion_z_test(1.0, 10, 1.0, 10), UndefinedStatisticError);
}

TEST_CASE("bleu of five identical continuations is 1") {
    const auto cs = make_set({{"a kind reply here"},
                              {"a kind reply here"},
                              {"a kind reply here"},
                              {"a kind reply here"},
                              {"a kind reply here"}});
    CHECK(bleu_self_diversity(cs) == doctest::Approx(1.0));
}

TEST_CASE("bleu of token-disjoint continuations stays below the smoothing floor") {
    std::vector<std::vector<std::string>> texts;
    for (int i = 0; i < 5; ++i) {
        std::string text;
        for (int w = 0; w < 20; ++w)
            text += "w" + std::to_string(i) + "_" + std::to_string(w) + " ";
        texts.push_back({text});
    }
    const auto cs = make_set(texts);
    const double bleu = bleu_self_diversity(cs);

    // Floor from the additive smoothing on a length-20 hypothesis with all
    // counts at zero (brevity penalty 1 at equal lengths).
    double floor_log = 0.0;
    for (int n = 1; n <= 4; ++n)
        floor_log += std::log(0.1 / (20 - n + 1));
    const double floor = std::exp(floor_log / 4.0);
    CHECK(bleu == doctest::Approx(floor).epsilon(1e-9));
    CHECK(bleu < 0.01);
}

TEST_CASE("bleu self-diversity matches the independent oracle on random sets") {
    Rng rng(404);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<std::string>> texts;
        const int L = 2 + static_cast<int>(rng.next_index(4));
        for (int i = 0; i < L; ++i) {
            const int n_turns = 1 + static_cast<int>(rng.next_index(3));
            std::vector<std::string> turns;
            for (int t = 0; t < n_turns; ++t) {
                std::string text;
                const int words = 1 + static_cast<int>(rng.next_index(12));
                for (int w = 0; w < words; ++w)
                    text += vocab[rng.next_index(vocab.size())] + " ";
                turns.push_back(trim(text));
            }
            texts.push_back(std::move(turns));
        }
        const auto cs = make_set(texts);
        const double got = bleu_self_diversity(cs);
        CHECK(got == doctest::Approx(self_bleu_oracle(cs)).epsilon(1e-9));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("bleu self-diversity is invariant under continuation permutation") {
    Rng rng(17);
    const auto base = make_set({{"a b c d"}, {"b c d e"}, {"c d e f a"}, {"a a b"}, {"f e d c b a"}});
    const double expected = bleu_self_diversity(base);
    auto shuffled = base;
    for (int i = 0; i < 5; ++i) {
        rng.shuffle(shuffled.continuations);
        CHECK(bleu_self_diversity(shuffled) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("bleu handles empty continuations via smoothing, never a crash") {
    const auto cs = make_set({{""}, {"a b c"}, {"a b d"}, {"b c e"}, {"c a f"}});
    const double bleu = bleu_self_diversity(cs);
    CHECK(bleu >= 0.0);
    CHECK(bleu <= 1.0);
}

TEST_CASE("bleu requires at least two continuations") {
    const auto cs = make_set({{"alone here"}});
    CHECK_THROWS_AS(bleu_self_diversity(cs), ArgumentError);
}

TEST_CASE("motivation experiment shows the detection vs forecasting gap") {
    const auto &p = planted_pipeline();
    const auto result = run_motivation_experiment(p.corpus.at(Split::train), p.corpus.at(Split::test),
                                                  p.scheme, TrainConfig{});
    CHECK(result.all_turns.accuracy >= 0.95);
    CHECK(result.benign_prefix.accuracy <= 0.60);
    CHECK(result.accuracy_gap >= 0.20);
}

TEST_CASE("vote-count ablation at L=1 equals single-sample inference") {
    const auto &p = planted_pipeline();
    ForecastConfig cfg = planted_config(p);

    Dataset small;
    small.name = "val-head";
    small.split = Split::validation;
    const auto &validation = p.corpus.at(Split::validation).conversations;
    small.conversations.assign(validation.begin(), validation.begin() + 10);

    const auto rows = ablate_vote_count(small, p.generator, p.classifier, cfg, {1, 3, 5});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].L == 1);

    ForecastConfig single = cfg;
    single.L = 1;
    std::vector<bool> preds, golds;
    for (size_t i = 0; i < small.conversations.size(); ++i) {
        const auto &c = small.conversations[i];
        ForecastConfig item = single;
        item.seed = cfg.seed + i * cfg.seed_stride;
        preds.push_back(forecast(c, c.prefix_len, p.generator, p.classifier, item).final);
        golds.push_back(c.outcome == Outcome::derailed);
    }
    const auto direct = compute_metrics(preds, golds);
    CHECK(rows[0].metrics.accuracy == doctest::Approx(direct.accuracy));
    CHECK(rows[0].metrics.tp == direct.tp);
    CHECK(rows[0].metrics.tn == direct.tn);
}

TEST_CASE("simulated voting accuracy follows the exact binomial curve") {
    for (int L : {1, 3, 5}) {
        const double exact = exact_majority_accuracy(0.6, L);
        const double sim = simulate_majority_accuracy(0.6, L, 10000, 2000 + L);
        CHECK(std::fabs(sim - exact) <= 0.02);
    }
    CHECK(exact_majority_accuracy(0.6, 1) == doctest::Approx(0.6));
    CHECK(exact_majority_accuracy(0.6, 3) == doctest::Approx(0.648));
    CHECK(exact_majority_accuracy(0.6, 5) == doctest::Approx(0.68256));
}

TEST_CASE("prefix-length ablation: more planted context cannot hurt") {
    const auto &p = planted_pipeline();
    ForecastConfig cfg = planted_config(p);

    Dataset subset;
    subset.name = "test-head";
    subset.split = Split::test;
    const auto &test = p.corpus.at(Split::test).conversations;
    subset.conversations.assign(test.begin(), test.begin() + 20);

    const auto rows = ablate_prefix_length(subset, p.generator, p.classifier, cfg, {2, 4});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].k == 2);
    CHECK(rows[1].k == 4);
    CHECK(rows[0].excluded == 0);
    CHECK(rows[1].excluded == 0);
    // The class signal sits at the end of turn 4 by construction.
    CHECK(rows[1].metrics.accuracy >= rows[0].metrics.accuracy);
    CHECK(rows[0].median_generated_turns >= 1.0);
    CHECK(rows[1].median_generated_turns >= 1.0);
}

TEST_CASE("prefix-length ablation excludes conversations shorter than k") {
    const auto &p = planted_pipeline();
    ForecastConfig cfg = planted_config(p);

    Dataset subset;
    subset.conversations.assign(p.corpus.at(Split::test).conversations.begin(),
                                p.corpus.at(Split::test).conversations.begin() + 6);
    const auto rows = ablate_prefix_length(subset, p.generator, p.classifier, cfg, {40});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].included == 0);
    CHECK(rows[0].excluded == 6);
    CHECK(prefix_ablation_to_json(rows)[0].at("metrics").is_null());
}

TEST_CASE("markdown table renders undefined metrics as n/a") {
    MetricsTableRow row;
    row.method = "baseline";
    row.metrics = compute_metrics({false, false}, {true, false});
    row.marker = "*";
    const std::string table = render_metrics_markdown({row});
    CHECK(table.find("| baseline | 0.500 * | n/a |") != std::string::npos);
}
