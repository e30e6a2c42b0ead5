// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0
//
// Whole-pipeline integration at desk scale, including the orientation-labeled
// variant: annotate -> training pairs -> bigram -> augmented classifier ->
// majority-vote forecast.

#include <doctest.h>

#include "derail/classifier.hpp"
#include "derail/eval.hpp"
#include "derail/forecast.hpp"
#include "derail/orientation.hpp"
#include "derail/synthetic.hpp"
#include "helpers.hpp"

using namespace derail;
using namespace derail::testing;

namespace {

Dataset annotate_all(const Dataset &d) {
    HeuristicAnnotator backend;
    const auto tmpl = AnnotationPromptTemplate::builtin();
    Dataset out = d;
    for (auto &c : out.conversations)
        c = annotate_conversation(backend, tmpl, c, 0);
    return out;
}

} // namespace

TEST_CASE("orientation-labeled pipeline runs end to end") {
    PlantedCorpusSpec spec;
    spec.train_pairs = 220;
    spec.validation_pairs = 5;
    spec.test_pairs = 25;
    const auto corpus = make_planted_corpus(spec);

    auto scheme = planted_scheme();
    scheme.include_orientation = true;
    const auto params = planted_generation_params();

    // Labels come from the deterministic annotation backend, as they would
    // from a real annotation pass.
    const auto train = annotate_all(corpus.at(Split::train));
    const auto test = annotate_all(corpus.at(Split::test));

    // The generator is trained on label-tagged serializations, so it learns to
    // emit tag tokens alongside the text.
    BigramGenerator generator;
    std::vector<std::vector<std::string>> sequences;
    for (const auto &pair : build_training_pairs(train, scheme, KPolicy::gold()).pairs)
        sequences.push_back(split_whitespace(pair.context_text + pair.target_text));
    generator.train(sequences);

    // Sampled continuations must carry parsed orientation tags at least some
    // of the time (tags are token sequences the model reproduces).
    const auto &probe = test.conversations.front();
    const auto cs = sample_continuations(generator, probe, probe.prefix_len, 5, params, scheme, 5);
    int labeled_turns = 0, total_turns = 0;
    for (const auto &cont : cs.continuations)
        for (const auto &t : cont) {
            ++total_turns;
            labeled_turns += t.orientation.has_value() ? 1 : 0;
        }
    CHECK(total_turns >= 5);
    CHECK(labeled_turns > 0);

    BowClassifier classifier;
    const auto examples = augment_training_set(train, generator, scheme, 2, params, 21);
    CHECK(examples.size() == train.conversations.size() * 3);
    train_derailment_classifier(classifier, examples, TrainConfig{});

    ForecastConfig config;
    config.L = 5;
    config.params = params;
    config.scheme = scheme;
    config.seed = 99;
    const auto entries = forecast_batch(test, generator, classifier, config);
    const auto metrics = metrics_from_batch(entries);
    CHECK(metrics.n == static_cast<int>(test.conversations.size()));
    CHECK(metrics.accuracy >= 0.8);
}

TEST_CASE("deserialize_continuation never throws on arbitrary generator noise") {
    Rng rng(31337);
    SerializationScheme schemes[2];
    schemes[1].turn_delimiter = "\n";

    const std::string alphabet = "ab:[], \n<>END_OF_CONVERSATIONTURNneutral.!";
    for (int trial = 0; trial < 2000; ++trial) {
        std::string noise;
        const int len = static_cast<int>(rng.next_index(120));
        for (int i = 0; i < len; ++i)
            noise.push_back(alphabet[rng.next_index(alphabet.size())]);
        for (const auto &scheme : schemes) {
            const auto result = deserialize_continuation(noise, scheme);
            for (const auto &t : result.turns) {
                CHECK_FALSE(t.speaker.empty());
                // Re-serialization of whatever was parsed must not throw either.
                SerializationScheme plain = scheme;
                plain.include_orientation = false;
                (void)serialize({t}, plain);
            }
        }
    }
}
