// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>

#include "derail/backend.hpp"
#include "derail/generator.hpp"
#include "derail/ingest.hpp"

namespace derail {

// Synthetic planted-signal corpus for desk-scale experiments. Conversations
// come in derailed/benign pairs with identical prefixes except for the final
// punctuation of the last prefix turn ("omega!" vs "omega."); the derailment
// trigger word appears only in the future turn. Consequences, by construction:
//   - a punctuation-stripping bag-of-words model sees class-identical prefixes,
//     so prefix-only classifiers sit at chance;
//   - a raw-token bigram generator sees two distinct prefix-final tokens whose
//     corpus successors are class-pure, so sampled futures carry the right
//     trigger with high probability.
struct PlantedCorpusSpec {
    int train_pairs = 450;
    int validation_pairs = 20;
    int test_pairs = 30;
    uint64_t seed = 13;
};

std::map<Split, Dataset> make_planted_corpus(const PlantedCorpusSpec &spec = {});

// Scheme used with the planted corpus: newline turn delimiter (word-level
// backends see no structural token between turns), orientation labels off.
SerializationScheme planted_scheme();

// Default sampling parameters for the planted pipeline.
GenerationParams planted_generation_params();

// Trigger words planted in future turns.
inline constexpr const char *kDerailTrigger = "flamewar";
inline constexpr const char *kBenignTrigger = "harmony";

} // namespace derail
