// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/core.hpp"
#include "derail/generator.hpp"
#include "derail/ingest.hpp"

namespace derail {

enum class Provenance { real_future, synthetic_future };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

// One classifier training example: serialized history plus a real or synthetic
// future, always labeled with the source conversation's gold outcome.
struct AugmentedExample {
    std::string conversation_id;
    std::string text;
    bool label = false; // true = derailed
    Provenance provenance = Provenance::real_future;
    std::optional<int> generation_index;
};

struct AugmentReport {
    int real_examples = 0;
    int synthetic_examples = 0;
    int dropped = 0;
    bool gold_orientation_on_real_futures = false; // which labels real futures carried
    std::vector<std::string> warnings;

    nlohmann::ordered_json to_json() const;
};

// Per conversation: one real-future example (turns 1..n) plus l synthetic
// examples (turns 1..prefix_len followed by a sampled continuation). Output
// size is |d| * (1 + l) minus reported drops. The i-th conversation uses
// seeds derived as seed + i * kAugmentSeedStride.
inline constexpr uint64_t kAugmentSeedStride = 1000;

std::vector<AugmentedExample> augment_training_set(const Dataset &d, const GeneratorBackend &generator,
                                                   const SerializationScheme &scheme, int l,
                                                   const GenerationParams &params, uint64_t seed,
                                                   AugmentReport *report = nullptr);

// Thin adapter over the trainable toy classifier: requires both labels present.
TrainReport train_derailment_classifier(BowClassifier &backend,
                                        const std::vector<AugmentedExample> &examples,
                                        const TrainConfig &config);

// Probability of derailment for serialize(history ++ continuation), where the
// history is the first k turns (k = -1 means the conversation's prefix_len).
// If the serialized text exceeds the backend capacity, whole turns are dropped
// from the front until it fits; *truncated_turns reports how many.
double score(const ClassifierBackend &backend, const Conversation &c,
             const std::vector<Turn> &continuation, const SerializationScheme &scheme, int k = -1,
             int *truncated_turns = nullptr);

// JSONL persistence:
// {"conversation_id", "provenance", "generation_index", "label", "text"}
void save_augmented_examples(const std::vector<AugmentedExample> &examples, const std::string &path);
std::vector<AugmentedExample> load_augmented_examples(const std::string &path);

} // namespace derail
