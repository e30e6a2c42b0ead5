// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/classifier.hpp"
#include "derail/core.hpp"
#include "derail/generator.hpp"
#include "derail/ingest.hpp"

namespace derail {

enum class TieRule { predict_derailment, predict_benign };

std::string_view to_string(TieRule t);
std::optional<TieRule> parse_tie_rule(std::string_view s);

// Strict majority; exact ties resolve per tie_rule. Throws ArgumentError on empty votes.
bool majority_vote(const std::vector<bool> &votes, TieRule tie_rule);

struct ForecastResult {
    std::string conversation_id;
    std::vector<double> probabilities; // length L, in [0,1]
    std::vector<bool> votes;           // votes[i] = probabilities[i] >= threshold
    bool final = false;
    double threshold = 0.5;
    TieRule tie_rule = TieRule::predict_derailment;
};

struct ForecastConfig {
    int L = 5;
    GenerationParams params;
    SerializationScheme scheme;
    double threshold = 0.5;
    TieRule tie_rule = TieRule::predict_derailment;
    uint64_t seed = 0;
    int max_turns_cap = 16;
    // Seed offset between consecutive conversations in a batch.
    uint64_t seed_stride = 1000;
    // When true, votes are replaced by the mean-probability decision (study
    // variant; majority voting is the default).
    bool average_probabilities = false;
    int jobs = 1;
};

// Samples L continuations of the first k turns, scores history+continuation
// for each, binarizes at the threshold, and majority-votes. Deterministic
// given the seed and deterministic backends.
ForecastResult forecast(const Conversation &c, int k, const GeneratorBackend &generator,
                        const ClassifierBackend &classifier, const ForecastConfig &config,
                        int *truncated_turns = nullptr);

// Votes and verdict from an already-sampled continuation set (used by the
// vote-count ablation, which samples once at the largest L and reuses prefixes).
ForecastResult forecast_from_continuations(const Conversation &c, const ContinuationSet &cs, int L,
                                           const ClassifierBackend &classifier,
                                           const ForecastConfig &config,
                                           int *truncated_turns = nullptr);

struct BatchEntry {
    ForecastResult result;
    Outcome gold = Outcome::benign;
};

struct BatchReport {
    int n = 0;
    int truncated_turns = 0;
    std::vector<std::pair<std::string, std::string>> skipped; // (conversation id, error)
    std::map<int, int> vote_histogram;                        // derailment votes -> conversations
    double derailment_rate = 0.0;                             // fraction of final = derailed

    nlohmann::ordered_json to_json() const;
};

// One result per conversation; per-item backend errors are skipped and listed
// in the report. Conversation i uses seed config.seed + i * config.seed_stride.
// k = -1 uses each conversation's own prefix_len.
std::vector<BatchEntry> forecast_batch(const Dataset &d, const GeneratorBackend &generator,
                                       const ClassifierBackend &classifier, const ForecastConfig &config,
                                       int k = -1, BatchReport *report = nullptr);

// JSONL row: {"conversation_id", "probabilities", "votes", "final", "gold", "L", "seed"}
nlohmann::ordered_json batch_entry_to_json(const BatchEntry &entry, uint64_t seed);
void save_forecast_batch(const std::vector<BatchEntry> &entries, const ForecastConfig &config,
                         const std::string &path);
std::vector<BatchEntry> load_forecast_batch(const std::string &path);

} // namespace derail
