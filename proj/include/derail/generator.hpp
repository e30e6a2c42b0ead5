// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "derail/backend.hpp"
#include "derail/core.hpp"
#include "derail/ingest.hpp"

namespace derail {

// --------------------------------------------------------------------------
// Text rendering of conversations for generator and classifier backends.
// Orientation tags, when enabled, are prepended before the speaker as
// "[power, benevolence, arousal, political_leaning]" with fixed axis order.
// --------------------------------------------------------------------------

struct SerializationScheme {
    bool include_orientation = false;
    std::string turn_delimiter = "\n<TURN>\n";
    std::string label_open = "[";
    std::string label_close = "]";
    std::string end_marker = "<END_OF_CONVERSATION>";
    std::string speaker_separator = ": ";

    // Structural strings must be non-empty and pairwise distinct.
    void validate() const; // throws ConfigError

    nlohmann::ordered_json to_json() const;
    static SerializationScheme from_json(const nlohmann::json &j);

    bool operator==(const SerializationScheme &) const = default;
};

// Speaker id assigned to generated segments that do not parse as "speaker: text".
inline constexpr const char *kUnknownSpeaker = "<unknown>";

// What to do when the scheme wants orientation tags but a turn has none:
// gold-data rendering treats it as an error; generated turns may simply lack a
// parseable tag, and scoring them must not abort, so the tag is omitted.
enum class MissingLabel { error, skip_tag };

// Renders turns joined by the turn delimiter; no end marker is appended.
// With MissingLabel::error, throws SerializationError if include_orientation
// is set and a turn has no label.
std::string serialize(const std::vector<Turn> &turns, const SerializationScheme &scheme,
                      MissingLabel missing = MissingLabel::error);

struct DeserializeResult {
    std::vector<Turn> turns;
    std::vector<std::string> warnings;
};

// Inverse of serialize, tolerant of generator output: text is cut at the first
// end marker, split on the turn delimiter, and each segment is parsed as an
// optional orientation tag plus "speaker: text". Malformed tags are kept as
// literal text with a warning; segments without a speaker separator become
// turns with the reserved unknown-speaker id.
DeserializeResult deserialize_continuation(const std::string &text, const SerializationScheme &scheme);

// --------------------------------------------------------------------------
// Generator fine-tuning pairs: context = serialized turns 1..k (plus a
// trailing turn delimiter), target = serialized turns k+1..n plus the end
// marker, so that context + target deserializes back to the whole conversation.
// --------------------------------------------------------------------------

struct TrainingPair {
    std::string context_text;
    std::string target_text;
    std::string conversation_id;
    int k_used = 0;
};

struct KPolicy {
    enum class Kind { gold_prefix, fixed_k };
    Kind kind = Kind::gold_prefix;
    int k = 0;

    static KPolicy gold() { return {}; }
    static KPolicy fixed(int k) { return {Kind::fixed_k, k}; }
};

struct TrainingPairSet {
    std::vector<TrainingPair> pairs;
    int excluded = 0; // conversations filtered out by the k policy
};

TrainingPairSet build_training_pairs(const Dataset &d, const SerializationScheme &scheme,
                                     const KPolicy &policy);

// --------------------------------------------------------------------------
// Continuation sampling
// --------------------------------------------------------------------------

struct ContinuationSet {
    std::string conversation_id;
    int prefix_len = 0;
    std::vector<std::vector<Turn>> continuations;
    GenerationParams params;
    uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// Samples L continuations of c from its first k turns. The i-th sample
// (0-based) uses seed + i; a sample that comes back empty is redrawn once with
// seed + L + i and, failing that, replaced by a single empty-text turn with a
// warning. Generation stops at the end marker or after max_turns_cap turns.
// On context overflow the oldest prefix turns are dropped and the call retried.
ContinuationSet sample_continuations(const GeneratorBackend &generator, const Conversation &c, int k,
                                     int L, const GenerationParams &params,
                                     const SerializationScheme &scheme, uint64_t seed,
                                     int max_turns_cap = 16);

// JSONL persistence:
// {"conversation_id", "prefix_len", "seed", "params", "continuations": [[turn...], ...]}
nlohmann::ordered_json continuation_set_to_json(const ContinuationSet &cs);
ContinuationSet continuation_set_from_json(const nlohmann::json &j);
void save_continuation_sets(const std::vector<ContinuationSet> &sets, const std::string &path);
std::vector<ContinuationSet> load_continuation_sets(const std::string &path);

} // namespace derail
