// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace derail {

// --------------------------------------------------------------------------
// Social orientation axes. One keyword per axis per turn; "neutral" exists in
// every axis, so position in the rendered tuple is what disambiguates it.
// --------------------------------------------------------------------------

enum class Power { assertive, confident, neutral, open_minded, submissive };
enum class Benevolence { confrontational, dismissive, neutral, friendly, supportive };
enum class Arousal { energetic, neutral, calm };
enum class PoliticalLeaning { liberal, neutral, conservative };

enum class Axis { power, benevolence, arousal, political_leaning };

inline constexpr std::array<Axis, 4> kAxes = {Axis::power, Axis::benevolence, Axis::arousal,
                                              Axis::political_leaning};

// Canonical keyword: lowercase with underscores ("open_minded").
std::string_view to_keyword(Power v);
std::string_view to_keyword(Benevolence v);
std::string_view to_keyword(Arousal v);
std::string_view to_keyword(PoliticalLeaning v);
std::string_view to_keyword(Axis a);

// Case-insensitive; hyphens are treated as underscores ("Open-minded" -> open_minded).
std::optional<Power> parse_power(std::string_view word);
std::optional<Benevolence> parse_benevolence(std::string_view word);
std::optional<Arousal> parse_arousal(std::string_view word);
std::optional<PoliticalLeaning> parse_political_leaning(std::string_view word);
std::optional<Axis> parse_axis(std::string_view word);

struct OrientationLabel {
    Power power = Power::neutral;
    Benevolence benevolence = Benevolence::neutral;
    Arousal arousal = Arousal::neutral;
    PoliticalLeaning political_leaning = PoliticalLeaning::neutral;

    bool operator==(const OrientationLabel &) const = default;
};

// --------------------------------------------------------------------------
// Conversations
// --------------------------------------------------------------------------

struct Turn {
    std::string speaker;
    std::string text;
    std::optional<OrientationLabel> orientation;
    std::optional<bool> is_derailment;

    bool operator==(const Turn &) const = default;
};

enum class Outcome { derailed, benign };
enum class Source { cga_wiki, bnc, synthetic };

std::string_view to_string(Outcome o);
std::string_view to_string(Source s);
std::optional<Outcome> parse_outcome(std::string_view s);
std::optional<Source> parse_source(std::string_view s);

// A conversation with a known benign prefix of length prefix_len (1-based turn
// indices 1..prefix_len) and a gold outcome for the turns after the prefix.
struct Conversation {
    std::string id;
    std::vector<Turn> turns;
    int prefix_len = 0;
    Outcome outcome = Outcome::benign;
    Source source = Source::synthetic;

    bool operator==(const Conversation &) const = default;
};

// Returns one message per violated invariant; empty means valid. Never throws.
std::vector<std::string> validate_conversation(const Conversation &c);

// Turns 1..prefix_len. Throws ValidationError if the conversation is invalid.
std::vector<Turn> benign_prefix(const Conversation &c);

// --------------------------------------------------------------------------
// Canonical JSONL record (one conversation per line, UTF-8):
//   {"id", "source", "prefix_len", "outcome",
//    "turns": [{"speaker", "text", "orientation": {...}|null, "is_derailment": bool|null}]}
// --------------------------------------------------------------------------

nlohmann::ordered_json orientation_to_json(const OrientationLabel &label);
OrientationLabel orientation_from_json(const nlohmann::json &j);

nlohmann::ordered_json turn_to_json(const Turn &t);
Turn turn_from_json(const nlohmann::json &j);

nlohmann::ordered_json conversation_to_json(const Conversation &c);
Conversation conversation_from_json(const nlohmann::json &j);

// Trims ASCII whitespace from both ends.
std::string trim(std::string_view s);

} // namespace derail
