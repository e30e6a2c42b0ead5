// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/core.hpp"

#include <algorithm>
#include <cctype>

#include "derail/errors.hpp"

namespace derail {

namespace {

std::string normalize_keyword(std::string_view word) {
    std::string out;
    out.reserve(word.size());
    for (char c : word) {
        if (c == '-')
            out.push_back('_');
        else
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

template <typename E, size_t N>
std::optional<E> parse_enum(std::string_view word, const std::array<std::pair<std::string_view, E>, N> &table) {
    const std::string norm = normalize_keyword(word);
    for (const auto &[name, value] : table) {
        if (norm == name)
            return value;
    }
    return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, Power>, 5> kPowerTable = {{
    {"assertive", Power::assertive},
    {"confident", Power::confident},
    {"neutral", Power::neutral},
    {"open_minded", Power::open_minded},
    {"submissive", Power::submissive},
}};

constexpr std::array<std::pair<std::string_view, Benevolence>, 5> kBenevolenceTable = {{
    {"confrontational", Benevolence::confrontational},
    {"dismissive", Benevolence::dismissive},
    {"neutral", Benevolence::neutral},
    {"friendly", Benevolence::friendly},
    {"supportive", Benevolence::supportive},
}};

constexpr std::array<std::pair<std::string_view, Arousal>, 3> kArousalTable = {{
    {"energetic", Arousal::energetic},
    {"neutral", Arousal::neutral},
    {"calm", Arousal::calm},
}};

constexpr std::array<std::pair<std::string_view, PoliticalLeaning>, 3> kPoliticalTable = {{
    {"liberal", PoliticalLeaning::liberal},
    {"neutral", PoliticalLeaning::neutral},
    {"conservative", PoliticalLeaning::conservative},
}};

constexpr std::array<std::pair<std::string_view, Axis>, 4> kAxisTable = {{
    {"power", Axis::power},
    {"benevolence", Axis::benevolence},
    {"arousal", Axis::arousal},
    {"political_leaning", Axis::political_leaning},
}};

} // namespace

std::string_view to_keyword(Power v) {
    switch (v) {
    case Power::assertive: return "assertive";
    case Power::confident: return "confident";
    case Power::neutral: return "neutral";
    case Power::open_minded: return "open_minded";
    case Power::submissive: return "submissive";
    }
    return "";
}

std::string_view to_keyword(Benevolence v) {
    switch (v) {
    case Benevolence::confrontational: return "confrontational";
    case Benevolence::dismissive: return "dismissive";
    case Benevolence::neutral: return "neutral";
    case Benevolence::friendly: return "friendly";
    case Benevolence::supportive: return "supportive";
    }
    return "";
}

std::string_view to_keyword(Arousal v) {
    switch (v) {
    case Arousal::energetic: return "energetic";
    case Arousal::neutral: return "neutral";
    case Arousal::calm: return "calm";
    }
    return "";
}

std::string_view to_keyword(PoliticalLeaning v) {
    switch (v) {
    case PoliticalLeaning::liberal: return "liberal";
    case PoliticalLeaning::neutral: return "neutral";
    case PoliticalLeaning::conservative: return "conservative";
    }
    return "";
}

std::string_view to_keyword(Axis a) {
    switch (a) {
    case Axis::power: return "power";
    case Axis::benevolence: return "benevolence";
    case Axis::arousal: return "arousal";
    case Axis::political_leaning: return "political_leaning";
    }
    return "";
}

std::optional<Power> parse_power(std::string_view word) { return parse_enum(word, kPowerTable); }
std::optional<Benevolence> parse_benevolence(std::string_view word) { return parse_enum(word, kBenevolenceTable); }
std::optional<Arousal> parse_arousal(std::string_view word) { return parse_enum(word, kArousalTable); }
std::optional<PoliticalLeaning> parse_political_leaning(std::string_view word) {
    return parse_enum(word, kPoliticalTable);
}
std::optional<Axis> parse_axis(std::string_view word) { return parse_enum(word, kAxisTable); }

std::string_view to_string(Outcome o) { return o == Outcome::derailed ? "derailed" : "benign"; }

std::string_view to_string(Source s) {
    switch (s) {
    case Source::cga_wiki: return "cga_wiki";
    case Source::bnc: return "bnc";
    case Source::synthetic: return "synthetic";
    }
    return "";
}

std::optional<Outcome> parse_outcome(std::string_view s) {
    if (s == "derailed")
        return Outcome::derailed;
    if (s == "benign")
        return Outcome::benign;
    return std::nullopt;
}

std::optional<Source> parse_source(std::string_view s) {
    if (s == "cga_wiki")
        return Source::cga_wiki;
    if (s == "bnc")
        return Source::bnc;
    if (s == "synthetic")
        return Source::synthetic;
    return std::nullopt;
}

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> validate_conversation(const Conversation &c) {
    std::vector<std::string> violations;
    const int n = static_cast<int>(c.turns.size());

    if (n < 2)
        violations.push_back("conversation must have at least 2 turns");
    if (c.prefix_len < 1)
        violations.push_back("prefix_len must be >= 1");
    else if (c.prefix_len >= n && n >= 2)
        violations.push_back("prefix_len must be < n");

    for (int i = 0; i < n; ++i) {
        if (trim(c.turns[i].text).empty())
            violations.push_back("turn " + std::to_string(i + 1) + " has empty text");
    }

    // Benign prefix: y({c_1..c_k}) = 0.
    const int k = std::min(c.prefix_len, n);
    for (int i = 0; i < k; ++i) {
        if (c.turns[i].is_derailment == true)
            violations.push_back("benign prefix violated at turn " + std::to_string(i + 1));
    }

    // Outcome consistency against per-turn flags, where flags are present. A single
    // flagged-true future turn forces derailed; benign can only be falsified when
    // every future turn carries a flag.
    if (c.prefix_len >= 1 && c.prefix_len < n) {
        bool any_future_true = false;
        bool all_future_flagged = true;
        for (int i = c.prefix_len; i < n; ++i) {
            if (c.turns[i].is_derailment == true)
                any_future_true = true;
            if (!c.turns[i].is_derailment.has_value())
                all_future_flagged = false;
        }
        if (any_future_true && c.outcome != Outcome::derailed)
            violations.push_back("outcome must be derailed: a post-prefix turn is flagged as derailment");
        if (all_future_flagged && !any_future_true && c.outcome == Outcome::derailed)
            violations.push_back("outcome must be benign: no post-prefix turn is flagged as derailment");
    }

    return violations;
}

std::vector<Turn> benign_prefix(const Conversation &c) {
    const auto violations = validate_conversation(c);
    if (!violations.empty()) {
        std::string msg = "invalid conversation '" + c.id + "':";
        for (const auto &v : violations)
            msg += " " + v + ";";
        throw ValidationError(msg);
    }
    return std::vector<Turn>(c.turns.begin(), c.turns.begin() + c.prefix_len);
}

nlohmann::ordered_json orientation_to_json(const OrientationLabel &label) {
    nlohmann::ordered_json j;
    j["power"] = to_keyword(label.power);
    j["benevolence"] = to_keyword(label.benevolence);
    j["arousal"] = to_keyword(label.arousal);
    j["political_leaning"] = to_keyword(label.political_leaning);
    return j;
}

OrientationLabel orientation_from_json(const nlohmann::json &j) {
    OrientationLabel label;
    const auto power = parse_power(j.at("power").get<std::string>());
    const auto benevolence = parse_benevolence(j.at("benevolence").get<std::string>());
    const auto arousal = parse_arousal(j.at("arousal").get<std::string>());
    const auto political = parse_political_leaning(j.at("political_leaning").get<std::string>());
    if (!power || !benevolence || !arousal || !political)
        throw ParseError("orientation label contains an unknown keyword: " + j.dump());
    label.power = *power;
    label.benevolence = *benevolence;
    label.arousal = *arousal;
    label.political_leaning = *political;
    return label;
}

nlohmann::ordered_json turn_to_json(const Turn &t) {
    nlohmann::ordered_json j;
    j["speaker"] = t.speaker;
    j["text"] = t.text;
    j["orientation"] = t.orientation ? orientation_to_json(*t.orientation) : nlohmann::ordered_json(nullptr);
    j["is_derailment"] = t.is_derailment ? nlohmann::ordered_json(*t.is_derailment) : nlohmann::ordered_json(nullptr);
    return j;
}

Turn turn_from_json(const nlohmann::json &j) {
    Turn t;
    t.speaker = j.at("speaker").get<std::string>();
    t.text = j.at("text").get<std::string>();
    if (j.contains("orientation") && !j.at("orientation").is_null())
        t.orientation = orientation_from_json(j.at("orientation"));
    if (j.contains("is_derailment") && !j.at("is_derailment").is_null())
        t.is_derailment = j.at("is_derailment").get<bool>();
    return t;
}

nlohmann::ordered_json conversation_to_json(const Conversation &c) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["source"] = to_string(c.source);
    j["prefix_len"] = c.prefix_len;
    j["outcome"] = to_string(c.outcome);
    j["turns"] = nlohmann::ordered_json::array();
    for (const auto &t : c.turns)
        j["turns"].push_back(turn_to_json(t));
    return j;
}

Conversation conversation_from_json(const nlohmann::json &j) {
    Conversation c;
    c.id = j.at("id").get<std::string>();
    const auto source = parse_source(j.at("source").get<std::string>());
    if (!source)
        throw ParseError("unknown source '" + j.at("source").get<std::string>() + "'");
    c.source = *source;
    c.prefix_len = j.at("prefix_len").get<int>();
    const auto outcome = parse_outcome(j.at("outcome").get<std::string>());
    if (!outcome)
        throw ParseError("unknown outcome '" + j.at("outcome").get<std::string>() + "'");
    c.outcome = *outcome;
    for (const auto &tj : j.at("turns"))
        c.turns.push_back(turn_from_json(tj));
    return c;
}

} // namespace derail
