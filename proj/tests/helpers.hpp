// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "derail/core.hpp"
#include "derail/rng.hpp"

namespace derail::testing {

inline Turn turn(std::string speaker, std::string text) {
    return Turn{std::move(speaker), std::move(text), std::nullopt, std::nullopt};
}

// A valid conversation: benign prefix, final turn flagged per outcome.
inline Conversation simple_conversation(const std::string &id, int n_turns, int prefix_len,
                                        bool derailed) {
    Conversation c;
    c.id = id;
    c.prefix_len = prefix_len;
    c.outcome = derailed ? Outcome::derailed : Outcome::benign;
    c.source = Source::synthetic;
    for (int i = 0; i < n_turns; ++i)
        c.turns.push_back(turn(i % 2 ? "ben" : "alice", "turn text " + std::to_string(i + 1)));
    c.turns.back().is_derailment = derailed;
    return c;
}

inline OrientationLabel random_label(Rng &rng) {
    OrientationLabel label;
    label.power = static_cast<Power>(rng.next_index(5));
    label.benevolence = static_cast<Benevolence>(rng.next_index(5));
    label.arousal = static_cast<Arousal>(rng.next_index(3));
    label.political_leaning = static_cast<PoliticalLeaning>(rng.next_index(3));
    return label;
}

inline std::string random_word(Rng &rng) {
    static const std::vector<std::string> pool = {"hello", "there", "what", "do",   "you",  "think",
                                                  "about", "this",  "page", "edit", "sure", "maybe",
                                                  "fine",  "right", "ok",   "hmm"};
    return pool[rng.next_index(pool.size())];
}

inline std::string random_text(Rng &rng, int min_words = 1, int max_words = 6) {
    const int n = min_words + static_cast<int>(rng.next_index(max_words - min_words + 1));
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i)
            out += ' ';
        out += random_word(rng);
    }
    return out;
}

inline Conversation random_conversation(const std::string &id, Rng &rng, bool with_labels = false) {
    const int n = 2 + static_cast<int>(rng.next_index(6));
    Conversation c;
    c.id = id;
    c.prefix_len = 1 + static_cast<int>(rng.next_index(n - 1));
    const bool derailed = rng.next_double() < 0.5;
    c.outcome = derailed ? Outcome::derailed : Outcome::benign;
    c.source = Source::synthetic;
    for (int i = 0; i < n; ++i) {
        Turn t = turn(rng.next_double() < 0.5 ? "alice" : "ben", random_text(rng));
        if (with_labels)
            t.orientation = random_label(rng);
        c.turns.push_back(std::move(t));
    }
    c.turns.back().is_derailment = derailed;
    return c;
}

} // namespace derail::testing
