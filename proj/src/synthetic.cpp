// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/synthetic.hpp"

#include "derail/rng.hpp"

namespace derail {

namespace {

// Word pools are disjoint across roles so bigram chains cannot cross between
// prefix filler, derailed futures, and benign futures.
const std::vector<std::string> kPrefixPool = {
    "lets", "talk",  "about",   "page", "edits",   "maybe", "review", "draft",  "again",
    "sources", "cited", "section", "needs", "revision", "plan",  "update", "soon",
};

const std::vector<std::string> kDerailTailPool = {
    "you", "are", "all", "trolls", "this", "thread", "is", "garbage", "nonsense", "ranting", "mess",
};

const std::vector<std::string> kBenignTailPool = {
    "thanks", "for", "sharing", "kind", "words", "appreciate", "helpful", "points", "agreed", "friends",
};

std::string words_from(const std::vector<std::string> &pool, int count, Rng &rng) {
    std::string out;
    for (int i = 0; i < count; ++i) {
        if (i)
            out += ' ';
        out += pool[static_cast<size_t>(rng.next_index(pool.size()))];
    }
    return out;
}

Conversation make_member(const std::string &id, bool derailed, const std::vector<std::string> &filler,
                         Rng &rng) {
    Conversation c;
    c.id = id;
    c.source = Source::synthetic;
    c.outcome = derailed ? Outcome::derailed : Outcome::benign;
    c.prefix_len = 4;

    const char *speakers[4] = {"alice", "ben", "alice", "ben"};
    for (int i = 0; i < 4; ++i) {
        Turn t;
        t.speaker = speakers[i];
        t.text = filler[static_cast<size_t>(i)];
        if (i == 3)
            t.text += derailed ? " omega!" : " omega.";
        c.turns.push_back(std::move(t));
    }

    Turn future;
    future.speaker = derailed ? "carl" : "dana";
    future.text = std::string(derailed ? kDerailTrigger : kBenignTrigger) + " " +
                  words_from(derailed ? kDerailTailPool : kBenignTailPool, 2 + static_cast<int>(rng.next_index(4)), rng);
    future.is_derailment = derailed;
    c.turns.push_back(std::move(future));
    return c;
}

void add_pairs(Dataset &d, const std::string &prefix, int pairs, Rng &rng) {
    for (int i = 0; i < pairs; ++i) {
        // The pair shares one prefix draw; only punctuation and future differ.
        std::vector<std::string> filler;
        for (int t = 0; t < 4; ++t)
            filler.push_back(words_from(kPrefixPool, 3 + static_cast<int>(rng.next_index(3)), rng));

        char idbuf[64];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", prefix.c_str(), i);
        d.conversations.push_back(make_member(std::string(idbuf) + "-d", true, filler, rng));
        d.conversations.push_back(make_member(std::string(idbuf) + "-b", false, filler, rng));
    }
}

} // namespace

std::map<Split, Dataset> make_planted_corpus(const PlantedCorpusSpec &spec) {
    Rng rng(spec.seed);
    std::map<Split, Dataset> out;
    const std::vector<std::pair<Split, int>> plan = {
        {Split::train, spec.train_pairs},
        {Split::validation, spec.validation_pairs},
        {Split::test, spec.test_pairs},
    };
    for (const auto &[split, pairs] : plan) {
        Dataset d;
        d.name = "planted";
        d.split = split;
        add_pairs(d, "syn-" + std::string(to_string(split)), pairs, rng);
        out[split] = std::move(d);
    }
    return out;
}

SerializationScheme planted_scheme() {
    SerializationScheme scheme;
    scheme.include_orientation = false;
    scheme.turn_delimiter = "\n";
    return scheme;
}

GenerationParams planted_generation_params() {
    GenerationParams params;
    params.max_new_tokens = 12;
    return params;
}

} // namespace derail
