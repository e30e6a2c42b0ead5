// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "derail/core.hpp"
#include "derail/errors.hpp"
#include "helpers.hpp"

using namespace derail;
using namespace derail::testing;

namespace {

bool has_violation(const std::vector<std::string> &violations, const std::string &needle) {
    for (const auto &v : violations)
        if (v.find(needle) != std::string::npos)
            return true;
    return false;
}

} // namespace

TEST_CASE("keyword tables round-trip and normalize") {
    CHECK(to_keyword(Power::open_minded) == "open_minded");
    CHECK(parse_power("Open-minded") == Power::open_minded);
    CHECK(parse_power("OPEN_MINDED") == Power::open_minded);
    CHECK(parse_benevolence("Supportive") == Benevolence::supportive);
    CHECK(parse_arousal("calm") == Arousal::calm);
    CHECK(parse_political_leaning("Conservative") == PoliticalLeaning::conservative);
    CHECK_FALSE(parse_power("Happy").has_value());
    // "neutral" is a member of every axis; position, not spelling, disambiguates.
    CHECK(parse_power("neutral") == Power::neutral);
    CHECK(parse_benevolence("neutral") == Benevolence::neutral);
    CHECK(parse_arousal("neutral") == Arousal::neutral);
    CHECK(parse_political_leaning("neutral") == PoliticalLeaning::neutral);
}

TEST_CASE("validate_conversation accepts a well-formed conversation") {
    const auto c = simple_conversation("c1", 4, 3, true);
    CHECK(validate_conversation(c).empty());
}

TEST_CASE("validate_conversation rejects prefix_len = n") {
    auto c = simple_conversation("c2", 4, 3, false);
    c.prefix_len = 4;
    CHECK(has_violation(validate_conversation(c), "prefix_len must be < n"));
}

TEST_CASE("validate_conversation rejects a flagged turn inside the prefix") {
    auto c = simple_conversation("c3", 4, 3, true);
    c.turns[1].is_derailment = true;
    CHECK(has_violation(validate_conversation(c), "benign prefix violated at turn 2"));
}

TEST_CASE("validate_conversation checks outcome against future flags") {
    auto c = simple_conversation("c4", 4, 3, true);
    c.outcome = Outcome::benign;
    CHECK(has_violation(validate_conversation(c), "outcome must be derailed"));

    auto b = simple_conversation("c5", 4, 3, false);
    b.outcome = Outcome::derailed;
    CHECK(has_violation(validate_conversation(b), "outcome must be benign"));

    // Unflagged future turns leave the outcome unconstrained.
    auto open = simple_conversation("c6", 4, 3, false);
    open.turns.back().is_derailment.reset();
    open.outcome = Outcome::derailed;
    CHECK(validate_conversation(open).empty());
}

TEST_CASE("validate_conversation rejects empty turn text") {
    auto c = simple_conversation("c7", 4, 3, false);
    c.turns[2].text = "   \t ";
    CHECK(has_violation(validate_conversation(c), "turn 3 has empty text"));
}

TEST_CASE("benign_prefix returns the first prefix_len turns") {
    const auto six = simple_conversation("c8", 6, 5, false);
    const auto prefix = benign_prefix(six);
    REQUIRE(prefix.size() == 5);
    for (size_t i = 0; i < prefix.size(); ++i)
        CHECK(prefix[i] == six.turns[i]);

    const auto bnc_style = simple_conversation("c9", 4, 3, true);
    CHECK(benign_prefix(bnc_style).size() == 3);

    const auto boundary = simple_conversation("c10", 3, 1, false);
    const auto one = benign_prefix(boundary);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == boundary.turns[0]);
}

TEST_CASE("benign_prefix rejects invalid conversations") {
    auto c = simple_conversation("c11", 4, 3, false);
    c.prefix_len = 9;
    CHECK_THROWS_AS(benign_prefix(c), ValidationError);
}

TEST_CASE("benign_prefix never contains a derailment-flagged turn") {
    Rng rng(1234);
    for (int i = 0; i < 200; ++i) {
        const auto c = random_conversation("r" + std::to_string(i), rng);
        REQUIRE(validate_conversation(c).empty());
        for (const auto &t : benign_prefix(c))
            CHECK(t.is_derailment != true);
    }
}

TEST_CASE("conversation JSON round-trip is lossless") {
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        const auto c = random_conversation("j" + std::to_string(i), rng, i % 2 == 0);
        const auto j = conversation_to_json(c);
        const auto back = conversation_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back == c);
    }
}

TEST_CASE("conversation JSON rejects unknown enum strings") {
    auto j = conversation_to_json(simple_conversation("c12", 3, 2, false));
    j["outcome"] = "maybe";
    CHECK_THROWS_AS(conversation_from_json(j), ParseError);
    auto j2 = conversation_to_json(simple_conversation("c13", 3, 2, false));
    j2["turns"][0]["orientation"] = {{"power", "happy"},
                                     {"benevolence", "neutral"},
                                     {"arousal", "calm"},
                                     {"political_leaning", "neutral"}};
    CHECK_THROWS_AS(conversation_from_json(j2), ParseError);
}
