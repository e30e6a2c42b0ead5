// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "derail/errors.hpp"
#include "derail/ingest.hpp"
#include "helpers.hpp"

using namespace derail;
using namespace derail::testing;

namespace {

const std::string kFixtures = FIXTURES_DIR;

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string &path, const std::string &content) {
    std::ofstream out(path);
    out << content;
}

int total_size(const std::map<Split, Dataset> &splits) {
    int n = 0;
    for (const auto &[split, d] : splits)
        n += static_cast<int>(d.conversations.size());
    return n;
}

} // namespace

TEST_CASE("cga_wiki fixture loads 20 conversations with prefix_len = n-1") {
    LoadReport report;
    const auto splits = load_cga_wiki(kFixtures + "/cga_wiki_sample.jsonl", &report);
    CHECK(report.kept == 20);
    CHECK(report.skipped == 0);
    CHECK(total_size(splits) == 20);
    CHECK(splits.at(Split::train).conversations.size() == 16);
    CHECK(splits.at(Split::validation).conversations.size() == 2);
    CHECK(splits.at(Split::test).conversations.size() == 2);

    std::vector<int> counts;
    for (const auto &[split, d] : splits) {
        for (const auto &c : d.conversations) {
            CHECK(c.prefix_len == static_cast<int>(c.turns.size()) - 1);
            CHECK(validate_conversation(c).empty());
            CHECK(c.source == Source::cga_wiki);
            counts.push_back(static_cast<int>(c.turns.size()));
        }
    }
    std::sort(counts.begin(), counts.end());
    CHECK(counts.front() >= 3);
    CHECK(counts.back() <= 19);
    const double median = (counts[9] + counts[10]) / 2.0;
    CHECK(median == doctest::Approx(6.0));
}

TEST_CASE("cga_wiki loader removes section-header pseudo-turns") {
    const auto splits = load_cga_wiki(kFixtures + "/cga_wiki_sample.jsonl");
    // cga-0001 carries a "== Good work! ==" line in the raw record.
    for (const auto &[split, d] : splits) {
        for (const auto &c : d.conversations) {
            for (const auto &t : c.turns) {
                const std::string txt = trim(t.text);
                CHECK_FALSE((txt.rfind("==", 0) == 0 && txt.size() > 2 &&
                             txt.substr(txt.size() - 2) == "=="));
            }
        }
    }
}

TEST_CASE("cga_wiki loader skips conversations reduced below 2 turns") {
    const std::string path = temp_path("cga_skip_test.jsonl");
    write_file(path,
               R"({"id": "a", "split": "train", "derailed": false, "turns": [{"speaker": "u", "text": "== h =="}, {"speaker": "u", "text": "only real turn"}]})"
               "\n"
               R"({"id": "b", "split": "train", "derailed": true, "turns": [{"speaker": "u", "text": "one"}, {"speaker": "v", "text": "two"}, {"speaker": "u", "text": "three"}]})"
               "\n");
    LoadReport report;
    const auto splits = load_cga_wiki(path, &report);
    CHECK(report.kept == 1);
    CHECK(report.skipped == 1);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("'a'") != std::string::npos);
    CHECK(splits.at(Split::train).conversations.size() == 1);
    std::remove(path.c_str());
}

TEST_CASE("cga_wiki loader reports parse errors with line numbers") {
    const std::string path = temp_path("cga_parse_test.jsonl");
    write_file(path, "{\"id\": \"ok\"\nnot json at all\n");
    try {
        load_cga_wiki(path);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("bnc fixture loads 20 conversations with n=4 and prefix_len=3") {
    LoadReport report;
    const auto d = load_bnc(kFixtures + "/bnc_sample.jsonl", &report);
    CHECK(d.conversations.size() == 20);
    CHECK(report.kept == 20);
    CHECK(report.class_balance.at("derailed") == 10);
    CHECK(report.class_balance.at("benign") == 10);
    for (const auto &c : d.conversations) {
        CHECK(c.turns.size() == 4);
        CHECK(c.prefix_len == 3);
        CHECK(c.source == Source::bnc);
        CHECK(validate_conversation(c).empty());
        CHECK(c.turns.back().is_derailment == (c.outcome == Outcome::derailed));
    }
}

TEST_CASE("bnc loader rejects records with the wrong turn count") {
    const std::string path = temp_path("bnc_bad_test.jsonl");
    std::string record = R"({"id": "x", "ad_hominem": false, "turns": [)";
    for (int i = 0; i < 5; ++i) {
        if (i)
            record += ",";
        record += R"({"speaker": "s", "text": "t)" + std::to_string(i) + "\"}";
    }
    record += "]}";
    write_file(path, record + "\n");
    CHECK_THROWS_AS(load_bnc(path), StructuralError);
    std::remove(path.c_str());
}

TEST_CASE("split_dataset sizes follow floor rounding with remainder to train") {
    SplitSpec spec;
    spec.seed = 7;

    Dataset d100;
    d100.name = "d100";
    for (int i = 0; i < 100; ++i)
        d100.conversations.push_back(simple_conversation("c" + std::to_string(i), 4, 3, i % 2 == 0));
    auto splits = split_dataset(d100, spec);
    CHECK(splits.at(Split::train).conversations.size() == 80);
    CHECK(splits.at(Split::validation).conversations.size() == 10);
    CHECK(splits.at(Split::test).conversations.size() == 10);

    Dataset d103;
    d103.name = "d103";
    for (int i = 0; i < 103; ++i)
        d103.conversations.push_back(simple_conversation("c" + std::to_string(i), 4, 3, i % 2 == 0));
    splits = split_dataset(d103, spec);
    CHECK(splits.at(Split::train).conversations.size() == 83);
    CHECK(splits.at(Split::validation).conversations.size() == 10);
    CHECK(splits.at(Split::test).conversations.size() == 10);
}

TEST_CASE("split_dataset is a disjoint cover and input-order insensitive") {
    Rng rng(42);
    Dataset d;
    d.name = "cover";
    for (int i = 0; i < 53; ++i)
        d.conversations.push_back(random_conversation("conv-" + std::to_string(i), rng));

    SplitSpec spec;
    spec.seed = 99;
    const auto splits = split_dataset(d, spec);

    std::set<std::string> all_ids;
    int total = 0;
    for (const auto &[split, part] : splits) {
        for (const auto &c : part.conversations) {
            CHECK(all_ids.insert(c.id).second); // pairwise disjoint
            ++total;
        }
    }
    CHECK(total == 53);

    // Same seed, shuffled input order: identical membership per split.
    Dataset shuffled = d;
    Rng perm(5);
    perm.shuffle(shuffled.conversations);
    const auto splits2 = split_dataset(shuffled, spec);
    for (const auto &[split, part] : splits) {
        std::set<std::string> a, b;
        for (const auto &c : part.conversations)
            a.insert(c.id);
        for (const auto &c : splits2.at(split).conversations)
            b.insert(c.id);
        CHECK(a == b);
    }
}

TEST_CASE("split_dataset rejects bad ratio triples") {
    SplitSpec spec;
    spec.train_ratio = 0.7;
    Dataset d;
    d.conversations.push_back(simple_conversation("c", 4, 3, false));
    CHECK_THROWS_AS(split_dataset(d, spec), ConfigError);
    spec = SplitSpec{};
    spec.validation_ratio = 0.0;
    spec.train_ratio = 0.9;
    CHECK_THROWS_AS(split_dataset(d, spec), ConfigError);
}

TEST_CASE("canonical JSONL round-trip preserves loaded datasets") {
    const auto original = load_bnc(kFixtures + "/bnc_sample.jsonl");
    const std::string path = temp_path("bnc_roundtrip.jsonl");
    save_canonical_jsonl(original, path);
    const auto reloaded = load_canonical_jsonl(path, original.name, original.split);
    REQUIRE(reloaded.conversations.size() == original.conversations.size());
    for (size_t i = 0; i < original.conversations.size(); ++i)
        CHECK(reloaded.conversations[i] == original.conversations[i]);
    std::remove(path.c_str());
}

TEST_CASE("canonical loader rejects invalid conversations") {
    const std::string path = temp_path("invalid_canonical.jsonl");
    Conversation bad = simple_conversation("bad", 4, 3, true);
    bad.prefix_len = 4; // violates k < n
    write_file(path, conversation_to_json(bad).dump() + "\n");
    CHECK_THROWS_AS(load_canonical_jsonl(path), ParseError);
    std::remove(path.c_str());
}
