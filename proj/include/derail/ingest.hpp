// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "derail/core.hpp"

namespace derail {

enum class Split { train, validation, test, unsplit };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct Dataset {
    std::string name;
    Split split = Split::unsplit;
    std::vector<Conversation> conversations;
};

// Seeded 8:1:1-style split. Ratios must be positive and sum to 1 within 1e-9.
struct SplitSpec {
    double train_ratio = 0.8;
    double validation_ratio = 0.1;
    double test_ratio = 0.1;
    uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

struct LoadReport {
    int kept = 0;
    int skipped = 0;
    std::vector<std::string> warnings;
    std::map<std::string, int> class_balance;        // outcome -> count
    std::map<int, int> turn_count_histogram;         // post-filter turn count -> conversations

    nlohmann::ordered_json to_json() const;
};

// --------------------------------------------------------------------------
// Source-corpus adapters. The distributed corpora have no single canonical
// on-disk schema, so each adapter documents the JSONL shape it consumes; the
// bundled fixtures define the tested contract.
//
// CGA-Wiki adapter, one conversation per line:
//   {"id": str, "split": "train"|"validation"|"test", "derailed": bool,
//    "turns": [{"speaker": str, "text": str}, ...]}
// Section-header pseudo-turns (text fully enclosed in "==" markers) are
// removed. After filtering, prefix_len = n-1 and only the final turn carries
// the derailment flag. Conversations reduced below 2 turns are skipped with a
// warning.
//
// BNC adapter, one conversation per line:
//   {"id": str, "ad_hominem": bool,
//    "turns": [{"speaker": str, "text": str} x 4]}
// Every record must have exactly 4 turns; prefix_len = 3; outcome is derailed
// iff the 4th turn is the moderator-flagged ad hominem reply.
// --------------------------------------------------------------------------

std::map<Split, Dataset> load_cga_wiki(const std::string &path, LoadReport *report = nullptr);

Dataset load_bnc(const std::string &path, LoadReport *report = nullptr);

// Deterministic partition: ids are sorted before the seeded shuffle, so the
// result does not depend on input file order. Floor rounding for validation
// and test; the remainder goes to train.
std::map<Split, Dataset> split_dataset(const Dataset &d, const SplitSpec &spec);

// Canonical JSONL round-trip.
Dataset load_canonical_jsonl(const std::string &path, const std::string &name = "",
                             Split split = Split::unsplit);
void save_canonical_jsonl(const Dataset &d, const std::string &path);

} // namespace derail
