// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "derail/errors.hpp"
#include "derail/rng.hpp"

namespace derail {

namespace {

// A section header is a pseudo-turn like "== Good work! ==" with no actual content.
bool is_section_header(const std::string &text) {
    const std::string t = trim(text);
    return t.size() >= 4 && t.substr(0, 2) == "==" && t.substr(t.size() - 2) == "==";
}

nlohmann::json parse_line(const std::string &line, const std::string &path, int line_no) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
}

std::vector<std::string> read_nonempty_lines(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

void record_kept(LoadReport &report, const Conversation &c) {
    ++report.kept;
    ++report.class_balance[std::string(to_string(c.outcome))];
    ++report.turn_count_histogram[static_cast<int>(c.turns.size())];
}

void check_valid(const Conversation &c, const std::string &path, int line_no) {
    const auto violations = validate_conversation(c);
    if (!violations.empty()) {
        std::string msg = path + ":" + std::to_string(line_no) + ": conversation '" + c.id + "' invalid:";
        for (const auto &v : violations)
            msg += " " + v + ";";
        throw ParseError(msg);
    }
}

} // namespace

std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unsplit: return "unsplit";
    }
    return "";
}

std::optional<Split> parse_split(std::string_view s) {
    if (s == "train")
        return Split::train;
    if (s == "validation")
        return Split::validation;
    if (s == "test")
        return Split::test;
    if (s == "unsplit")
        return Split::unsplit;
    return std::nullopt;
}

void SplitSpec::validate() const {
    if (train_ratio <= 0 || validation_ratio <= 0 || test_ratio <= 0)
        throw ConfigError("split ratios must all be positive");
    if (std::abs(train_ratio + validation_ratio + test_ratio - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
}

nlohmann::ordered_json LoadReport::to_json() const {
    nlohmann::ordered_json j;
    j["kept"] = kept;
    j["skipped"] = skipped;
    j["class_balance"] = class_balance;
    nlohmann::ordered_json hist;
    for (const auto &[turns, count] : turn_count_histogram)
        hist[std::to_string(turns)] = count;
    j["turn_count_histogram"] = hist;
    j["warnings"] = warnings;
    return j;
}

std::map<Split, Dataset> load_cga_wiki(const std::string &path, LoadReport *report) {
    LoadReport local;
    LoadReport &rep = report ? *report : local;

    std::map<Split, Dataset> result;
    for (Split s : {Split::train, Split::validation, Split::test}) {
        result[s].name = "cga_wiki";
        result[s].split = s;
    }
    std::set<std::string> seen_ids;

    const auto lines = read_nonempty_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty())
            continue;
        const int line_no = static_cast<int>(i) + 1;
        const auto j = parse_line(lines[i], path, line_no);

        Conversation c;
        try {
            c.id = j.at("id").get<std::string>();
            c.source = Source::cga_wiki;
            c.outcome = j.at("derailed").get<bool>() ? Outcome::derailed : Outcome::benign;
            for (const auto &tj : j.at("turns")) {
                Turn t;
                t.speaker = tj.at("speaker").get<std::string>();
                t.text = tj.at("text").get<std::string>();
                if (!is_section_header(t.text))
                    c.turns.push_back(std::move(t));
            }
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }

        if (c.turns.size() < 2) {
            ++rep.skipped;
            rep.warnings.push_back("skipped '" + c.id + "': fewer than 2 turns after header filtering");
            continue;
        }
        if (!seen_ids.insert(c.id).second)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate conversation id '" + c.id + "'");

        c.prefix_len = static_cast<int>(c.turns.size()) - 1;
        // The corpora label only the final turn.
        c.turns.back().is_derailment = (c.outcome == Outcome::derailed);

        const auto split_str = j.at("split").get<std::string>();
        const auto split = parse_split(split_str);
        if (!split || *split == Split::unsplit)
            throw ParseError(path + ":" + std::to_string(line_no) + ": unknown split '" + split_str + "'");

        check_valid(c, path, line_no);
        record_kept(rep, c);
        result[*split].conversations.push_back(std::move(c));
    }
    return result;
}

Dataset load_bnc(const std::string &path, LoadReport *report) {
    LoadReport local;
    LoadReport &rep = report ? *report : local;

    Dataset d;
    d.name = "bnc";
    d.split = Split::unsplit;
    std::set<std::string> seen_ids;

    const auto lines = read_nonempty_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty())
            continue;
        const int line_no = static_cast<int>(i) + 1;
        const auto j = parse_line(lines[i], path, line_no);

        Conversation c;
        try {
            c.id = j.at("id").get<std::string>();
            c.source = Source::bnc;
            const bool ad_hominem = j.at("ad_hominem").get<bool>();
            c.outcome = ad_hominem ? Outcome::derailed : Outcome::benign;
            for (const auto &tj : j.at("turns")) {
                Turn t;
                t.speaker = tj.at("speaker").get<std::string>();
                t.text = tj.at("text").get<std::string>();
                c.turns.push_back(std::move(t));
            }
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }

        if (c.turns.size() != 4)
            throw StructuralError(path + ":" + std::to_string(line_no) + ": conversation '" + c.id +
                                  "' has " + std::to_string(c.turns.size()) + " turns, expected 4");
        if (!seen_ids.insert(c.id).second)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate conversation id '" + c.id + "'");

        c.prefix_len = 3;
        c.turns.back().is_derailment = (c.outcome == Outcome::derailed);

        check_valid(c, path, line_no);
        record_kept(rep, c);
        d.conversations.push_back(std::move(c));
    }
    return d;
}

std::map<Split, Dataset> split_dataset(const Dataset &d, const SplitSpec &spec) {
    spec.validate();

    std::vector<size_t> order(d.conversations.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    // Sort by id so the partition is independent of input order, then shuffle.
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return d.conversations[a].id < d.conversations[b].id;
    });
    Rng rng(spec.seed);
    rng.shuffle(order);

    const size_t n = order.size();
    const size_t n_validation = static_cast<size_t>(std::floor(static_cast<double>(n) * spec.validation_ratio));
    const size_t n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * spec.test_ratio));
    const size_t n_train = n - n_validation - n_test;

    std::map<Split, Dataset> out;
    for (Split s : {Split::train, Split::validation, Split::test}) {
        out[s].name = d.name;
        out[s].split = s;
    }
    for (size_t i = 0; i < n; ++i) {
        Split s = Split::test;
        if (i < n_train)
            s = Split::train;
        else if (i < n_train + n_validation)
            s = Split::validation;
        out[s].conversations.push_back(d.conversations[order[i]]);
    }
    return out;
}

Dataset load_canonical_jsonl(const std::string &path, const std::string &name, Split split) {
    Dataset d;
    d.name = name.empty() ? path : name;
    d.split = split;

    const auto lines = read_nonempty_lines(path);
    std::set<std::string> seen_ids;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty())
            continue;
        const int line_no = static_cast<int>(i) + 1;
        const auto j = parse_line(lines[i], path, line_no);
        Conversation c;
        try {
            c = conversation_from_json(j);
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }
        if (!seen_ids.insert(c.id).second)
            throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate conversation id '" + c.id + "'");
        check_valid(c, path, line_no);
        d.conversations.push_back(std::move(c));
    }
    return d;
}

void save_canonical_jsonl(const Dataset &d, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    for (const auto &c : d.conversations)
        out << conversation_to_json(c).dump() << "\n";
}

} // namespace derail
