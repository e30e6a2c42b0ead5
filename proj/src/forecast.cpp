// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/forecast.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "derail/errors.hpp"

namespace derail {

std::string_view to_string(TieRule t) {
    return t == TieRule::predict_derailment ? "predict_derailment" : "predict_benign";
}

std::optional<TieRule> parse_tie_rule(std::string_view s) {
    if (s == "predict_derailment")
        return TieRule::predict_derailment;
    if (s == "predict_benign")
        return TieRule::predict_benign;
    return std::nullopt;
}

bool majority_vote(const std::vector<bool> &votes, TieRule tie_rule) {
    if (votes.empty())
        throw ArgumentError("majority_vote: empty vote list");
    size_t yes = 0;
    for (bool v : votes)
        yes += v ? 1 : 0;
    const size_t no = votes.size() - yes;
    if (yes > no)
        return true;
    if (no > yes)
        return false;
    return tie_rule == TieRule::predict_derailment;
}

namespace {

ForecastResult assemble_result(const Conversation &c, const std::vector<double> &probabilities,
                               const ForecastConfig &config) {
    ForecastResult r;
    r.conversation_id = c.id;
    r.probabilities = probabilities;
    r.threshold = config.threshold;
    r.tie_rule = config.tie_rule;
    for (double p : probabilities)
        r.votes.push_back(p >= config.threshold);
    if (config.average_probabilities) {
        double mean = 0.0;
        for (double p : probabilities)
            mean += p;
        mean /= static_cast<double>(probabilities.size());
        r.final = mean >= config.threshold;
    } else {
        r.final = majority_vote(r.votes, config.tie_rule);
    }
    return r;
}

} // namespace

ForecastResult forecast(const Conversation &c, int k, const GeneratorBackend &generator,
                        const ClassifierBackend &classifier, const ForecastConfig &config,
                        int *truncated_turns) {
    if (k < 0)
        k = c.prefix_len;
    const auto cs = sample_continuations(generator, c, k, config.L, config.params, config.scheme,
                                         config.seed, config.max_turns_cap);
    return forecast_from_continuations(c, cs, config.L, classifier, config, truncated_turns);
}

ForecastResult forecast_from_continuations(const Conversation &c, const ContinuationSet &cs, int L,
                                           const ClassifierBackend &classifier,
                                           const ForecastConfig &config, int *truncated_turns) {
    if (L < 1 || L > static_cast<int>(cs.continuations.size()))
        throw ArgumentError("forecast_from_continuations: L out of range");
    std::vector<double> probabilities;
    probabilities.reserve(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) {
        int truncated = 0;
        probabilities.push_back(score(classifier, c, cs.continuations[static_cast<size_t>(i)],
                                      config.scheme, cs.prefix_len, &truncated));
        if (truncated_turns)
            *truncated_turns += truncated;
    }
    return assemble_result(c, probabilities, config);
}

nlohmann::ordered_json BatchReport::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["derailment_rate"] = derailment_rate;
    nlohmann::ordered_json hist;
    for (const auto &[votes, count] : vote_histogram)
        hist[std::to_string(votes)] = count;
    j["vote_histogram"] = hist;
    j["truncated_turns"] = truncated_turns;
    nlohmann::ordered_json skips = nlohmann::ordered_json::array();
    for (const auto &[id, error] : skipped)
        skips.push_back({{"conversation_id", id}, {"error", error}});
    j["skipped"] = skips;
    return j;
}

std::vector<BatchEntry> forecast_batch(const Dataset &d, const GeneratorBackend &generator,
                                       const ClassifierBackend &classifier, const ForecastConfig &config,
                                       int k, BatchReport *report) {
    const size_t n = d.conversations.size();
    std::vector<std::optional<BatchEntry>> slots(n);
    std::vector<std::pair<std::string, std::string>> skipped;
    std::mutex skip_mutex;
    std::atomic<size_t> next{0};
    std::atomic<int> truncated_total{0};

    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            const Conversation &c = d.conversations[i];
            ForecastConfig item_config = config;
            item_config.seed = config.seed + static_cast<uint64_t>(i) * config.seed_stride;
            try {
                BatchEntry entry;
                int truncated = 0;
                entry.result = forecast(c, k, generator, classifier, item_config, &truncated);
                entry.gold = c.outcome;
                truncated_total += truncated;
                slots[i] = std::move(entry);
            } catch (const Error &e) {
                std::lock_guard<std::mutex> lock(skip_mutex);
                skipped.emplace_back(c.id, e.what());
            }
        }
    };

    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t)
            threads.emplace_back(worker);
        for (auto &t : threads)
            t.join();
    }

    std::vector<BatchEntry> entries;
    entries.reserve(n);
    for (auto &slot : slots)
        if (slot)
            entries.push_back(std::move(*slot));

    if (report) {
        report->n = static_cast<int>(entries.size());
        report->truncated_turns = truncated_total.load();
        report->skipped = skipped;
        int derailed = 0;
        for (const auto &e : entries) {
            int yes = 0;
            for (bool v : e.result.votes)
                yes += v ? 1 : 0;
            ++report->vote_histogram[yes];
            derailed += e.result.final ? 1 : 0;
        }
        report->derailment_rate =
            entries.empty() ? 0.0 : static_cast<double>(derailed) / static_cast<double>(entries.size());
    }
    return entries;
}

nlohmann::ordered_json batch_entry_to_json(const BatchEntry &entry, uint64_t seed) {
    nlohmann::ordered_json j;
    j["conversation_id"] = entry.result.conversation_id;
    j["probabilities"] = entry.result.probabilities;
    j["votes"] = entry.result.votes;
    j["final"] = entry.result.final;
    j["gold"] = to_string(entry.gold);
    j["L"] = entry.result.probabilities.size();
    j["seed"] = seed;
    return j;
}

void save_forecast_batch(const std::vector<BatchEntry> &entries, const ForecastConfig &config,
                         const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    for (size_t i = 0; i < entries.size(); ++i)
        out << batch_entry_to_json(entries[i], config.seed + static_cast<uint64_t>(i) * config.seed_stride)
                   .dump()
            << "\n";
}

std::vector<BatchEntry> load_forecast_batch(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    std::vector<BatchEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            BatchEntry e;
            e.result.conversation_id = j.at("conversation_id").get<std::string>();
            e.result.probabilities = j.at("probabilities").get<std::vector<double>>();
            e.result.votes = j.at("votes").get<std::vector<bool>>();
            e.result.final = j.at("final").get<bool>();
            const auto gold = parse_outcome(j.at("gold").get<std::string>());
            if (!gold)
                throw ParseError(path + ":" + std::to_string(line_no) + ": unknown gold outcome");
            e.gold = *gold;
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception &ex) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: " + ex.what());
        }
    }
    return entries;
}

} // namespace derail
