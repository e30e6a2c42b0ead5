// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "derail/backend.hpp"
#include "derail/errors.hpp"

namespace derail {

namespace {

// n-gram keyed by its tokens joined with an unlikely separator.
std::map<std::string, int> ngram_counts(const std::vector<std::string> &tokens, int n) {
    std::map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < n)
        return counts;
    for (size_t start = 0; start + static_cast<size_t>(n) <= tokens.size(); ++start) {
        std::string key;
        for (int i = 0; i < n; ++i) {
            if (i)
                key.push_back('\x1f');
            key += tokens[start + static_cast<size_t>(i)];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

double multi_reference_bleu(const std::vector<std::string> &hypothesis,
                            const std::vector<std::vector<std::string>> &references,
                            const BleuOptions &options) {
    if (options.max_ngram < 1)
        throw ArgumentError("multi_reference_bleu: max_ngram must be >= 1");
    if (references.empty())
        throw ArgumentError("multi_reference_bleu: at least one reference required");
    const size_t hyp_len = hypothesis.size();
    if (hyp_len == 0)
        return 0.0;

    // Closest reference length; ties prefer the shorter reference.
    size_t closest = references.front().size();
    for (const auto &ref : references) {
        const auto diff = [&](size_t len) {
            return len > hyp_len ? len - hyp_len : hyp_len - len;
        };
        if (diff(ref.size()) < diff(closest) || (diff(ref.size()) == diff(closest) && ref.size() < closest))
            closest = ref.size();
    }

    double log_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= options.max_ngram; ++n) {
        const auto hyp_counts = ngram_counts(hypothesis, n);
        int total = 0;
        for (const auto &[key, count] : hyp_counts)
            total += count;
        if (total == 0)
            continue; // hypothesis shorter than n

        std::map<std::string, int> max_ref_counts;
        for (const auto &ref : references) {
            for (const auto &[key, count] : ngram_counts(ref, n)) {
                auto it = max_ref_counts.find(key);
                if (it == max_ref_counts.end())
                    max_ref_counts[key] = count;
                else
                    it->second = std::max(it->second, count);
            }
        }

        int correct = 0;
        for (const auto &[key, count] : hyp_counts) {
            auto it = max_ref_counts.find(key);
            if (it != max_ref_counts.end())
                correct += std::min(count, it->second);
        }

        const double precision = correct > 0
                                     ? static_cast<double>(correct) / static_cast<double>(total)
                                     : options.smoothing_epsilon / static_cast<double>(total);
        log_sum += std::log(precision);
        ++orders;
    }
    if (orders == 0)
        return 0.0;

    double brevity = 1.0;
    if (hyp_len < closest)
        brevity = std::exp(1.0 - static_cast<double>(closest) / static_cast<double>(hyp_len));
    return brevity * std::exp(log_sum / static_cast<double>(orders));
}

std::vector<std::string> continuation_tokens(const std::vector<Turn> &turns) {
    std::vector<std::string> tokens;
    for (const auto &t : turns) {
        auto words = split_whitespace(t.text);
        tokens.insert(tokens.end(), words.begin(), words.end());
    }
    return tokens;
}

double bleu_self_diversity(const ContinuationSet &cs, int max_ngram) {
    const size_t L = cs.continuations.size();
    if (L < 2)
        throw ArgumentError("bleu_self_diversity: at least 2 continuations required");

    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(L);
    for (const auto &turns : cs.continuations)
        token_lists.push_back(continuation_tokens(turns));

    BleuOptions options;
    options.max_ngram = max_ngram;

    double total = 0.0;
    for (size_t held_out = 0; held_out < L; ++held_out) {
        std::vector<std::vector<std::string>> references;
        references.reserve(L - 1);
        for (size_t i = 0; i < L; ++i)
            if (i != held_out)
                references.push_back(token_lists[i]);
        total += multi_reference_bleu(token_lists[held_out], references, options);
    }
    return total / static_cast<double>(L);
}

} // namespace derail
