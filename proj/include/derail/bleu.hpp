// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "derail/core.hpp"
#include "derail/generator.hpp"

namespace derail {

struct BleuOptions {
    int max_ngram = 4;
    // Additive smoothing: a zero clipped count at order n contributes
    // epsilon / total_n instead of zero.
    double smoothing_epsilon = 0.1;
};

// BLEU of one hypothesis against multiple references: clipped n-gram precision
// up to max_ngram with additive smoothing on zero counts and the
// closest-reference-length brevity penalty (ties break toward the shorter
// reference). An empty hypothesis scores 0.
double multi_reference_bleu(const std::vector<std::string> &hypothesis,
                            const std::vector<std::vector<std::string>> &references,
                            const BleuOptions &options = {});

// Token stream of a continuation: whitespace tokens of the turn texts, in order.
std::vector<std::string> continuation_tokens(const std::vector<Turn> &turns);

// Leave-one-out self-BLEU over the L continuations of one conversation: each
// continuation in turn is the hypothesis against the remaining L-1 as
// references; the L scores are averaged. Lower means more diverse.
double bleu_self_diversity(const ContinuationSet &cs, int max_ngram = 4);

} // namespace derail
