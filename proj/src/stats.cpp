// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#include "derail/stats.hpp"

#include <cmath>
#include <limits>

#include "derail/errors.hpp"
#include "derail/rng.hpp"

namespace derail {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Series expansion of the regularized lower incomplete gamma P(a, x).
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15)
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for the regularized upper incomplete gamma Q(a, x).
double gamma_q_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15)
            break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double regularized_gamma_q(double a, double x) {
    if (x < 0 || a <= 0)
        throw ArgumentError("regularized_gamma_q: requires x >= 0 and a > 0");
    if (x == 0)
        return 1.0;
    if (x < a + 1.0)
        return 1.0 - gamma_p_series(a, x);
    return gamma_q_fraction(a, x);
}

double chi_square_sf(double x, int df) {
    if (df <= 0)
        throw ArgumentError("chi_square_sf: df must be positive");
    if (x <= 0)
        return 1.0;
    return regularized_gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

double exact_majority_accuracy(double p, int L) {
    if (L < 1 || L % 2 == 0)
        throw ArgumentError("exact_majority_accuracy: L must be odd and positive");
    if (p < 0 || p > 1)
        throw ArgumentError("exact_majority_accuracy: p must be in [0,1]");

    const int need = (L + 1) / 2;
    double total = 0.0;
    double binom = 1.0; // C(L, j), updated incrementally
    for (int j = 0; j <= L; ++j) {
        if (j >= need)
            total += binom * std::pow(p, j) * std::pow(1.0 - p, L - j);
        binom = binom * static_cast<double>(L - j) / static_cast<double>(j + 1);
    }
    return total;
}

double simulate_majority_accuracy(double p, int L, int trials, uint64_t seed) {
    if (L < 1 || L % 2 == 0)
        throw ArgumentError("simulate_majority_accuracy: L must be odd and positive");
    if (trials < 1)
        throw ArgumentError("simulate_majority_accuracy: trials must be positive");

    Rng rng(seed);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        int correct = 0;
        for (int i = 0; i < L; ++i)
            correct += rng.next_double() < p ? 1 : 0;
        hits += correct > L / 2 ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

} // namespace derail
