// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace derail {

// Standard normal CDF.
double normal_cdf(double z);

// Upper-tail probability of a chi-square variable with df degrees of freedom.
double chi_square_sf(double x, int df);

// Regularized upper incomplete gamma Q(a, x), series/continued-fraction split.
double regularized_gamma_q(double a, double x);

// P(majority of L i.i.d. votes is correct) when each vote is correct with
// probability p. L must be odd so no tie is possible.
double exact_majority_accuracy(double p, int L);

// Monte Carlo estimate of the same quantity.
double simulate_majority_accuracy(double p, int L, int trials, uint64_t seed);

} // namespace derail
