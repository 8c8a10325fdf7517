// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

namespace parley::stats {

struct Group {
    std::string label;
    std::vector<double> values;
};

using GroupedSamples = std::vector<Group>;

struct TestResult {
    double statistic = 0.0;
    int degrees_of_freedom = 0;
    double p_value = 1.0;
};

struct PairwiseResult {
    std::string first;
    std::string second;
    double z = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
};

enum class Correction { Bonferroni };

/// Midranks (1-based) of values, ties sharing the average of their positions.
std::vector<double> midranks(std::span<const double> values);

/// Sum over tie groups of t^3 - t.
double tie_term(std::span<const double> values);

/// Tie-corrected H with a chi-squared(g - 1) p-value.
/// Throws std::invalid_argument for fewer than two groups, an empty group,
/// non-finite data or fewer than three observations, and NotApplicable when
/// every observation is identical.
TestResult kruskal_wallis(const GroupedSamples& samples);

/// Pairwise z from mean-rank differences with tie-corrected variance, two-sided
/// normal p-values, adjusted over all g(g-1)/2 pairs. Pairs are (i, j), i < j,
/// in group order; z is positive when group i ranks higher.
std::vector<PairwiseResult> dunn_test(const GroupedSamples& samples, Correction correction = Correction::Bonferroni);

/// min(1, p * m) for each p.
std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m);

/// Upper tail of chi-squared with df degrees of freedom.
double chi_squared_sf(double x, int df);

/// Upper tail of the standard normal.
double normal_sf(double z);

} // namespace parley::stats
