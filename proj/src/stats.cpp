// SPDX-License-Identifier: Apache-2.0
#include "parley/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "parley/error.hpp"

namespace parley::stats {

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]])
            ++j;
        // Positions i..j (0-based) share rank ((i+1) + (j+1)) / 2.
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double tie_term(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i])
            ++j;
        const auto t = static_cast<double>(j - i);
        total += t * t * t - t;
        i = j;
    }
    return total;
}

namespace {

struct RankSummary {
    double n_total = 0.0;
    std::vector<double> sizes;
    std::vector<double> mean_ranks;
    double ties = 0.0;
};

RankSummary summarize(const GroupedSamples& samples) {
    if (samples.size() < 2) throw std::invalid_argument("at least two groups are required");
    std::vector<double> pooled;
    for (const auto& g : samples) {
        if (g.values.empty()) throw std::invalid_argument("group '" + g.label + "' is empty");
        for (double v : g.values) {
            if (!std::isfinite(v)) throw std::invalid_argument("group '" + g.label + "' has a non-finite value");
            pooled.push_back(v);
        }
    }
    if (pooled.size() < 3) throw std::invalid_argument("at least three observations are required");
    if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); }))
        throw NotApplicable("all observations are identical");

    const auto ranks = midranks(pooled);
    RankSummary s;
    s.n_total = static_cast<double>(pooled.size());
    s.ties = tie_term(pooled);
    std::size_t offset = 0;
    for (const auto& g : samples) {
        double sum = 0.0;
        for (std::size_t k = 0; k < g.values.size(); ++k)
            sum += ranks[offset + k];
        offset += g.values.size();
        const auto n = static_cast<double>(g.values.size());
        s.sizes.push_back(n);
        s.mean_ranks.push_back(sum / n);
    }
    return s;
}

} // namespace

TestResult kruskal_wallis(const GroupedSamples& samples) {
    const auto s = summarize(samples);
    const double n = s.n_total;
    const double centre = (n + 1.0) / 2.0;
    // Deviation form: exactly zero when every mean rank sits at the centre.
    double spread = 0.0;
    for (std::size_t i = 0; i < s.sizes.size(); ++i) {
        const double d = s.mean_ranks[i] - centre;
        spread += s.sizes[i] * d * d;
    }
    const double h_raw = 12.0 / (n * (n + 1.0)) * spread;
    const double correction = 1.0 - s.ties / (n * n * n - n);
    TestResult r;
    r.degrees_of_freedom = static_cast<int>(samples.size()) - 1;
    r.statistic = h_raw / correction;
    r.p_value = chi_squared_sf(r.statistic, r.degrees_of_freedom);
    return r;
}

std::vector<PairwiseResult> dunn_test(const GroupedSamples& samples, Correction correction) {
    const auto s = summarize(samples);
    const double n = s.n_total;
    const double variance = n * (n + 1.0) / 12.0 - s.ties / (12.0 * (n - 1.0));
    if (!(variance > 0.0)) throw NotApplicable("rank variance is zero");

    std::vector<PairwiseResult> out;
    std::vector<double> raw;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            PairwiseResult r;
            r.first = samples[i].label;
            r.second = samples[j].label;
            const double se = std::sqrt(variance * (1.0 / s.sizes[i] + 1.0 / s.sizes[j]));
            r.z = (s.mean_ranks[i] - s.mean_ranks[j]) / se;
            r.p_raw = std::min(1.0, 2.0 * normal_sf(std::abs(r.z)));
            raw.push_back(r.p_raw);
            out.push_back(std::move(r));
        }
    }
    switch (correction) {
    case Correction::Bonferroni: {
        const auto adjusted = bonferroni(raw, raw.size());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k].p_adjusted = adjusted[k];
        break;
    }
    }
    return out;
}

std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m) {
    if (m < p_values.size()) throw std::invalid_argument("bonferroni: m is smaller than the number of p-values");
    std::vector<double> out;
    out.reserve(p_values.size());
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bonferroni: p-value outside [0, 1]");
        out.push_back(std::min(1.0, p * static_cast<double>(m)));
    }
    return out;
}

double chi_squared_sf(double x, int df) {
    if (df < 1) throw std::invalid_argument("chi_squared_sf: df must be >= 1");
    if (!(x > 0.0)) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

} // namespace parley::stats
