#include "segens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace segens {

namespace {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Ranks of |values| with average ranks for ties, scaled by 2 so every rank
// is an exact integer (an average of two consecutive integers).
std::vector<std::int64_t> scaled_ranks(const std::vector<double>& abs_values) {
    const std::size_t n = abs_values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return abs_values[a] < abs_values[b]; });
    std::vector<std::int64_t> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && abs_values[order[j + 1]] == abs_values[order[i]])
            ++j;
        // average of ranks i+1 .. j+1, times two
        const std::int64_t scaled = static_cast<std::int64_t>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = scaled;
        i = j + 1;
    }
    return ranks;
}

// Exact null distribution of the scaled positive-rank sum: counts[s] is the
// number of the 2^n sign assignments with sum s.
std::vector<std::uint64_t> sign_flip_counts(const std::vector<std::int64_t>& ranks) {
    std::int64_t total = 0;
    for (std::int64_t r : ranks)
        total += r;
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(total) + 1, 0);
    counts[0] = 1;
    for (std::int64_t r : ranks)
        for (std::int64_t s = total; s >= r; --s)
            counts[s] += counts[s - r];
    return counts;
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(const PairedSample& sample, Alternative alternative, ZeroPolicy zero_policy,
                                    PValueMode mode) {
    if (sample.baseline.size() != sample.candidate.size())
        throw ValidationError("wilcoxon_signed_rank: baseline and candidate lengths differ");
    if (sample.baseline.empty())
        throw ValidationError("wilcoxon_signed_rank: need at least one pair");

    std::vector<double> diffs(sample.baseline.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        diffs[i] = sample.candidate[i] - sample.baseline[i];
        if (!std::isfinite(diffs[i]))
            throw ValidationError("wilcoxon_signed_rank: non-finite difference");
    }

    // Collect the differences that take part in ranking.
    std::vector<double> ranked;
    if (zero_policy == ZeroPolicy::Drop) {
        for (double d : diffs)
            if (d != 0.0)
                ranked.push_back(d);
    } else {
        ranked = diffs;  // Pratt: zeros are ranked, their ranks discarded below
    }

    WilcoxonResult result;
    result.n_effective = static_cast<int>(std::count_if(diffs.begin(), diffs.end(), [](double d) { return d != 0.0; }));
    if (result.n_effective == 0) {
        result.degenerate = true;
        result.exact = true;
        result.p_value = 1.0;
        result.statistic = 0.0;
        return result;
    }

    std::vector<double> abs_values(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i)
        abs_values[i] = std::abs(ranked[i]);
    const std::vector<std::int64_t> all_ranks = scaled_ranks(abs_values);

    // Scaled rank sums over the nonzero differences; scaled statistics stay
    // exact integers.
    std::vector<std::int64_t> nonzero_ranks;
    std::int64_t w_pos = 0, w_neg = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i] == 0.0)
            continue;
        nonzero_ranks.push_back(all_ranks[i]);
        if (ranked[i] > 0.0)
            w_pos += all_ranks[i];
        else
            w_neg += all_ranks[i];
    }

    const bool candidate_better_is_negative = sample.lower_is_better;
    const std::int64_t w_favorable = candidate_better_is_negative ? w_neg : w_pos;

    const int n = result.n_effective;
    result.exact = mode == PValueMode::Auto ? n <= 25 : mode == PValueMode::Exact;
    if (result.exact && n > 62)
        throw ValidationError("wilcoxon_signed_rank: exact mode is limited to 62 nonzero differences");
    if (result.exact) {
        const std::vector<std::uint64_t> counts = sign_flip_counts(nonzero_ranks);
        const double scale = std::ldexp(1.0, -n);  // 2^-n, exact
        auto tail_le = [&](std::int64_t w) {
            std::uint64_t c = 0;
            for (std::int64_t s = 0; s <= w && s < static_cast<std::int64_t>(counts.size()); ++s)
                c += counts[s];
            return static_cast<double>(c) * scale;
        };
        auto tail_ge = [&](std::int64_t w) {
            std::uint64_t c = 0;
            for (std::int64_t s = std::max<std::int64_t>(w, 0); s < static_cast<std::int64_t>(counts.size()); ++s)
                c += counts[s];
            return static_cast<double>(c) * scale;
        };
        if (alternative == Alternative::TwoSided) {
            const double p = 2.0 * std::min(tail_le(w_pos), tail_ge(w_pos));
            result.p_value = std::min(1.0, p);
        } else {
            result.p_value = tail_ge(w_favorable);
        }
    } else {
        // Normal approximation. Mean and variance of the positive-rank sum
        // under random signs: E = sum r / 2, Var = sum r^2 / 4 (which embeds
        // the usual tie correction).
        double sum_r = 0.0, sum_r2 = 0.0;
        for (std::int64_t r2 : nonzero_ranks) {
            const double r = static_cast<double>(r2) / 2.0;
            sum_r += r;
            sum_r2 += r * r;
        }
        const double mu = sum_r / 2.0;
        const double sigma = std::sqrt(sum_r2 / 4.0);
        if (alternative == Alternative::TwoSided) {
            const double w = static_cast<double>(w_pos) / 2.0;
            const double dev = std::max(std::abs(w - mu) - 0.5, 0.0);
            result.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(dev / sigma)));
        } else {
            const double w = static_cast<double>(w_favorable) / 2.0;
            result.p_value = 1.0 - normal_cdf((w - 0.5 - mu) / sigma);
        }
    }

    result.statistic = alternative == Alternative::TwoSided
                           ? static_cast<double>(std::min(w_pos, w_neg)) / 2.0
                           : static_cast<double>(w_favorable) / 2.0;
    return result;
}

int significance_points(double p, bool improved) {
    if (std::isnan(p) || p < 0.0 || p > 1.0)
        throw std::invalid_argument("significance_points: p must be in [0,1]");
    if (!improved)
        return 0;
    if (p < 5e-6) return 5;
    if (p < 5e-5) return 4;
    if (p < 5e-4) return 3;
    if (p < 5e-3) return 2;
    if (p < 5e-2) return 1;
    return 0;
}

RankingTable build_ranking_table(std::span<const Comparison> comparisons) {
    RankingTable table;
    auto row_for = [&](const std::string& method) -> RankingRow& {
        for (RankingRow& row : table.rows)
            if (row.method == method)
                return row;
        table.rows.push_back(RankingRow{method, 0, 0, 0});
        return table.rows.back();
    };
    for (const Comparison& c : comparisons) {
        if (c.points < 0 || c.points > 5)
            throw ValidationError("build_ranking_table: points out of range");
        RankingRow& row = row_for(c.method);
        if (c.metric == "mdta")
            row.mdta_points += c.points;
        else if (c.metric == "hd95")
            row.hd95_points += c.points;
        else
            throw ValidationError("build_ranking_table: unknown metric '" + c.metric + "'");
        row.total = row.mdta_points + row.hd95_points;
    }
    return table;
}

double median(std::span<const double> values) {
    if (values.empty())
        throw ValidationError("median: empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1)
        return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

// Ascending average ranks of `values` restricted to indices in `included`.
std::vector<double> average_ranks(const std::vector<double>& values, const std::vector<int>& included) {
    std::vector<int> order(included);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), std::numeric_limits<double>::quiet_NaN());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]])
            ++j;
        const double avg = static_cast<double>(i + 1 + j + 1) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

BestModelChoice select_best_model(std::span<const ModelMetricSamples> models) {
    if (models.empty())
        throw ValidationError("select_best_model: need at least one model");
    const int k = static_cast<int>(models.size());
    BestModelChoice choice;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    choice.median_mdta.assign(k, nan);
    choice.median_hd95.assign(k, nan);

    std::vector<int> included;
    for (int m = 0; m < k; ++m) {
        if (models[m].mdta.empty() || models[m].hd95.empty()) {
            choice.excluded.push_back(m);
            continue;
        }
        choice.median_mdta[m] = median(models[m].mdta);
        choice.median_hd95[m] = median(models[m].hd95);
        included.push_back(m);
    }
    if (included.empty())
        throw ValidationError("select_best_model: every model lacks defined metric values");

    choice.rank_mdta = average_ranks(choice.median_mdta, included);
    choice.rank_hd95 = average_ranks(choice.median_hd95, included);
    choice.rank_sum.assign(k, nan);
    for (int m : included)
        choice.rank_sum[m] = choice.rank_mdta[m] + choice.rank_hd95[m];

    int best = included[0];
    for (int m : included) {
        if (m == best)
            continue;
        if (choice.rank_sum[m] < choice.rank_sum[best] ||
            (choice.rank_sum[m] == choice.rank_sum[best] && choice.median_mdta[m] < choice.median_mdta[best]))
            best = m;  // equal rank sum and median: keep the lower index
    }
    choice.index = best;
    return choice;
}

} // namespace segens
