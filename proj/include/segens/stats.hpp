#pragma once

#include <span>
#include <string>
#include <vector>

#include "segens/error.hpp"

namespace segens {

/// Paired per-case metric values for one (metric, organ) comparison.
struct PairedSample {
    std::vector<double> baseline;
    std::vector<double> candidate;
    bool lower_is_better = true;  // true for mDTA and HD95
    std::string metric;
    std::string organ;
};

enum class Alternative { TwoSided, CandidateBetter };

/// Handling of zero paired differences: Drop discards them before ranking
/// (classic); Pratt ranks them along with the rest and then discards their
/// ranks from both sums.
enum class ZeroPolicy { Drop, Pratt };

/// Auto switches to the exact distribution for n_effective <= 25; the other
/// two force one path (mainly for cross-checking the approximation).
enum class PValueMode { Auto, Exact, Normal };

struct WilcoxonResult {
    double statistic = 0.0;  // min of the two signed-rank sums (two-sided) or the candidate-favorable sum
    double p_value = 1.0;
    int n_effective = 0;  // pairs with nonzero difference
    bool degenerate = false;  // all differences zero: p = 1 by convention
    bool exact = false;       // exact distribution (n_effective <= 25) vs normal approximation
};

/// Wilcoxon signed-rank test of candidate vs baseline. Ties among |d| get
/// average ranks. For n_effective <= 25 the p-value comes from the exact
/// sign-flip distribution; above that, a normal approximation with
/// tie-corrected variance and 0.5 continuity correction.
WilcoxonResult wilcoxon_signed_rank(const PairedSample& sample, Alternative alternative = Alternative::TwoSided,
                                    ZeroPolicy zero_policy = ZeroPolicy::Drop,
                                    PValueMode mode = PValueMode::Auto);

/// Points awarded for the significance level of an improvement:
/// 5 below 5e-6, 4 below 5e-5, 3 below 5e-4, 2 below 5e-3, 1 below 0.05,
/// otherwise 0. Strict inequalities; 0 when not improved.
int significance_points(double p, bool improved);

/// One scored comparison of an ensemble method against the baseline.
struct Comparison {
    std::string method;
    std::string organ;
    std::string dataset_size;
    std::string metric;  // "mdta" or "hd95"
    double p_value = 1.0;
    bool improved = false;
    int points = 0;
    int n_pairs = 0;
    int n_excluded = 0;  // pairs dropped because a metric was undefined
    double statistic = 0.0;
};

struct RankingRow {
    std::string method;
    int mdta_points = 0;
    int hd95_points = 0;
    int total = 0;
};

/// Points per method and metric summed across organs and dataset sizes.
struct RankingTable {
    std::vector<RankingRow> rows;  // one per method, in first-seen order
};

RankingTable build_ranking_table(std::span<const Comparison> comparisons);

/// Per-model defined metric values on the internal test set.
struct ModelMetricSamples {
    std::vector<double> mdta;
    std::vector<double> hd95;
};

struct BestModelChoice {
    int index = -1;
    std::vector<double> median_mdta, median_hd95;  // NaN for excluded models
    std::vector<double> rank_mdta, rank_hd95, rank_sum;
    std::vector<int> excluded;  // models with no defined values for some metric
};

/// Ranks models by median mDTA and median HD95 (ascending, average ranks on
/// ties); the winner has the smallest rank sum, ties broken by lower median
/// mDTA, then by lowest index.
BestModelChoice select_best_model(std::span<const ModelMetricSamples> models);

/// Median with the even-count convention: mean of the two central order
/// statistics.
double median(std::span<const double> values);

} // namespace segens
