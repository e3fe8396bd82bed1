#include "segens/staple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace segens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms)
        s += t;
    return s;
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == kNegInf)
        return kNegInf;
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Posterior from the two log evidences; falls back to the prior when both
// carry zero probability (cannot happen for consistent p/q but keeps the
// function total).
double posterior_from_logs(double log_a, double log_b, double prior) {
    if (log_a == kNegInf && log_b == kNegInf)
        return prior;
    if (log_a == kNegInf)
        return 0.0;
    return 1.0 / (1.0 + std::exp(log_b - log_a));
}

} // namespace

void StapleParams::validate() const {
    if (!(init_sensitivity > 0.0 && init_sensitivity < 1.0))
        throw ValidationError("StapleParams: init_sensitivity must be in (0,1)");
    if (!(init_specificity > 0.0 && init_specificity < 1.0))
        throw ValidationError("StapleParams: init_specificity must be in (0,1)");
    if (max_iterations < 1)
        throw ValidationError("StapleParams: max_iterations must be >= 1");
    if (!(convergence_tol > 0.0))
        throw ValidationError("StapleParams: convergence_tol must be > 0");
    if (roi_margin < 0)
        throw ValidationError("StapleParams: roi_margin must be >= 0");
}

StapleResult staple_binary(std::span<const LabelArray> decisions, const StapleParams& params) {
    params.validate();
    const int num_raters = static_cast<int>(decisions.size());
    if (num_raters < 1)
        throw ValidationError("staple_binary: need at least one rater");
    const std::int64_t n = decisions[0].size();
    if (n < 1)
        throw ValidationError("staple_binary: empty ROI");
    std::int64_t total_fg = 0;
    for (const LabelArray& d : decisions) {
        if (d.size() != n)
            throw ValidationError("staple_binary: rater masks differ in size");
        if (d.size() > 0 && d.maxCoeff() > 1)
            throw ValidationError("staple_binary: decisions must be 0/1");
        total_fg += (d == std::uint8_t{1}).count();
    }
    if (total_fg == 0)
        throw DegenerateInputError("staple_binary: every rater is empty (no foreground evidence)");
    if (total_fg == std::int64_t{num_raters} * n)
        throw DegenerateInputError("staple_binary: every rater is full (no background evidence)");

    // Foreground prior: mean fraction of foreground across raters.
    const double prior = static_cast<double>(total_fg) / (static_cast<double>(num_raters) * static_cast<double>(n));
    const double log_prior_fg = std::log(prior);
    const double log_prior_bg = std::log1p(-prior);

    // Voxels collapse to their rater-decision bit pattern; the EM only ever
    // sees the pattern, so E-step work is done once per distinct pattern.
    const bool use_patterns = num_raters <= 16;
    std::vector<std::uint32_t> pattern(n, 0);
    for (int j = 0; j < num_raters; ++j) {
        const LabelArray& d = decisions[j];
        for (std::int64_t i = 0; i < n; ++i)
            pattern[i] |= static_cast<std::uint32_t>(d[i]) << j;
    }
    std::vector<std::uint32_t> present;
    if (use_patterns) {
        std::vector<char> seen(std::size_t{1} << num_raters, 0);
        for (std::uint32_t p : pattern)
            seen[p] = 1;
        for (std::uint32_t p = 0; p < seen.size(); ++p)
            if (seen[p])
                present.push_back(p);
    } else {
        present = pattern;  // degenerate fallback: one "pattern" per voxel
    }

    Eigen::ArrayXd sens = Eigen::ArrayXd::Constant(num_raters, params.init_sensitivity);
    Eigen::ArrayXd spec = Eigen::ArrayXd::Constant(num_raters, params.init_specificity);

    std::vector<double> w_table(use_patterns ? (std::size_t{1} << num_raters) : 0, 0.0);
    std::vector<double> ll_table(w_table.size(), 0.0);
    Eigen::ArrayXd w = Eigen::ArrayXd::Zero(n);

    StapleResult result;
    result.sensitivity = sens;
    result.specificity = spec;

    std::vector<double> terms_a(num_raters), terms_b(num_raters);
    Eigen::ArrayXd log_p1(num_raters), log_p0(num_raters), log_q1(num_raters), log_q0(num_raters);

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        for (int j = 0; j < num_raters; ++j) {
            log_p1[j] = std::log(sens[j]);
            log_p0[j] = std::log1p(-sens[j]);
            log_q1[j] = std::log(spec[j]);
            log_q0[j] = std::log1p(-spec[j]);
        }

        auto e_step = [&](std::uint32_t bits, double& w_out, double& ll_out) {
            for (int j = 0; j < num_raters; ++j) {
                const bool d = (bits >> j) & 1u;
                terms_a[j] = d ? log_p1[j] : log_p0[j];
                terms_b[j] = d ? log_q0[j] : log_q1[j];
            }
            const double log_a = log_prior_fg + sorted_sum(terms_a);
            const double log_b = log_prior_bg + sorted_sum(terms_b);
            w_out = posterior_from_logs(log_a, log_b, prior);
            ll_out = log_sum_exp(log_a, log_b);
        };

        double ll = 0.0;
        if (use_patterns) {
            for (std::uint32_t p : present)
                e_step(p, w_table[p], ll_table[p]);
            for (std::int64_t i = 0; i < n; ++i) {
                w[i] = w_table[pattern[i]];
                ll += ll_table[pattern[i]];
            }
        } else {
            double ll_i = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                e_step(pattern[i], w[i], ll_i);
                ll += ll_i;
            }
        }
        result.log_likelihood.push_back(ll);

        // M-step, accumulated in voxel order (independent of rater order).
        double sum_w = 0.0, sum_1w = 0.0;
        Eigen::ArrayXd sum_wd = Eigen::ArrayXd::Zero(num_raters);
        Eigen::ArrayXd sum_1w_1d = Eigen::ArrayXd::Zero(num_raters);
        for (std::int64_t i = 0; i < n; ++i) {
            const double wi = w[i];
            sum_w += wi;
            sum_1w += 1.0 - wi;
            const std::uint32_t bits = pattern[i];
            for (int j = 0; j < num_raters; ++j) {
                if ((bits >> j) & 1u)
                    sum_wd[j] += wi;
                else
                    sum_1w_1d[j] += 1.0 - wi;
            }
        }

        double delta = 0.0;
        for (int j = 0; j < num_raters; ++j) {
            const double p_new = sum_w > 0.0 ? sum_wd[j] / sum_w : sens[j];
            const double q_new = sum_1w > 0.0 ? sum_1w_1d[j] / sum_1w : spec[j];
            delta += std::abs(p_new - sens[j]) + std::abs(q_new - spec[j]);
            sens[j] = p_new;
            spec[j] = q_new;
        }
        delta /= num_raters;

        result.iterations_run = iter + 1;
        if (delta < params.convergence_tol) {
            result.converged = true;
            break;
        }
    }

    result.posterior = std::move(w);
    result.sensitivity = std::move(sens);
    result.specificity = std::move(spec);
    return result;
}

LabelVolume staple_multiclass(std::span<const LabelVolume> masks, const StapleParams& params) {
    params.validate();
    if (masks.empty())
        throw ValidationError("staple_multiclass: need at least one mask");
    const GridGeometry& geom = masks[0].geometry;
    const int num_labels = masks[0].num_labels;
    for (const LabelVolume& m : masks) {
        if (m.geometry != geom)
            throw ValidationError("staple_multiclass: masks differ in geometry");
        if (m.num_labels != num_labels)
            throw ValidationError("staple_multiclass: masks differ in num_labels");
    }
    const int num_raters = static_cast<int>(masks.size());
    const std::int64_t n = geom.voxel_count();

    LabelVolume out = LabelVolume::zeros(geom, num_labels);
    Eigen::ArrayXd best_w = Eigen::ArrayXd::Constant(n, -1.0);

    for (int label = 1; label < num_labels; ++label) {
        // Union bounding box of this label across all raters.
        std::optional<VoxelBox> roi_box;
        for (const LabelVolume& m : masks) {
            std::optional<VoxelBox> b = bounding_box(m, label);
            if (!b)
                continue;
            if (!roi_box) {
                roi_box = b;
            } else {
                roi_box->lo = roi_box->lo.cwiseMin(b->lo);
                roi_box->hi = roi_box->hi.cwiseMax(b->hi);
            }
        }
        if (!roi_box)
            continue;  // label absent from every mask
        const VoxelBox roi = dilate_box(*roi_box, params.roi_margin, geom);
        const std::int64_t roi_n = roi.voxel_count();

        std::vector<LabelArray> decisions(num_raters);
        for (int j = 0; j < num_raters; ++j) {
            LabelArray d(roi_n);
            std::int64_t k = 0;
            for (int z = roi.lo[2]; z <= roi.hi[2]; ++z)
                for (int y = roi.lo[1]; y <= roi.hi[1]; ++y)
                    for (int x = roi.lo[0]; x <= roi.hi[0]; ++x, ++k)
                        d[k] = masks[j].at(x, y, z) == label ? 1 : 0;
            decisions[j] = std::move(d);
        }

        StapleResult res;
        try {
            res = staple_binary(decisions, params);
        } catch (const DegenerateInputError& e) {
            throw DegenerateInputError("label " + std::to_string(label) + ": " + e.what());
        }

        std::int64_t k = 0;
        for (int z = roi.lo[2]; z <= roi.hi[2]; ++z)
            for (int y = roi.lo[1]; y <= roi.hi[1]; ++y)
                for (int x = roi.lo[0]; x <= roi.hi[0]; ++x, ++k) {
                    const double wv = res.posterior[k];
                    if (wv < 0.5)
                        continue;
                    const std::int64_t g = geom.index(x, y, z);
                    if (wv > best_w[g]) {  // ties keep the earlier (lower) label
                        best_w[g] = wv;
                        out.data[g] = static_cast<std::uint8_t>(label);
                    }
                }
    }
    return out;
}

} // namespace segens
