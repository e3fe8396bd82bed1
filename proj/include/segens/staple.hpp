#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "segens/volume.hpp"

namespace segens {

/// Parameters of the binary EM consensus estimator.
struct StapleParams {
    double init_sensitivity = 0.99999;
    double init_specificity = 0.99999;
    int max_iterations = 100;
    // Convergence when the mean over raters of |dp_j| + |dq_j| drops below this.
    double convergence_tol = 1e-7;
    enum class Prior { RaterMean } prior = Prior::RaterMean;
    int roi_margin = 5;  // voxels added around the per-label union bounding box

    void validate() const;
};

struct StapleResult {
    Eigen::ArrayXd posterior;       // P(voxel is foreground), one entry per ROI voxel
    Eigen::ArrayXd sensitivity;     // p_j per rater
    Eigen::ArrayXd specificity;     // q_j per rater
    int iterations_run = 0;
    bool converged = false;
    std::vector<double> log_likelihood;  // observed-data log-likelihood, one entry per iteration
};

/// Binary STAPLE over R rater decisions on a common voxel set. Each array
/// holds 0/1 decisions; the spatial arrangement is irrelevant to the EM.
/// E-step products are computed in log space; per-voxel rater terms are
/// summed in sorted order so the result is bit-identical under any
/// permutation of the rater list.
StapleResult staple_binary(std::span<const LabelArray> decisions, const StapleParams& params);

/// Multi-organ wrapper: per foreground label, runs binary STAPLE on the
/// union bounding box (dilated by roi_margin) and assigns the label where
/// the posterior reaches 0.5. Voxels claimed by several labels go to the
/// highest posterior, exact ties to the lowest label.
LabelVolume staple_multiclass(std::span<const LabelVolume> masks, const StapleParams& params);

} // namespace segens
