#pragma once

#include <Eigen/Core>

#include <span>

#include "segens/staple.hpp"
#include "segens/volume.hpp"

namespace segens {

enum class FusionVariant { LogitSum, SoftmaxSum, MajorityVote, Staple };

/// One of the four ensemble strategies; staple parameters are only consulted
/// when variant == Staple.
struct FusionMethod {
    FusionVariant variant = FusionVariant::SoftmaxSum;
    StapleParams staple;
};

const char* fusion_method_name(FusionVariant v);
FusionVariant parse_fusion_method(const std::string& name);

/// Numerically stable softmax of one voxel's channel scores, in double.
/// This is the kernel the fusion paths accumulate; softmax_channels applies
/// it across a volume and narrows the result to storage precision.
Eigen::ArrayXd softmax_scores(const Eigen::Ref<const Eigen::ArrayXd>& scores);

/// Per-voxel softmax across channels; output channels sum to 1 per voxel.
ScoreVolume softmax_channels(const ScoreVolume& scores);

/// Per-voxel argmax over channels; ties go to the lowest channel index.
LabelVolume argmax_labels(const ScoreVolume& scores);

/// Element-wise sum of raw scores (double accumulation, model order as
/// given), then argmax.
LabelVolume fuse_logit_sum(std::span<const ScoreVolume> models);

/// Sum of per-model softmax probabilities, then argmax.
LabelVolume fuse_softmax_sum(std::span<const ScoreVolume> models);

/// Most popular label per voxel; ties go to the lowest label.
LabelVolume majority_vote(std::span<const LabelVolume> masks);

/// Dispatch over score-volume inputs. MajorityVote and Staple argmax each
/// model first.
LabelVolume fuse(const FusionMethod& method, std::span<const ScoreVolume> models);

/// Dispatch over mask inputs; the two summation strategies need raw scores
/// and raise UsageError here.
LabelVolume fuse(const FusionMethod& method, std::span<const LabelVolume> masks);

} // namespace segens
