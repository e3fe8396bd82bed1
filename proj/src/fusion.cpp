#include "segens/fusion.hpp"

#include <cmath>
#include <vector>

namespace segens {

const char* fusion_method_name(FusionVariant v) {
    switch (v) {
        case FusionVariant::LogitSum: return "logit-sum";
        case FusionVariant::SoftmaxSum: return "softmax-sum";
        case FusionVariant::MajorityVote: return "majority-vote";
        case FusionVariant::Staple: return "staple";
    }
    return "?";
}

FusionVariant parse_fusion_method(const std::string& name) {
    if (name == "logit-sum") return FusionVariant::LogitSum;
    if (name == "softmax-sum") return FusionVariant::SoftmaxSum;
    if (name == "majority-vote") return FusionVariant::MajorityVote;
    if (name == "staple") return FusionVariant::Staple;
    throw UsageError("unknown fusion method '" + name +
                     "' (expected logit-sum, softmax-sum, majority-vote or staple)");
}

Eigen::ArrayXd softmax_scores(const Eigen::Ref<const Eigen::ArrayXd>& scores) {
    const double m = scores.maxCoeff();
    Eigen::ArrayXd e = (scores - m).exp();
    return e / e.sum();
}

namespace {

void check_models(std::span<const ScoreVolume> models) {
    if (models.empty())
        throw ValidationError("fusion: need at least one model");
    for (const ScoreVolume& s : models) {
        if (s.geometry != models[0].geometry)
            throw ValidationError("fusion: models differ in geometry");
        if (s.channels != models[0].channels)
            throw ValidationError("fusion: models differ in channel count");
    }
}

// Argmax over per-channel double fields; lowest channel wins ties.
LabelVolume argmax_fields(const std::vector<Eigen::ArrayXd>& acc, const GridGeometry& geom) {
    const int channels = static_cast<int>(acc.size());
    if (channels > 256)
        throw ValidationError("fusion: more than 256 channels cannot be labelled");
    const std::int64_t n = geom.voxel_count();
    LabelArray labels = LabelArray::Zero(n);
    Eigen::ArrayXd best = acc[0];
    for (int c = 1; c < channels; ++c) {
        const auto better = acc[c] > best;
        labels = better.select(LabelArray::Constant(n, static_cast<std::uint8_t>(c)), labels);
        best = better.select(acc[c], best);
    }
    return LabelVolume(geom, channels, std::move(labels));
}

} // namespace

ScoreVolume softmax_channels(const ScoreVolume& scores) {
    const std::int64_t n = scores.geometry.voxel_count();
    Eigen::ArrayXd max_score = scores.channel(0).cast<double>();
    for (int c = 1; c < scores.channels; ++c)
        max_score = max_score.max(scores.channel(c).cast<double>());
    Eigen::ArrayXd denom = Eigen::ArrayXd::Zero(n);
    for (int c = 0; c < scores.channels; ++c)
        denom += (scores.channel(c).cast<double>() - max_score).exp();
    ScoreArray out(scores.data.size());
    for (int c = 0; c < scores.channels; ++c)
        out.segment(std::int64_t{c} * n, n) =
            ((scores.channel(c).cast<double>() - max_score).exp() / denom).cast<float>();
    return ScoreVolume(scores.geometry, scores.channels, std::move(out));
}

LabelVolume argmax_labels(const ScoreVolume& scores) {
    if (scores.channels > 256)
        throw ValidationError("argmax_labels: more than 256 channels cannot be labelled");
    const std::int64_t n = scores.geometry.voxel_count();
    LabelArray labels = LabelArray::Zero(n);
    ScoreArray best = scores.channel(0);
    for (int c = 1; c < scores.channels; ++c) {
        const auto better = scores.channel(c) > best;
        labels = better.select(LabelArray::Constant(n, static_cast<std::uint8_t>(c)), labels);
        best = better.select(scores.channel(c), best);
    }
    return LabelVolume(scores.geometry, scores.channels, std::move(labels));
}

LabelVolume fuse_logit_sum(std::span<const ScoreVolume> models) {
    check_models(models);
    const std::int64_t n = models[0].geometry.voxel_count();
    std::vector<Eigen::ArrayXd> acc(models[0].channels, Eigen::ArrayXd::Zero(n));
    for (const ScoreVolume& model : models)
        for (int c = 0; c < model.channels; ++c)
            acc[c] += model.channel(c).cast<double>();
    return argmax_fields(acc, models[0].geometry);
}

LabelVolume fuse_softmax_sum(std::span<const ScoreVolume> models) {
    check_models(models);
    const std::int64_t n = models[0].geometry.voxel_count();
    const int channels = models[0].channels;
    std::vector<Eigen::ArrayXd> acc(channels, Eigen::ArrayXd::Zero(n));
    Eigen::ArrayXd max_score(n), denom(n);
    for (const ScoreVolume& model : models) {
        max_score = model.channel(0).cast<double>();
        for (int c = 1; c < channels; ++c)
            max_score = max_score.max(model.channel(c).cast<double>());
        denom.setZero();
        for (int c = 0; c < channels; ++c)
            denom += (model.channel(c).cast<double>() - max_score).exp();
        for (int c = 0; c < channels; ++c)
            acc[c] += (model.channel(c).cast<double>() - max_score).exp() / denom;
    }
    return argmax_fields(acc, models[0].geometry);
}

LabelVolume majority_vote(std::span<const LabelVolume> masks) {
    if (masks.empty())
        throw ValidationError("majority_vote: need at least one mask");
    const GridGeometry& geom = masks[0].geometry;
    const int num_labels = masks[0].num_labels;
    for (const LabelVolume& m : masks) {
        if (m.geometry != geom)
            throw ValidationError("majority_vote: masks differ in geometry");
        if (m.num_labels != num_labels)
            throw ValidationError("majority_vote: masks differ in num_labels");
    }
    const std::int64_t n = geom.voxel_count();
    LabelArray out(n);
    std::array<std::uint16_t, 256> counts{};
    for (std::int64_t i = 0; i < n; ++i) {
        int seen_max = 0;
        for (const LabelVolume& m : masks) {
            const int l = m.data[i];
            ++counts[l];
            seen_max = std::max(seen_max, l);
        }
        int best_label = 0;
        std::uint16_t best_count = counts[0];
        for (int l = 1; l <= seen_max; ++l)
            if (counts[l] > best_count) {  // strict: ties stay with the lower label
                best_count = counts[l];
                best_label = l;
            }
        out[i] = static_cast<std::uint8_t>(best_label);
        for (const LabelVolume& m : masks)
            counts[m.data[i]] = 0;
    }
    return LabelVolume(geom, num_labels, std::move(out));
}

LabelVolume fuse(const FusionMethod& method, std::span<const ScoreVolume> models) {
    switch (method.variant) {
        case FusionVariant::LogitSum:
            return fuse_logit_sum(models);
        case FusionVariant::SoftmaxSum:
            return fuse_softmax_sum(models);
        case FusionVariant::MajorityVote:
        case FusionVariant::Staple: {
            check_models(models);
            std::vector<LabelVolume> masks;
            masks.reserve(models.size());
            for (const ScoreVolume& s : models)
                masks.push_back(argmax_labels(s));
            return method.variant == FusionVariant::MajorityVote ? majority_vote(masks)
                                                                 : staple_multiclass(masks, method.staple);
        }
    }
    throw Error("fuse: unreachable");
}

LabelVolume fuse(const FusionMethod& method, std::span<const LabelVolume> masks) {
    switch (method.variant) {
        case FusionVariant::LogitSum:
        case FusionVariant::SoftmaxSum:
            throw UsageError(std::string(fusion_method_name(method.variant)) +
                             " requires raw score volumes, but label masks were given; "
                             "use majority-vote or staple, or supply the models' score outputs");
        case FusionVariant::MajorityVote:
            return majority_vote(masks);
        case FusionVariant::Staple:
            return staple_multiclass(masks, method.staple);
    }
    throw Error("fuse: unreachable");
}

} // namespace segens
