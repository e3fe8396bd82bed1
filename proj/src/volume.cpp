#include "segens/volume.hpp"

#include <algorithm>
#include <limits>

namespace segens {

LabelVolume::LabelVolume(const GridGeometry& geom, int labels, LabelArray values)
    : geometry(geom), num_labels(labels), data(std::move(values)) {
    geometry.validate();
    if (num_labels < 2 || num_labels > 256)
        throw ValidationError("LabelVolume: num_labels must be in [2, 256]");
    if (data.size() != geometry.voxel_count())
        throw ValidationError("LabelVolume: data length does not match geometry");
    if (data.size() > 0 && int{data.maxCoeff()} >= num_labels)
        throw ValidationError("LabelVolume: voxel value >= num_labels");
}

LabelVolume LabelVolume::zeros(const GridGeometry& geom, int labels) {
    return LabelVolume(geom, labels, LabelArray::Zero(geom.voxel_count()));
}

ScoreVolume::ScoreVolume(const GridGeometry& geom, int num_channels, ScoreArray values)
    : geometry(geom), channels(num_channels), data(std::move(values)) {
    geometry.validate();
    if (channels < 2)
        throw ValidationError("ScoreVolume: channels must be >= 2");
    if (data.size() != std::int64_t{channels} * geometry.voxel_count())
        throw ValidationError("ScoreVolume: data length does not match geometry and channels");
    if (!data.isFinite().all())
        throw ValidationError("ScoreVolume: scores must be finite");
}

ScoreVolume ScoreVolume::zeros(const GridGeometry& geom, int num_channels) {
    return ScoreVolume(geom, num_channels, ScoreArray::Zero(std::int64_t{num_channels} * geom.voxel_count()));
}

std::optional<VoxelBox> bounding_box(const LabelVolume& mask, int label) {
    if (label < 0 || label >= mask.num_labels)
        throw std::invalid_argument("bounding_box: label out of range");
    const auto target = static_cast<std::uint8_t>(label);
    const Eigen::Vector3i d = mask.geometry.dims;
    Eigen::Vector3i lo = d;  // past-the-end so any hit shrinks it
    Eigen::Vector3i hi(-1, -1, -1);
    std::int64_t i = 0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x, ++i) {
                if (mask.data[i] != target)
                    continue;
                lo[0] = std::min(lo[0], x);
                lo[1] = std::min(lo[1], y);
                lo[2] = std::min(lo[2], z);
                hi[0] = std::max(hi[0], x);
                hi[1] = std::max(hi[1], y);
                hi[2] = std::max(hi[2], z);
            }
    if (hi[0] < 0)
        return std::nullopt;
    return VoxelBox{lo, hi};
}

double structure_volume_cm3(const LabelVolume& mask, int label) {
    if (label < 0 || label >= mask.num_labels)
        throw std::invalid_argument("structure_volume_cm3: label out of range");
    const auto target = static_cast<std::uint8_t>(label);
    const std::int64_t count = (mask.data == target).count();
    return static_cast<double>(count) * mask.geometry.voxel_volume_mm3() / 1000.0;
}

void align_label_counts(std::span<LabelVolume> masks) {
    int max_labels = 2;
    for (const LabelVolume& m : masks)
        max_labels = std::max(max_labels, m.num_labels);
    for (LabelVolume& m : masks)
        m.num_labels = max_labels;
}

} // namespace segens
