#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>

#include "segens/geometry.hpp"

namespace segens {

using LabelArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;
using ScoreArray = Eigen::Array<float, Eigen::Dynamic, 1>;

/// Per-voxel class labels over a 3D grid. Label 0 is background, 1..L-1 are
/// structures. Immutable by convention after construction.
struct LabelVolume {
    GridGeometry geometry;
    int num_labels = 2;  // L, exclusive upper bound on voxel values
    LabelArray data;     // size nx*ny*nz, x fastest

    LabelVolume() = default;
    LabelVolume(const GridGeometry& geom, int labels, LabelArray values);

    /// Zero-filled volume.
    static LabelVolume zeros(const GridGeometry& geom, int labels);

    std::uint8_t at(int x, int y, int z) const { return data[geometry.index(x, y, z)]; }
    std::uint8_t& at(int x, int y, int z) { return data[geometry.index(x, y, z)]; }
};

/// Per-voxel, per-channel raw model scores (pre-softmax). Channel 0 is
/// background. Layout is channel-major: channel c occupies the contiguous
/// slice data[c*N .. (c+1)*N) with the usual x-fastest order inside it.
struct ScoreVolume {
    GridGeometry geometry;
    int channels = 0;  // C >= 2
    ScoreArray data;   // size C*nx*ny*nz

    ScoreVolume() = default;
    ScoreVolume(const GridGeometry& geom, int num_channels, ScoreArray values);

    static ScoreVolume zeros(const GridGeometry& geom, int num_channels);

    /// Contiguous view of one channel.
    auto channel(int c) const { return data.segment(std::int64_t{c} * geometry.voxel_count(), geometry.voxel_count()); }
    auto channel(int c) { return data.segment(std::int64_t{c} * geometry.voxel_count(), geometry.voxel_count()); }

    float at(int c, int x, int y, int z) const {
        return data[std::int64_t{c} * geometry.voxel_count() + geometry.index(x, y, z)];
    }
};

/// Tightest box containing every voxel equal to `label`; nullopt if none.
std::optional<VoxelBox> bounding_box(const LabelVolume& mask, int label);

/// Physical volume of one structure in cm^3.
double structure_volume_cm3(const LabelVolume& mask, int label);

/// Re-tags every volume with the common maximum num_labels so that fusion
/// preconditions (identical L) hold for masks loaded from files, where L is
/// inferred per file. Geometries must already match.
void align_label_counts(std::span<LabelVolume> masks);

} // namespace segens
