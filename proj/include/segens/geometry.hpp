#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>

#include "segens/error.hpp"

namespace segens {

/// Voxel-grid geometry: counts per axis and physical spacing in mm per voxel.
/// Data layout everywhere in this library is x fastest, then y, then z
/// (channel slowest for multi-channel volumes).
struct GridGeometry {
    Eigen::Vector3i dims;     // nx, ny, nz
    Eigen::Vector3d spacing;  // sx, sy, sz [mm]

    GridGeometry() : dims(0, 0, 0), spacing(1, 1, 1) {}
    GridGeometry(const Eigen::Vector3i& d, const Eigen::Vector3d& s) : dims(d), spacing(s) {
        validate();
    }

    void validate() const {
        if ((dims.array() < 1).any())
            throw ValidationError("GridGeometry: all dims must be >= 1");
        if (!(spacing.array() > 0.0).all() || !spacing.array().isFinite().all())
            throw ValidationError("GridGeometry: all spacing components must be finite and > 0");
        // Per-axis and total caps keep every downstream size computation
        // (including byte counts with channels) inside int64.
        const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
        if (nx > (std::int64_t{1} << 20) || ny > (std::int64_t{1} << 20) || nz > (std::int64_t{1} << 20) ||
            nx * ny * nz > (std::int64_t{1} << 40))
            throw ValidationError("GridGeometry: voxel count exceeds addressable size");
    }

    std::int64_t voxel_count() const {
        return std::int64_t{dims[0]} * dims[1] * dims[2];
    }

    std::int64_t index(int x, int y, int z) const {
        return (std::int64_t{z} * dims[1] + y) * dims[0] + x;
    }

    double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }

    bool operator==(const GridGeometry& o) const {
        return dims == o.dims && spacing == o.spacing;
    }
    bool operator!=(const GridGeometry& o) const { return !(*this == o); }
};

/// Inclusive axis-aligned box of voxel indices.
struct VoxelBox {
    Eigen::Vector3i lo;
    Eigen::Vector3i hi;

    bool operator==(const VoxelBox& o) const { return lo == o.lo && hi == o.hi; }

    Eigen::Vector3i extent() const { return hi - lo + Eigen::Vector3i::Ones(); }
    std::int64_t voxel_count() const {
        const Eigen::Vector3i e = extent();
        return std::int64_t{e[0]} * e[1] * e[2];
    }
    bool contains(int x, int y, int z) const {
        return x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1] && z >= lo[2] && z <= hi[2];
    }
};

/// Expands a box by `margin` voxels on every face, clamped to the grid.
inline VoxelBox dilate_box(const VoxelBox& box, int margin, const GridGeometry& geom) {
    if (margin < 0)
        throw std::invalid_argument("dilate_box: margin must be >= 0");
    VoxelBox out;
    out.lo = (box.lo.array() - margin).max(0);
    out.hi = (box.hi.array() + margin).min(geom.dims.array() - 1);
    return out;
}

} // namespace segens
