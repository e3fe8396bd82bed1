#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segens/volume.hpp"

namespace segens {

/// Boundary voxels of one structure: voxels of the structure with at least
/// one 6-connected face neighbour outside it (outside the grid counts as
/// outside).
struct SurfaceSet {
    GridGeometry geometry;
    std::vector<Eigen::Vector3i> voxels;

    bool empty() const { return voxels.empty(); }
};

SurfaceSet extract_surface(const LabelVolume& mask, int label);

/// Exact Euclidean distance (mm) from every grid voxel centre to the nearest
/// target voxel centre, via the separable lower-envelope transform with
/// per-axis spacing.
Eigen::ArrayXd distance_field(const SurfaceSet& targets, const GridGeometry& geom);

/// Bidirectional mean distance-to-agreement: average of the two directed
/// mean surface distances. nullopt when either surface is empty.
std::optional<double> mdta(const SurfaceSet& pred, const SurfaceSet& ref, const GridGeometry& geom);

/// 95th-percentile Hausdorff distance: max of the two directed nearest-rank
/// (ceil(0.95 n)) percentiles. nullopt when either surface is empty.
std::optional<double> hd95(const SurfaceSet& pred, const SurfaceSet& ref, const GridGeometry& geom);

/// Signed volume difference, predicted minus reference, in cm^3.
double volume_difference(const LabelVolume& pred, const LabelVolume& ref, int label);

struct OrganMetrics {
    int label = 0;
    std::string organ_name;
    std::optional<double> mdta_mm;  // absent = undefined (an empty surface)
    std::optional<double> hd95_mm;
    double volume_diff_cm3 = 0.0;
};

struct MetricReport {
    std::string case_id;
    std::string method;
    std::vector<OrganMetrics> organs;
};

/// All metrics for one case. `labels` selects the organ labels to score;
/// names are looked up in label_names when present.
MetricReport evaluate_case(const LabelVolume& pred, const LabelVolume& ref, std::span<const int> labels,
                           const std::string& case_id, const std::string& method,
                           const std::map<int, std::string>& label_names = {});

} // namespace segens
