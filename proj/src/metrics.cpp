#include "segens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace segens {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower-envelope pass of the squared distance transform, with physical
// sample positions i*sp. Parabolas with infinite height are skipped; a line
// with no finite entry stays infinite.
void edt_line(std::span<const double> f, double sp, std::span<double> out,
              std::vector<int>& hull, std::vector<double>& breaks, std::vector<int>& finite) {
    const int n = static_cast<int>(f.size());
    finite.clear();
    for (int i = 0; i < n; ++i)
        if (f[i] < kInf)
            finite.push_back(i);
    if (finite.empty()) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    hull.resize(finite.size());
    breaks.resize(finite.size() + 1);
    int k = 0;
    hull[0] = finite[0];
    breaks[0] = -kInf;
    breaks[1] = kInf;
    for (std::size_t t = 1; t < finite.size(); ++t) {
        const int i = finite[t];
        const double pi = i * sp;
        double s;
        for (;;) {
            const int j = hull[k];
            const double pj = j * sp;
            s = ((f[i] + pi * pi) - (f[j] + pj * pj)) / (2.0 * sp * (i - j));
            if (s <= breaks[k])
                --k;
            else
                break;
        }
        ++k;
        hull[k] = i;
        breaks[k] = s;
        breaks[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        const double pq = q * sp;
        while (breaks[k + 1] < pq)
            ++k;
        const double d = (q - hull[k]) * sp;
        out[q] = d * d + f[hull[k]];
    }
}

// Applies edt_line along one axis of the flattened field.
void edt_pass(Eigen::ArrayXd& sq, const GridGeometry& geom, int axis) {
    const Eigen::Vector3i d = geom.dims;
    const int n = d[axis];
    const double sp = geom.spacing[axis];
    std::int64_t stride = 1;
    for (int a = 0; a < axis; ++a)
        stride *= d[a];

    std::vector<double> line(n), result(n);
    std::vector<int> hull, finite;
    std::vector<double> breaks;

    // Iterate over all lines perpendicular to `axis`.
    const int u_axis = axis == 0 ? 1 : 0;
    const int v_axis = axis == 2 ? 1 : 2;
    std::int64_t u_stride = 1, v_stride = 1;
    for (int a = 0; a < u_axis; ++a)
        u_stride *= d[a];
    for (int a = 0; a < v_axis; ++a)
        v_stride *= d[a];

    for (int v = 0; v < d[v_axis]; ++v)
        for (int u = 0; u < d[u_axis]; ++u) {
            const std::int64_t base = u * u_stride + v * v_stride;
            for (int i = 0; i < n; ++i)
                line[i] = sq[base + i * stride];
            edt_line(line, sp, result, hull, breaks, finite);
            for (int i = 0; i < n; ++i)
                sq[base + i * stride] = result[i];
        }
}

std::vector<double> directed_distances(const SurfaceSet& from, const Eigen::ArrayXd& field_to,
                                       const GridGeometry& geom) {
    std::vector<double> dist;
    dist.reserve(from.voxels.size());
    for (const Eigen::Vector3i& v : from.voxels)
        dist.push_back(field_to[geom.index(v[0], v[1], v[2])]);
    return dist;
}

// Nearest-rank percentile: the ceil(0.95*n)-th smallest, 1-indexed, with the
// rank computed in exact integer arithmetic.
double rank95(std::vector<double>& dist) {
    const std::size_t n = dist.size();
    const std::size_t rank = (19 * n + 19) / 20;
    std::nth_element(dist.begin(), dist.begin() + (rank - 1), dist.end());
    return dist[rank - 1];
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

struct DirectedDistancePair {
    std::vector<double> pred_to_ref;
    std::vector<double> ref_to_pred;
};

std::optional<DirectedDistancePair> surface_distances(const SurfaceSet& pred, const SurfaceSet& ref,
                                                      const GridGeometry& geom) {
    if (pred.geometry != geom || ref.geometry != geom)
        throw ValidationError("surface metrics: surface geometry does not match the given grid");
    if (pred.empty() || ref.empty())
        return std::nullopt;
    const Eigen::ArrayXd field_ref = distance_field(ref, geom);
    const Eigen::ArrayXd field_pred = distance_field(pred, geom);
    return DirectedDistancePair{directed_distances(pred, field_ref, geom),
                                directed_distances(ref, field_pred, geom)};
}

} // namespace

SurfaceSet extract_surface(const LabelVolume& mask, int label) {
    if (label < 0 || label >= mask.num_labels)
        throw std::invalid_argument("extract_surface: label out of range");
    const auto target = static_cast<std::uint8_t>(label);
    const Eigen::Vector3i d = mask.geometry.dims;
    SurfaceSet surface;
    surface.geometry = mask.geometry;
    std::int64_t i = 0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x, ++i) {
                if (mask.data[i] != target)
                    continue;
                const bool boundary =
                    x == 0 || mask.data[i - 1] != target || x == d[0] - 1 || mask.data[i + 1] != target ||
                    y == 0 || mask.data[i - d[0]] != target || y == d[1] - 1 || mask.data[i + d[0]] != target ||
                    z == 0 || mask.data[i - std::int64_t{d[0]} * d[1]] != target || z == d[2] - 1 ||
                    mask.data[i + std::int64_t{d[0]} * d[1]] != target;
                if (boundary)
                    surface.voxels.emplace_back(x, y, z);
            }
    return surface;
}

Eigen::ArrayXd distance_field(const SurfaceSet& targets, const GridGeometry& geom) {
    if (targets.empty())
        throw EmptyStructureError("distance_field: empty target set");
    if (targets.geometry != geom)
        throw ValidationError("distance_field: target geometry does not match the given grid");
    Eigen::ArrayXd sq = Eigen::ArrayXd::Constant(geom.voxel_count(), kInf);
    for (const Eigen::Vector3i& v : targets.voxels)
        sq[geom.index(v[0], v[1], v[2])] = 0.0;
    for (int axis = 0; axis < 3; ++axis)
        edt_pass(sq, geom, axis);
    return sq.sqrt();
}

std::optional<double> mdta(const SurfaceSet& pred, const SurfaceSet& ref, const GridGeometry& geom) {
    const auto d = surface_distances(pred, ref, geom);
    if (!d)
        return std::nullopt;
    return 0.5 * (mean(d->pred_to_ref) + mean(d->ref_to_pred));
}

std::optional<double> hd95(const SurfaceSet& pred, const SurfaceSet& ref, const GridGeometry& geom) {
    auto d = surface_distances(pred, ref, geom);
    if (!d)
        return std::nullopt;
    return std::max(rank95(d->pred_to_ref), rank95(d->ref_to_pred));
}

double volume_difference(const LabelVolume& pred, const LabelVolume& ref, int label) {
    if (pred.geometry != ref.geometry)
        throw ValidationError("volume_difference: geometry mismatch");
    return structure_volume_cm3(pred, label) - structure_volume_cm3(ref, label);
}

MetricReport evaluate_case(const LabelVolume& pred, const LabelVolume& ref, std::span<const int> labels,
                           const std::string& case_id, const std::string& method,
                           const std::map<int, std::string>& label_names) {
    if (pred.geometry != ref.geometry)
        throw ValidationError("evaluate_case: prediction and reference geometry mismatch");
    MetricReport report;
    report.case_id = case_id;
    report.method = method;
    for (int label : labels) {
        OrganMetrics m;
        m.label = label;
        const auto name_it = label_names.find(label);
        m.organ_name = name_it != label_names.end() ? name_it->second : "label_" + std::to_string(label);
        const SurfaceSet pred_surface = extract_surface(pred, label);
        const SurfaceSet ref_surface = extract_surface(ref, label);
        const auto d = surface_distances(pred_surface, ref_surface, pred.geometry);
        if (d) {
            m.mdta_mm = 0.5 * (mean(d->pred_to_ref) + mean(d->ref_to_pred));
            auto pred_to_ref = d->pred_to_ref;
            auto ref_to_pred = d->ref_to_pred;
            m.hd95_mm = std::max(rank95(pred_to_ref), rank95(ref_to_pred));
        }
        m.volume_diff_cm3 = volume_difference(pred, ref, label);
        report.organs.push_back(std::move(m));
    }
    return report;
}

} // namespace segens
