#include "segens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace segens {

namespace {

// Substream keys; arbitrary fixed constants documented with the format.
constexpr std::uint64_t kCaseKey = 0x636173ULL;    // per-case derivation
constexpr std::uint64_t kJitterKey = 0x6A6974ULL;  // organ jitter
constexpr std::uint64_t kNoiseKey = 0x6E6F69ULL;   // rater/organ noise lattice

// Smooth noise: a coarse lattice of uniform [-1,1) node values interpolated
// trilinearly at voxel positions. Node (ax,ay,az) uses counter
// (az*ny + ay)*nx + ax of the stream.
struct NoiseField {
    CounterRng stream;
    Eigen::Vector3i nodes;
    double pitch_mm;

    NoiseField(CounterRng s, const GridGeometry& geom, double pitch) : stream(s), pitch_mm(pitch) {
        for (int a = 0; a < 3; ++a) {
            const double extent = (geom.dims[a] - 1) * geom.spacing[a];
            nodes[a] = static_cast<int>(std::floor(extent / pitch_mm)) + 2;
        }
    }

    double node(int ax, int ay, int az) const {
        const std::uint64_t counter =
            (static_cast<std::uint64_t>(az) * nodes[1] + ay) * static_cast<std::uint64_t>(nodes[0]) + ax;
        return stream.uniform_signed(counter);
    }

    double at(const Eigen::Vector3d& pos_mm) const {
        Eigen::Vector3i cell;
        Eigen::Vector3d frac;
        for (int a = 0; a < 3; ++a) {
            const double t = pos_mm[a] / pitch_mm;
            cell[a] = std::min(static_cast<int>(std::floor(t)), nodes[a] - 2);
            frac[a] = t - cell[a];
        }
        double value = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double weight = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                                          (dz ? frac[2] : 1.0 - frac[2]);
                    value += weight * node(cell[0] + dx, cell[1] + dy, cell[2] + dz);
                }
        return value;
    }
};

// Normalized ellipsoid radius of a point; < 1 inside.
double ellipsoid_rho(const Eigen::Vector3d& pos, const OrganSpec& organ) {
    const Eigen::Vector3d rel = (pos - organ.center_mm).cwiseQuotient(organ.radii_mm);
    return rel.norm();
}

// Radial scale converting the normalized coordinate to an approximate
// physical boundary distance; exact for spheres.
double radial_scale(const OrganSpec& organ) {
    return std::cbrt(organ.radii_mm[0] * organ.radii_mm[1] * organ.radii_mm[2]);
}

} // namespace

void SynthConfig::validate() const {
    geometry.validate();
    if (raters < 1)
        throw ValidationError("SynthConfig: raters must be >= 1");
    if (cases < 1)
        throw ValidationError("SynthConfig: cases must be >= 1");
    if (noise_amplitude_mm < 0)
        throw ValidationError("SynthConfig: noise amplitude must be >= 0");
    if (!(noise_scale_mm > 0))
        throw ValidationError("SynthConfig: noise scale must be > 0");
    if (!(sharpness > 0))
        throw ValidationError("SynthConfig: sharpness must be > 0");
    if (center_jitter_mm < 0 || radius_jitter_mm < 0)
        throw ValidationError("SynthConfig: jitter must be >= 0");
    if (rater_bias_mm.size() != static_cast<std::size_t>(raters))
        throw ValidationError("SynthConfig: need one bias value per rater");
    std::set<int> labels;
    for (const OrganSpec& organ : organs) {
        if (!(organ.radii_mm.array() > 0).all())
            throw ValidationError("SynthConfig: organ radii must be > 0");
        labels.insert(organ.label);
    }
    // Consecutive labels keep organ index == channel index - 1.
    for (int expected = 1; const int label : labels) {
        if (label != expected++)
            throw ValidationError("SynthConfig: organ labels must be exactly 1..K");
    }
    if (labels.size() != organs.size())
        throw ValidationError("SynthConfig: duplicate organ label");
}

LabelVolume generate_ground_truth(const SynthConfig& config) {
    config.validate();
    const GridGeometry& geom = config.geometry;
    const int num_labels = std::max<int>(2, static_cast<int>(config.organs.size()) + 1);
    LabelVolume truth = LabelVolume::zeros(geom, num_labels);
    std::int64_t i = 0;
    for (int z = 0; z < geom.dims[2]; ++z)
        for (int y = 0; y < geom.dims[1]; ++y)
            for (int x = 0; x < geom.dims[0]; ++x, ++i) {
                const Eigen::Vector3d pos(x * geom.spacing[0], y * geom.spacing[1], z * geom.spacing[2]);
                for (const OrganSpec& organ : config.organs) {
                    if (ellipsoid_rho(pos, organ) < 1.0) {
                        if (truth.data[i] != 0)
                            throw ValidationError("SynthConfig: organs " + std::to_string(truth.data[i]) + " and " +
                                                  std::to_string(organ.label) + " overlap");
                        truth.data[i] = static_cast<std::uint8_t>(organ.label);
                    }
                }
            }
    return truth;
}

std::vector<ScoreVolume> generate_model_outputs(const SynthConfig& config, const LabelVolume& truth) {
    config.validate();
    const GridGeometry& geom = config.geometry;
    if (truth.geometry != geom)
        throw ValidationError("generate_model_outputs: truth geometry does not match config");
    const int num_organs = static_cast<int>(config.organs.size());
    const int channels = num_organs + 1;
    if (channels < 2)
        throw ValidationError("generate_model_outputs: need at least one organ");
    const std::int64_t n = geom.voxel_count();
    const CounterRng root{config.seed};

    std::vector<ScoreVolume> outputs;
    outputs.reserve(config.raters);
    for (int rater = 0; rater < config.raters; ++rater) {
        const double bias = config.rater_bias_mm[rater];
        std::vector<NoiseField> noise;
        noise.reserve(num_organs);
        for (int o = 0; o < num_organs; ++o)
            noise.emplace_back(root.substream(kNoiseKey + 0x10000ULL * (rater + 1) + o), geom,
                               config.noise_scale_mm);

        ScoreArray data(std::int64_t{channels} * n);
        auto organ_scores = [&](std::int64_t voxel, const Eigen::Vector3d& pos) {
            float best = 0.0f;
            for (int o = 0; o < num_organs; ++o) {
                const OrganSpec& organ = config.organs[o];
                double dist = (1.0 - ellipsoid_rho(pos, organ)) * radial_scale(organ) + bias;
                if (config.noise_amplitude_mm > 0.0)
                    dist += config.noise_amplitude_mm * noise[o].at(pos);
                const float score = static_cast<float>(config.sharpness * dist);
                data[std::int64_t{o + 1} * n + voxel] = score;
                best = o == 0 ? score : std::max(best, score);
            }
            data[voxel] = -best;  // background channel
        };
        std::int64_t i = 0;
        for (int z = 0; z < geom.dims[2]; ++z)
            for (int y = 0; y < geom.dims[1]; ++y)
                for (int x = 0; x < geom.dims[0]; ++x, ++i)
                    organ_scores(i, Eigen::Vector3d(x * geom.spacing[0], y * geom.spacing[1], z * geom.spacing[2]));
        outputs.emplace_back(geom, channels, std::move(data));
    }
    return outputs;
}

SynthConfig instantiate_case(const SynthConfig& base, int case_index) {
    base.validate();
    if (case_index < 0 || case_index >= base.cases)
        throw ValidationError("instantiate_case: case index out of range");
    SynthConfig cfg = base;
    const CounterRng root{base.seed};
    const CounterRng case_stream = root.substream(kCaseKey + static_cast<std::uint64_t>(case_index));
    cfg.seed = case_stream.seed;
    const CounterRng jitter = case_stream.substream(kJitterKey);
    std::uint64_t counter = 0;
    for (OrganSpec& organ : cfg.organs) {
        for (int a = 0; a < 3; ++a)
            organ.center_mm[a] += base.center_jitter_mm * jitter.uniform_signed(counter++);
        for (int a = 0; a < 3; ++a) {
            organ.radii_mm[a] += base.radius_jitter_mm * jitter.uniform_signed(counter++);
            organ.radii_mm[a] = std::max(organ.radii_mm[a], 1.0);
        }
    }
    cfg.cases = 1;
    cfg.center_jitter_mm = 0.0;
    cfg.radius_jitter_mm = 0.0;
    return cfg;
}

} // namespace segens
