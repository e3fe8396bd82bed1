#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segens/volume.hpp"

namespace segens {

/// Counter-based random stream: value(k) = splitmix64 finalizer applied to
/// seed + (k+1)*golden-ratio increment. Pure integer arithmetic, so every
/// platform and language reproduces the same bits. See the README for the
/// exact contract.
struct CounterRng {
    std::uint64_t seed = 0;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    std::uint64_t at(std::uint64_t counter) const {
        return mix(seed + (counter + 1) * 0x9E3779B97F4A7C15ULL);
    }
    /// Derived independent stream.
    CounterRng substream(std::uint64_t key) const { return CounterRng{mix(seed ^ mix(key))}; }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01(std::uint64_t counter) const {
        return static_cast<double>(at(counter) >> 11) * 0x1.0p-53;
    }
    /// Uniform in [-1, 1).
    double uniform_signed(std::uint64_t counter) const { return 2.0 * uniform01(counter) - 1.0; }
};

struct OrganSpec {
    int label = 1;
    std::string name;
    Eigen::Vector3d center_mm;
    Eigen::Vector3d radii_mm;
};

/// Deterministic phantom generator configuration. Voxel centres sit at
/// index * spacing along each axis.
struct SynthConfig {
    std::uint64_t seed = 0;
    GridGeometry geometry;
    std::vector<OrganSpec> organs;  // labels must be exactly 1..K
    int raters = 1;
    std::vector<double> rater_bias_mm;   // one entry per rater; + dilates
    double noise_amplitude_mm = 0.0;     // boundary perturbation amplitude
    double noise_scale_mm = 8.0;         // lattice pitch of the smooth noise field
    double sharpness = 1.0;              // logistic slope mapping mm to score units
    int cases = 1;                       // independent cases per experiment
    double center_jitter_mm = 0.0;       // per-case organ centre jitter
    double radius_jitter_mm = 0.0;       // per-case organ radius jitter

    void validate() const;
};

/// Voxel labelled l iff its centre lies strictly inside organ l's ellipsoid.
/// Overlapping organs are a validation error naming the pair.
LabelVolume generate_ground_truth(const SynthConfig& config);

/// R simulated model outputs: per organ channel, sharpness times the
/// perturbed signed boundary distance (rater bias plus a smooth noise
/// field); the background channel is the negated maximum of the organ
/// channels. Deterministic given (seed, rater).
std::vector<ScoreVolume> generate_model_outputs(const SynthConfig& config, const LabelVolume& truth);

/// Per-case configuration of a multi-case experiment: a derived seed and
/// seeded jitter applied to organ centres and radii.
SynthConfig instantiate_case(const SynthConfig& base, int case_index);

/// Parses the key/value config format documented in the README.
SynthConfig read_synth_config(const std::filesystem::path& path);

/// A ready-to-run sample configuration (64-cube grid, two organs, five
/// raters, moderate noise).
std::string default_synth_config();

} // namespace segens
