#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "segens/volume.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Unique scratch directory under the test working directory, removed on
// destruction.
struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path = fs::temp_directory_path() /
               ("segens_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)) + "_" +
                std::to_string(rd() % 100000));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path operator/(const std::string& name) const { return path / name; }
};

inline bool rel_close(double a, double b, double tol) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

inline segens::GridGeometry geom(int nx, int ny, int nz, double sx = 1.0, double sy = 1.0, double sz = 1.0) {
    return segens::GridGeometry(Eigen::Vector3i(nx, ny, nz), Eigen::Vector3d(sx, sy, sz));
}

inline segens::LabelVolume random_label_volume(std::mt19937_64& rng, const segens::GridGeometry& g,
                                               int num_labels) {
    std::uniform_int_distribution<int> dist(0, num_labels - 1);
    segens::LabelArray data(g.voxel_count());
    for (std::int64_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::uint8_t>(dist(rng));
    return segens::LabelVolume(g, num_labels, std::move(data));
}

inline segens::ScoreVolume random_score_volume(std::mt19937_64& rng, const segens::GridGeometry& g, int channels,
                                               double lo = -5.0, double hi = 5.0) {
    std::uniform_real_distribution<float> dist(static_cast<float>(lo), static_cast<float>(hi));
    segens::ScoreArray data(std::int64_t{channels} * g.voxel_count());
    for (std::int64_t i = 0; i < data.size(); ++i)
        data[i] = dist(rng);
    return segens::ScoreVolume(g, channels, std::move(data));
}

inline std::string read_file_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace testutil
