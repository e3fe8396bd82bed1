#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "segens/metrics.hpp"
#include "segens/volume.hpp"

namespace segens {

/// Shortest decimal representation that parses back to the same double,
/// always carrying a decimal point or exponent. Locale-independent.
std::string format_double(double value);
double parse_double(std::string_view token, const std::string& what);
std::int64_t parse_int(std::string_view token, const std::string& what);

std::uint64_t fnv1a64(std::span<const std::byte> bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

using Volume = std::variant<LabelVolume, ScoreVolume>;

struct VolumeInfo {
    bool is_label = false;
    GridGeometry geometry;
    int channels = 1;  // 1 for label volumes
};

/// Header-only read: geometry, kind and a payload-size check, without
/// loading voxel data.
VolumeInfo read_volume_info(const std::filesystem::path& path);

/// Reads a volume in the MetaImage subset documented in the README.
/// MET_UCHAR yields a LabelVolume (num_labels inferred as max value + 1,
/// at least 2); MET_FLOAT with NDims=4 yields a ScoreVolume.
Volume read_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
ScoreVolume read_score_volume(const std::filesystem::path& path);

/// Writes a volume; ".mhd" produces a header plus sibling ".raw", any other
/// extension a single file with the payload appended (ElementDataFile =
/// LOCAL). Round-trips bit-exactly.
void write_volume(const LabelVolume& volume, const std::filesystem::path& path);
void write_volume(const ScoreVolume& volume, const std::filesystem::path& path);

struct CaseManifest {
    std::string case_id;
    std::filesystem::path reference_path;
    std::vector<std::filesystem::path> model_output_paths;
    std::map<int, std::string> label_names;
    // Validated against every referenced volume:
    GridGeometry geometry;
    bool score_models = false;  // true when model outputs are score volumes
    int score_channels = 0;     // C when score_models
};

/// Parses and eagerly validates a case manifest: every referenced volume is
/// opened (header + payload size) and checked for identical geometry and a
/// homogeneous model-output kind.
CaseManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const CaseManifest& manifest, const std::filesystem::path& path);

enum class ReportFormat { Csv, Text };

/// Single-case report in either format.
void write_report(const MetricReport& report, const std::filesystem::path& path, ReportFormat format);
/// Aggregate CSV: one row per (case, organ).
void write_report_csv(std::span<const MetricReport> reports, const std::filesystem::path& path);
std::vector<MetricReport> read_report_csv(const std::filesystem::path& path);

/// Generic "key = value" file support used by manifests and configs:
/// comments (#) and blank lines ignored, keys may repeat, unknown keys are
/// the caller's to reject.
struct KeyValueFile {
    std::vector<std::pair<std::string, std::string>> entries;

    std::vector<std::string> values(const std::string& key) const;
    std::string single(const std::string& key) const;  // exactly one, else ParseError
    bool has(const std::string& key) const;
};
KeyValueFile read_key_value_file(const std::filesystem::path& path, std::span<const std::string> allowed_keys);

} // namespace segens
