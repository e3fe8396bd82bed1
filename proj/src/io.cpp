#include "segens/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "volume payloads are little-endian");

namespace segens {

namespace fs = std::filesystem;

std::string format_double(double value) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEnif") == std::string::npos)
        s += ".0";
    return s;
}

double parse_double(std::string_view token, const std::string& what) {
    double value = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw ParseError(what + ": cannot parse '" + std::string(token) + "' as a real number");
    return value;
}

std::int64_t parse_int(std::string_view token, const std::string& what) {
    std::int64_t value = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw ParseError(what + ": cannot parse '" + std::string(token) + "' as an integer");
    return value;
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001B3ULL;
    }
    return h;
}

namespace {

std::vector<std::byte> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::byte> bytes;
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0)
        throw IoError("cannot determine size of '" + path.string() + "'");
    bytes.resize(static_cast<std::size_t>(size));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in)
        throw IoError("failed reading '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t'))
            ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t')
            ++j;
        if (j > i)
            tokens.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return tokens;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// ---- MetaImage subset ------------------------------------------------------

const char* const kHeaderKeys[] = {"ObjectType",  "NDims",
                                   "DimSize",     "ElementSpacing",
                                   "ElementType", "ElementByteOrderMSB",
                                   "ElementDataFile"};

struct MetaHeader {
    int ndims = 0;
    std::vector<std::int64_t> dim_size;
    std::vector<double> spacing;
    bool is_uchar = false;
    std::string data_file;        // "LOCAL" or sibling filename
    std::size_t payload_offset = 0;  // into the header file, when LOCAL
};

MetaHeader parse_meta_header(const std::vector<std::byte>& bytes, const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    std::size_t payload_offset = 0;
    bool saw_data_file = false;
    while (pos < bytes.size()) {
        const char* begin = reinterpret_cast<const char*>(bytes.data()) + pos;
        const void* nl = std::memchr(begin, '\n', bytes.size() - pos);
        if (nl == nullptr)
            throw ParseError("'" + path.string() + "': header not terminated (missing ElementDataFile line)");
        const std::size_t len = static_cast<std::size_t>(static_cast<const char*>(nl) - begin);
        std::string_view line = trim(std::string_view(begin, len));
        pos += len + 1;
        if (line.empty())
            throw ParseError("'" + path.string() + "': blank line inside header");
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("'" + path.string() + "': header line without '=': " + std::string(line));
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (std::find_if(std::begin(kHeaderKeys), std::end(kHeaderKeys),
                         [&](const char* k) { return key == k; }) == std::end(kHeaderKeys))
            throw ParseError("'" + path.string() + "': unknown header key '" + key + "'");
        if (!kv.emplace(key, value).second)
            throw ParseError("'" + path.string() + "': duplicate header key '" + key + "'");
        if (key == "ElementDataFile") {
            saw_data_file = true;
            payload_offset = pos;
            break;
        }
    }
    if (!saw_data_file)
        throw ParseError("'" + path.string() + "': missing header key 'ElementDataFile'");
    for (const char* key : kHeaderKeys)
        if (!kv.count(key))
            throw ParseError("'" + path.string() + "': missing header key '" + std::string(key) + "'");

    if (kv["ObjectType"] != "Image")
        throw ParseError("'" + path.string() + "': ObjectType must be Image");
    if (kv["ElementByteOrderMSB"] != "False")
        throw ValidationError("'" + path.string() + "': ElementByteOrderMSB must be False (little-endian)");

    MetaHeader h;
    h.ndims = static_cast<int>(parse_int(kv["NDims"], path.string() + ": NDims"));
    if (h.ndims != 3 && h.ndims != 4)
        throw ParseError("'" + path.string() + "': NDims must be 3 (labels) or 4 (scores)");

    const auto dim_tokens = split_ws(kv["DimSize"]);
    if (static_cast<int>(dim_tokens.size()) != h.ndims)
        throw ParseError("'" + path.string() + "': DimSize must list exactly NDims entries");
    for (const std::string& t : dim_tokens) {
        const std::int64_t d = parse_int(t, path.string() + ": DimSize");
        if (d < 1)
            throw ValidationError("'" + path.string() + "': DimSize entries must be >= 1");
        h.dim_size.push_back(d);
    }

    const auto sp_tokens = split_ws(kv["ElementSpacing"]);
    if (static_cast<int>(sp_tokens.size()) != h.ndims)
        throw ParseError("'" + path.string() + "': ElementSpacing must list exactly NDims entries");
    for (const std::string& t : sp_tokens) {
        const double s = parse_double(t, path.string() + ": ElementSpacing");
        if (!(s > 0.0) || !std::isfinite(s))
            throw ValidationError("'" + path.string() + "': ElementSpacing entries must be finite and > 0");
        h.spacing.push_back(s);
    }

    const std::string& type = kv["ElementType"];
    if (type == "MET_UCHAR")
        h.is_uchar = true;
    else if (type == "MET_FLOAT")
        h.is_uchar = false;
    else
        throw ParseError("'" + path.string() + "': ElementType must be MET_UCHAR or MET_FLOAT");
    if (h.is_uchar && h.ndims != 3)
        throw ParseError("'" + path.string() + "': MET_UCHAR volumes must have NDims = 3");
    if (!h.is_uchar && h.ndims != 4)
        throw ParseError("'" + path.string() + "': MET_FLOAT volumes must have NDims = 4");
    if (!h.is_uchar && (h.dim_size[3] < 2 || h.dim_size[3] > 4096))
        throw ValidationError("'" + path.string() + "': channel count must be in 2..4096");
    // Axis caps checked before any payload-size arithmetic or int casts.
    for (int a = 0; a < 3; ++a)
        if (h.dim_size[a] > (std::int64_t{1} << 20))
            throw ValidationError("'" + path.string() + "': DimSize entry exceeds the supported range");
    GridGeometry(Eigen::Vector3i(static_cast<int>(h.dim_size[0]), static_cast<int>(h.dim_size[1]),
                                 static_cast<int>(h.dim_size[2])),
                 Eigen::Vector3d(h.spacing[0], h.spacing[1], h.spacing[2]));

    h.data_file = kv["ElementDataFile"];
    if (h.data_file.empty())
        throw ParseError("'" + path.string() + "': ElementDataFile must be LOCAL or a file name");
    h.payload_offset = payload_offset;
    return h;
}

std::int64_t payload_bytes(const MetaHeader& h) {
    std::int64_t n = h.is_uchar ? 1 : 4;
    for (std::int64_t d : h.dim_size)
        n *= d;
    return n;
}

GridGeometry header_geometry(const MetaHeader& h) {
    return GridGeometry(
        Eigen::Vector3i(static_cast<int>(h.dim_size[0]), static_cast<int>(h.dim_size[1]),
                        static_cast<int>(h.dim_size[2])),
        Eigen::Vector3d(h.spacing[0], h.spacing[1], h.spacing[2]));
}

// Returns the payload location: either a view into `bytes` (LOCAL) or the
// sibling file contents loaded into `sibling`.
std::span<const std::byte> locate_payload(const MetaHeader& h, const std::vector<std::byte>& bytes,
                                          const fs::path& path, std::vector<std::byte>& sibling,
                                          bool load) {
    const std::int64_t expected = payload_bytes(h);
    if (h.data_file == "LOCAL") {
        const std::int64_t actual = static_cast<std::int64_t>(bytes.size() - h.payload_offset);
        if (actual != expected)
            throw TruncationError("'" + path.string() + "': payload has " + std::to_string(actual) +
                                  " bytes, header promises " + std::to_string(expected));
        return std::span(bytes).subspan(h.payload_offset);
    }
    const fs::path raw_path = path.parent_path() / h.data_file;
    std::error_code ec;
    const auto size = fs::file_size(raw_path, ec);
    if (ec)
        throw IoError("'" + path.string() + "': cannot stat data file '" + raw_path.string() + "'");
    if (static_cast<std::int64_t>(size) != expected)
        throw TruncationError("'" + raw_path.string() + "': payload has " + std::to_string(size) +
                              " bytes, header promises " + std::to_string(expected));
    if (!load)
        return {};
    sibling = read_file_bytes(raw_path);
    return sibling;
}

Volume decode_volume(const MetaHeader& h, std::span<const std::byte> payload, const fs::path& path) {
    const GridGeometry geom = header_geometry(h);
    if (h.is_uchar) {
        LabelArray data(geom.voxel_count());
        std::memcpy(data.data(), payload.data(), payload.size());
        const int num_labels = std::max(2, int{data.maxCoeff()} + 1);
        return LabelVolume(geom, num_labels, std::move(data));
    }
    const int channels = static_cast<int>(h.dim_size[3]);
    ScoreArray data(std::int64_t{channels} * geom.voxel_count());
    std::memcpy(data.data(), payload.data(), payload.size());
    if (!data.isFinite().all())
        throw ValidationError("'" + path.string() + "': score payload contains non-finite values");
    return ScoreVolume(geom, channels, std::move(data));
}

void append_header(std::string& out, bool is_uchar, const GridGeometry& geom, int channels,
                   const std::string& data_file) {
    out += "ObjectType = Image\n";
    out += is_uchar ? "NDims = 3\n" : "NDims = 4\n";
    out += "DimSize = " + std::to_string(geom.dims[0]) + " " + std::to_string(geom.dims[1]) + " " +
           std::to_string(geom.dims[2]);
    if (!is_uchar)
        out += " " + std::to_string(channels);
    out += "\nElementSpacing = " + format_double(geom.spacing[0]) + " " + format_double(geom.spacing[1]) + " " +
           format_double(geom.spacing[2]);
    if (!is_uchar)
        out += " 1.0";
    out += "\nElementType = ";
    out += is_uchar ? "MET_UCHAR" : "MET_FLOAT";
    out += "\nElementByteOrderMSB = False\n";
    out += "ElementDataFile = " + data_file + "\n";
}

void write_volume_impl(bool is_uchar, const GridGeometry& geom, int channels,
                       std::span<const std::byte> payload, const fs::path& path) {
    const bool sibling = path.extension() == ".mhd";
    std::string header;
    if (sibling) {
        const std::string raw_name = path.stem().string() + ".raw";
        append_header(header, is_uchar, geom, channels, raw_name);
        write_file_bytes(path, std::as_bytes(std::span(header)));
        write_file_bytes(path.parent_path() / raw_name, payload);
    } else {
        append_header(header, is_uchar, geom, channels, "LOCAL");
        std::vector<std::byte> bytes(header.size() + payload.size());
        std::memcpy(bytes.data(), header.data(), header.size());
        std::memcpy(bytes.data() + header.size(), payload.data(), payload.size());
        write_file_bytes(path, bytes);
    }
}

} // namespace

std::uint64_t fnv1a64_file(const fs::path& path) {
    return fnv1a64(read_file_bytes(path));
}

VolumeInfo read_volume_info(const fs::path& path) {
    const std::vector<std::byte> bytes = read_file_bytes(path);
    const MetaHeader h = parse_meta_header(bytes, path);
    std::vector<std::byte> sibling;
    locate_payload(h, bytes, path, sibling, /*load=*/false);
    VolumeInfo info;
    info.is_label = h.is_uchar;
    info.geometry = header_geometry(h);
    info.channels = h.is_uchar ? 1 : static_cast<int>(h.dim_size[3]);
    return info;
}

Volume read_volume(const fs::path& path) {
    const std::vector<std::byte> bytes = read_file_bytes(path);
    const MetaHeader h = parse_meta_header(bytes, path);
    std::vector<std::byte> sibling;
    const auto payload = locate_payload(h, bytes, path, sibling, /*load=*/true);
    return decode_volume(h, payload, path);
}

LabelVolume read_label_volume(const fs::path& path) {
    Volume v = read_volume(path);
    if (!std::holds_alternative<LabelVolume>(v))
        throw ValidationError("'" + path.string() + "': expected a label volume (MET_UCHAR), found scores");
    return std::get<LabelVolume>(std::move(v));
}

ScoreVolume read_score_volume(const fs::path& path) {
    Volume v = read_volume(path);
    if (!std::holds_alternative<ScoreVolume>(v))
        throw ValidationError("'" + path.string() + "': expected a score volume (MET_FLOAT), found labels");
    return std::get<ScoreVolume>(std::move(v));
}

void write_volume(const LabelVolume& volume, const fs::path& path) {
    write_volume_impl(true, volume.geometry, 1,
                      std::as_bytes(std::span(volume.data.data(), static_cast<std::size_t>(volume.data.size()))),
                      path);
}

void write_volume(const ScoreVolume& volume, const fs::path& path) {
    write_volume_impl(false, volume.geometry, volume.channels,
                      std::as_bytes(std::span(volume.data.data(), static_cast<std::size_t>(volume.data.size()))),
                      path);
}

// ---- key/value files -------------------------------------------------------

std::vector<std::string> KeyValueFile::values(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries)
        if (k == key)
            out.push_back(v);
    return out;
}

std::string KeyValueFile::single(const std::string& key) const {
    const auto v = values(key);
    if (v.empty())
        throw ParseError("missing key '" + key + "'");
    if (v.size() > 1)
        throw ParseError("key '" + key + "' given more than once");
    return v[0];
}

bool KeyValueFile::has(const std::string& key) const {
    return !values(key).empty();
}

KeyValueFile read_key_value_file(const fs::path& path, std::span<const std::string> allowed_keys) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    KeyValueFile kv;
    std::string raw;
    while (std::getline(in, raw)) {
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("'" + path.string() + "': line without '=': " + std::string(line));
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (std::find(allowed_keys.begin(), allowed_keys.end(), key) == allowed_keys.end())
            throw ParseError("'" + path.string() + "': unknown key '" + key + "'");
        kv.entries.emplace_back(key, value);
    }
    return kv;
}

// ---- manifests --------------------------------------------------------------

CaseManifest read_manifest(const fs::path& path) {
    static const std::vector<std::string> keys = {"case_id", "reference", "model_output", "label_name"};
    const KeyValueFile kv = read_key_value_file(path, keys);
    CaseManifest m;
    try {
        m.case_id = kv.single("case_id");
        m.reference_path = path.parent_path() / kv.single("reference");
    } catch (const ParseError& e) {
        throw ParseError("'" + path.string() + "': " + e.what());
    }
    for (const std::string& rel : kv.values("model_output"))
        m.model_output_paths.push_back(path.parent_path() / rel);
    if (m.model_output_paths.empty())
        throw ValidationError("'" + path.string() + "': need at least one model_output");
    for (const std::string& entry : kv.values("label_name")) {
        const auto tokens = split_ws(entry);
        if (tokens.size() < 2)
            throw ParseError("'" + path.string() + "': label_name needs '<label> <name>'");
        const std::int64_t label = parse_int(tokens[0], path.string() + ": label_name");
        if (label < 1 || label > 255)
            throw ValidationError("'" + path.string() + "': label_name label must be in 1..255");
        std::string name = tokens[1];
        for (std::size_t i = 2; i < tokens.size(); ++i)
            name += "_" + tokens[i];
        m.label_names[static_cast<int>(label)] = name;
    }

    const VolumeInfo ref_info = read_volume_info(m.reference_path);
    if (!ref_info.is_label)
        throw ValidationError("'" + path.string() + "': reference must be a label volume: " +
                              m.reference_path.string());
    m.geometry = ref_info.geometry;

    std::string mismatched;
    bool first = true;
    for (const fs::path& p : m.model_output_paths) {
        const VolumeInfo info = read_volume_info(p);
        if (first) {
            m.score_models = !info.is_label;
            m.score_channels = info.channels;
            first = false;
        } else if (info.is_label == m.score_models) {
            throw ValidationError("'" + path.string() + "': model outputs mix score and label volumes (" +
                                  p.string() + ")");
        } else if (!info.is_label && info.channels != m.score_channels) {
            throw ValidationError("'" + path.string() + "': model outputs differ in channel count (" + p.string() +
                                  ")");
        }
        if (info.geometry != m.geometry)
            mismatched += (mismatched.empty() ? "" : ", ") + p.string();
    }
    if (!mismatched.empty())
        throw ValidationError("'" + path.string() + "': geometry differs from the reference for: " + mismatched);
    if (m.score_models)
        for (const auto& [label, name] : m.label_names)
            if (label >= m.score_channels)
                throw ValidationError("'" + path.string() + "': label_name " + std::to_string(label) +
                                      " exceeds the score channel count");
    return m;
}

void write_manifest(const CaseManifest& manifest, const fs::path& path) {
    std::string out = "# segens case manifest\n";
    out += "case_id = " + manifest.case_id + "\n";
    out += "reference = " + manifest.reference_path.filename().string() + "\n";
    for (const fs::path& p : manifest.model_output_paths)
        out += "model_output = " + p.filename().string() + "\n";
    for (const auto& [label, name] : manifest.label_names)
        out += "label_name = " + std::to_string(label) + " " + name + "\n";
    write_file_bytes(path, std::as_bytes(std::span(out)));
}

// ---- metric reports ----------------------------------------------------------

namespace {

const char* const kReportHeader =
    "case_id,method,organ_label,organ_name,mdta_mm,hd95_mm,volume_diff_cm3,mdta_defined,hd95_defined";

std::string csv_row(const MetricReport& report, const OrganMetrics& m) {
    std::string row = report.case_id + "," + report.method + "," + std::to_string(m.label) + "," + m.organ_name + ",";
    row += m.mdta_mm ? format_double(*m.mdta_mm) : "";
    row += ",";
    row += m.hd95_mm ? format_double(*m.hd95_mm) : "";
    row += ",";
    row += format_double(m.volume_diff_cm3);
    row += m.mdta_mm ? ",1" : ",0";
    row += m.hd95_mm ? ",1" : ",0";
    return row;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

} // namespace

void write_report_csv(std::span<const MetricReport> reports, const fs::path& path) {
    std::string out = std::string(kReportHeader) + "\n";
    for (const MetricReport& report : reports)
        for (const OrganMetrics& m : report.organs)
            out += csv_row(report, m) + "\n";
    write_file_bytes(path, std::as_bytes(std::span(out)));
}

void write_report(const MetricReport& report, const fs::path& path, ReportFormat format) {
    if (format == ReportFormat::Csv) {
        write_report_csv(std::span(&report, 1), path);
        return;
    }
    std::string out = "# segens metric report\n";
    out += "case_id = " + report.case_id + "\n";
    out += "method = " + report.method + "\n";
    for (const OrganMetrics& m : report.organs) {
        out += "organ = " + std::to_string(m.label) + " " + m.organ_name + "\n";
        out += "mdta_mm = " + (m.mdta_mm ? format_double(*m.mdta_mm) : std::string("undefined")) + "\n";
        out += "hd95_mm = " + (m.hd95_mm ? format_double(*m.hd95_mm) : std::string("undefined")) + "\n";
        out += "volume_diff_cm3 = " + format_double(m.volume_diff_cm3) + "\n";
    }
    write_file_bytes(path, std::as_bytes(std::span(out)));
}

std::vector<MetricReport> read_report_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kReportHeader))
        throw ParseError("'" + path.string() + "': unexpected report CSV header");
    std::vector<MetricReport> reports;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 9)
            throw ParseError("'" + path.string() + "': report row needs 9 fields: " + line);
        OrganMetrics m;
        m.label = static_cast<int>(parse_int(fields[2], path.string() + ": organ_label"));
        m.organ_name = fields[3];
        if (fields[7] == "1")
            m.mdta_mm = parse_double(fields[4], path.string() + ": mdta_mm");
        else if (!fields[4].empty())
            throw ParseError("'" + path.string() + "': mdta marked undefined but carries a value");
        if (fields[8] == "1")
            m.hd95_mm = parse_double(fields[5], path.string() + ": hd95_mm");
        else if (!fields[5].empty())
            throw ParseError("'" + path.string() + "': hd95 marked undefined but carries a value");
        m.volume_diff_cm3 = parse_double(fields[6], path.string() + ": volume_diff_cm3");
        if (!reports.empty() && reports.back().case_id == fields[0] && reports.back().method == fields[1]) {
            reports.back().organs.push_back(std::move(m));
        } else {
            MetricReport r;
            r.case_id = fields[0];
            r.method = fields[1];
            r.organs.push_back(std::move(m));
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

} // namespace segens
