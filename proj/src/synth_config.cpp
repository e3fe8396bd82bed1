#include <array>

#include "segens/io.hpp"
#include "segens/synth.hpp"

namespace segens {

namespace {

std::vector<std::string> tokens_of(const std::string& value) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < value.size()) {
        while (i < value.size() && (value[i] == ' ' || value[i] == '\t'))
            ++i;
        std::size_t j = i;
        while (j < value.size() && value[j] != ' ' && value[j] != '\t')
            ++j;
        if (j > i)
            tokens.push_back(value.substr(i, j - i));
        i = j;
    }
    return tokens;
}

} // namespace

SynthConfig read_synth_config(const std::filesystem::path& path) {
    static const std::vector<std::string> keys = {
        "seed",          "dims",          "spacing",        "organ",
        "raters",        "cases",         "bias_mm",        "noise_amplitude_mm",
        "noise_scale_mm", "sharpness",    "center_jitter_mm", "radius_jitter_mm"};
    const KeyValueFile kv = read_key_value_file(path, keys);
    const std::string ctx = path.string();

    SynthConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(parse_int(kv.single("seed"), ctx + ": seed"));

    const auto dims = tokens_of(kv.single("dims"));
    const auto spacing = tokens_of(kv.single("spacing"));
    if (dims.size() != 3 || spacing.size() != 3)
        throw ParseError(ctx + ": dims and spacing need three entries each");
    Eigen::Vector3i d;
    Eigen::Vector3d s;
    for (int a = 0; a < 3; ++a) {
        d[a] = static_cast<int>(parse_int(dims[a], ctx + ": dims"));
        s[a] = parse_double(spacing[a], ctx + ": spacing");
    }
    cfg.geometry = GridGeometry(d, s);

    for (const std::string& entry : kv.values("organ")) {
        const auto t = tokens_of(entry);
        if (t.size() != 9 || t[2] != "ellipsoid")
            throw ParseError(ctx + ": organ needs '<label> <name> ellipsoid cx cy cz rx ry rz'");
        OrganSpec organ;
        organ.label = static_cast<int>(parse_int(t[0], ctx + ": organ label"));
        organ.name = t[1];
        for (int a = 0; a < 3; ++a) {
            organ.center_mm[a] = parse_double(t[3 + a], ctx + ": organ center");
            organ.radii_mm[a] = parse_double(t[6 + a], ctx + ": organ radii");
        }
        cfg.organs.push_back(std::move(organ));
    }

    cfg.raters = kv.has("raters") ? static_cast<int>(parse_int(kv.single("raters"), ctx + ": raters")) : 1;
    cfg.cases = kv.has("cases") ? static_cast<int>(parse_int(kv.single("cases"), ctx + ": cases")) : 1;
    if (kv.has("bias_mm")) {
        for (const std::string& t : tokens_of(kv.single("bias_mm")))
            cfg.rater_bias_mm.push_back(parse_double(t, ctx + ": bias_mm"));
        if (cfg.rater_bias_mm.size() == 1)
            cfg.rater_bias_mm.assign(static_cast<std::size_t>(std::max(cfg.raters, 1)), cfg.rater_bias_mm[0]);
    } else {
        cfg.rater_bias_mm.assign(static_cast<std::size_t>(std::max(cfg.raters, 1)), 0.0);
    }
    if (kv.has("noise_amplitude_mm"))
        cfg.noise_amplitude_mm = parse_double(kv.single("noise_amplitude_mm"), ctx + ": noise_amplitude_mm");
    if (kv.has("noise_scale_mm"))
        cfg.noise_scale_mm = parse_double(kv.single("noise_scale_mm"), ctx + ": noise_scale_mm");
    if (kv.has("sharpness"))
        cfg.sharpness = parse_double(kv.single("sharpness"), ctx + ": sharpness");
    if (kv.has("center_jitter_mm"))
        cfg.center_jitter_mm = parse_double(kv.single("center_jitter_mm"), ctx + ": center_jitter_mm");
    if (kv.has("radius_jitter_mm"))
        cfg.radius_jitter_mm = parse_double(kv.single("radius_jitter_mm"), ctx + ": radius_jitter_mm");

    cfg.validate();
    return cfg;
}

std::string default_synth_config() {
    return
        "# segens synthetic experiment\n"
        "seed = 20230517\n"
        "dims = 64 64 64\n"
        "spacing = 1.0 1.0 1.0\n"
        "cases = 3\n"
        "raters = 5\n"
        "organ = 1 organ_a ellipsoid 22 32 32 10 9 8\n"
        "organ = 2 organ_b ellipsoid 46 32 32 6 7 8\n"
        "bias_mm = 0.3 -0.3 0.15 -0.15 0.0\n"
        "noise_amplitude_mm = 1.5\n"
        "noise_scale_mm = 8.0\n"
        "sharpness = 2.0\n"
        "center_jitter_mm = 2.0\n"
        "radius_jitter_mm = 1.0\n";
}

} // namespace segens
