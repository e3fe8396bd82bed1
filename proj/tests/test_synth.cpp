#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "segens/fusion.hpp"
#include "segens/metrics.hpp"
#include "segens/synth.hpp"
#include "test_support.hpp"

using namespace segens;
using testutil::geom;

TEST_SUITE_BEGIN("synth");

namespace {

SynthConfig sphere_config(double radius_mm, int dim = 32, int raters = 1) {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.geometry = geom(dim, dim, dim);
    OrganSpec organ;
    organ.label = 1;
    organ.name = "sphere";
    const double c = (dim - 1) / 2.0;
    organ.center_mm = Eigen::Vector3d(c, c, c);
    organ.radii_mm = Eigen::Vector3d(radius_mm, radius_mm, radius_mm);
    cfg.organs = {organ};
    cfg.raters = raters;
    cfg.rater_bias_mm.assign(static_cast<std::size_t>(raters), 0.0);
    cfg.sharpness = 2.0;
    return cfg;
}

double mdta_vs_truth(const LabelVolume& pred, const LabelVolume& truth, int label) {
    const SurfaceSet sp = extract_surface(pred, label);
    const SurfaceSet st = extract_surface(truth, label);
    REQUIRE_FALSE(sp.empty());
    REQUIRE_FALSE(st.empty());
    return *mdta(sp, st, truth.geometry);
}

} // namespace

TEST_CASE("a 5 mm sphere rasterizes to roughly its analytic volume") {
    const SynthConfig cfg = sphere_config(5.0);
    const LabelVolume truth = generate_ground_truth(cfg);
    const double count = static_cast<double>((truth.data == 1).count());
    const double analytic = 4.0 / 3.0 * std::numbers::pi * 125.0;
    CHECK(count > analytic * 0.85);
    CHECK(count < analytic * 1.15);
}

TEST_CASE("zero organs produce an all-background volume") {
    SynthConfig cfg = sphere_config(5.0);
    cfg.organs.clear();
    const LabelVolume truth = generate_ground_truth(cfg);
    CHECK((truth.data == 0).all());
    CHECK(truth.num_labels == 2);
}

TEST_CASE("two disjoint spheres give one component per label") {
    SynthConfig cfg = sphere_config(5.0);
    OrganSpec second = cfg.organs[0];
    second.label = 2;
    second.name = "other";
    second.center_mm = Eigen::Vector3d(7.0, 7.0, 7.0);
    second.radii_mm = Eigen::Vector3d(4.0, 4.0, 4.0);
    cfg.organs.push_back(second);
    const LabelVolume truth = generate_ground_truth(cfg);
    CHECK(oracle::connected_components(truth, 1) == 1);
    CHECK(oracle::connected_components(truth, 2) == 1);
}

TEST_CASE("overlapping organs are rejected naming the pair") {
    SynthConfig cfg = sphere_config(8.0);
    OrganSpec second = cfg.organs[0];
    second.label = 2;
    second.center_mm += Eigen::Vector3d(3.0, 0.0, 0.0);
    cfg.organs.push_back(second);
    try {
        (void)generate_ground_truth(cfg);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("1") != std::string::npos);
        CHECK(what.find("2") != std::string::npos);
        CHECK(what.find("overlap") != std::string::npos);
    }
}

TEST_CASE("unperturbed high-sharpness raters reproduce the truth exactly") {
    SynthConfig cfg = sphere_config(6.0, 24, 3);
    cfg.noise_amplitude_mm = 0.0;
    const LabelVolume truth = generate_ground_truth(cfg);
    for (const ScoreVolume& scores : generate_model_outputs(cfg, truth))
        CHECK((argmax_labels(scores).data == truth.data).all());
}

TEST_CASE("generation is bit-identical for the same seed") {
    SynthConfig cfg = sphere_config(6.0, 24, 3);
    cfg.noise_amplitude_mm = 1.0;
    cfg.rater_bias_mm = {0.2, -0.2, 0.0};
    const LabelVolume t1 = generate_ground_truth(cfg);
    const LabelVolume t2 = generate_ground_truth(cfg);
    CHECK((t1.data == t2.data).all());
    const auto raters1 = generate_model_outputs(cfg, t1);
    const auto raters2 = generate_model_outputs(cfg, t2);
    REQUIRE(raters1.size() == raters2.size());
    for (std::size_t r = 0; r < raters1.size(); ++r)
        CHECK((raters1[r].data == raters2[r].data).all());

    SynthConfig other = cfg;
    other.seed = 8;
    const auto raters3 = generate_model_outputs(other, t1);
    CHECK_FALSE((raters3[0].data == raters1[0].data).all());
}

TEST_CASE("a +1 mm bias dilates by roughly surface area times 1 mm") {
    SynthConfig cfg = sphere_config(10.0, 40, 1);
    cfg.rater_bias_mm = {1.0};
    cfg.noise_amplitude_mm = 0.0;
    const LabelVolume truth = generate_ground_truth(cfg);
    const auto raters = generate_model_outputs(cfg, truth);
    const LabelVolume pred = argmax_labels(raters[0]);
    const double truth_count = static_cast<double>((truth.data == 1).count());
    const double pred_count = static_cast<double>((pred.data == 1).count());
    CHECK(pred_count > truth_count);
    const double shell = 4.0 * std::numbers::pi * 100.0;  // 4 pi r^2 * 1 mm
    CHECK(pred_count - truth_count > shell * 0.75);
    CHECK(pred_count - truth_count < shell * 1.25);
}

TEST_CASE("expected mDTA grows with the noise amplitude") {
    const double levels[3] = {0.5, 1.5, 3.0};
    double mean_mdta[3] = {0.0, 0.0, 0.0};
    const int seeds = 20;
    for (int level = 0; level < 3; ++level) {
        for (int s = 0; s < seeds; ++s) {
            SynthConfig cfg = sphere_config(8.0, 28, 1);
            cfg.seed = 1000 + static_cast<std::uint64_t>(s);
            cfg.noise_amplitude_mm = levels[level];
            cfg.noise_scale_mm = 6.0;
            const LabelVolume truth = generate_ground_truth(cfg);
            const auto raters = generate_model_outputs(cfg, truth);
            mean_mdta[level] += mdta_vs_truth(argmax_labels(raters[0]), truth, 1);
        }
        mean_mdta[level] /= seeds;
    }
    CHECK(mean_mdta[0] <= mean_mdta[1]);
    CHECK(mean_mdta[1] <= mean_mdta[2]);
    CHECK(mean_mdta[0] < mean_mdta[2]);  // strictly overall
}

TEST_CASE("instantiate_case applies deterministic jitter within bounds") {
    SynthConfig base = sphere_config(6.0, 32, 2);
    base.rater_bias_mm = {0.0, 0.1};
    base.cases = 5;
    base.center_jitter_mm = 2.0;
    base.radius_jitter_mm = 1.0;
    const SynthConfig a = instantiate_case(base, 2);
    const SynthConfig b = instantiate_case(base, 2);
    CHECK(a.seed == b.seed);
    CHECK(a.organs[0].center_mm == b.organs[0].center_mm);
    CHECK((a.organs[0].center_mm - base.organs[0].center_mm).cwiseAbs().maxCoeff() <= 2.0);
    CHECK((a.organs[0].radii_mm - base.organs[0].radii_mm).cwiseAbs().maxCoeff() <= 1.0);
    const SynthConfig c = instantiate_case(base, 3);
    CHECK(c.seed != a.seed);
    CHECK_THROWS_AS((void)instantiate_case(base, 5), ValidationError);
}

TEST_CASE("config validation rejects inconsistent settings") {
    SynthConfig cfg = sphere_config(5.0);
    cfg.rater_bias_mm = {0.0, 0.0};  // two biases for one rater
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = sphere_config(5.0);
    cfg.organs[0].label = 2;  // labels must start at 1
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = sphere_config(5.0);
    cfg.noise_amplitude_mm = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = sphere_config(5.0);
    cfg.sharpness = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("synth config parsing validates keys and values") {
    testutil::TempDir tmp;
    const std::string good =
        "seed = 5\ndims = 8 8 8\nspacing = 1.0 1.0 1.0\nraters = 2\n"
        "organ = 1 a ellipsoid 3 3 3 2 2 2\nbias_mm = 0.1 -0.1\n";
    testutil::write_file_text(tmp / "c.txt", good);
    const SynthConfig cfg = read_synth_config(tmp / "c.txt");
    CHECK(cfg.raters == 2);
    CHECK(cfg.organs.size() == 1);
    CHECK(cfg.rater_bias_mm == std::vector<double>{0.1, -0.1});

    testutil::write_file_text(tmp / "bad1.txt", good + "wibble = 3\n");
    CHECK_THROWS_AS((void)read_synth_config(tmp / "bad1.txt"), ParseError);
    testutil::write_file_text(tmp / "bad2.txt",
                              "seed = 5\ndims = 8 8\nspacing = 1 1 1\norgan = 1 a ellipsoid 3 3 3 2 2 2\n");
    CHECK_THROWS_AS((void)read_synth_config(tmp / "bad2.txt"), ParseError);
    testutil::write_file_text(tmp / "bad3.txt",
                              "seed = 5\ndims = 8 8 8\nspacing = 1 1 1\nraters = 3\n"
                              "organ = 1 a ellipsoid 3 3 3 2 2 2\nbias_mm = 0.1 -0.1\n");
    CHECK_THROWS_AS((void)read_synth_config(tmp / "bad3.txt"), ValidationError);
}

TEST_CASE("the counter RNG is a fixed bit-exact function") {
    // Frozen values from the documented splitmix64 contract.
    const CounterRng rng{0};
    CHECK(rng.at(0) == 0xE220A8397B1DCDAFULL);
    CHECK(rng.at(1) == 0x6E789E6AA1B965F4ULL);
    const CounterRng seeded{1234567};
    const double u = seeded.uniform01(5);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(seeded.uniform01(5) == u);
}

TEST_SUITE_END();
