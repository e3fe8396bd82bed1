#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <random>

#include "segens/cli.hpp"
#include "segens/fusion.hpp"
#include "segens/io.hpp"
#include "segens/metrics.hpp"
#include "segens/stats.hpp"
#include "segens/synth.hpp"
#include "test_support.hpp"

using namespace segens;
using testutil::geom;
using testutil::TempDir;

TEST_SUITE_BEGIN("cli");

namespace {

namespace fs = std::filesystem;

int run_cli(std::initializer_list<std::string> args) {
    return cli::run(std::vector<std::string>(args));
}

std::string small_config(int cases = 2, int raters = 3) {
    return "seed = 99\n"
           "dims = 20 20 20\n"
           "spacing = 1.0 1.0 1.0\n"
           "cases = " + std::to_string(cases) + "\n"
           "raters = " + std::to_string(raters) + "\n"
           "organ = 1 left ellipsoid 6 9 9 4 3.5 3\n"
           "organ = 2 right ellipsoid 14 9 9 3 3.5 4\n"
           "bias_mm = 0.2\n"
           "noise_amplitude_mm = 0.8\n"
           "noise_scale_mm = 5.0\n"
           "sharpness = 2.0\n";
}

// Writes an experiment and returns the cases list path.
fs::path make_experiment(const TempDir& tmp, const std::string& config) {
    testutil::write_file_text(tmp / "config.txt", config);
    REQUIRE(run_cli({"synth", "--config", (tmp / "config.txt").string(), "--out-dir", (tmp / "exp").string()}) ==
            cli::kExitOk);
    return tmp.path / "exp" / "cases.txt";
}

std::string collect_tree(const fs::path& root) {
    // Relative path -> content digest, newline-joined; order-independent.
    std::vector<std::string> lines;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file())
            continue;
        const std::string rel = entry.path().lexically_relative(root).generic_string();
        lines.push_back(rel + " " + std::to_string(fnv1a64_file(entry.path())));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const std::string& l : lines)
        out += l + "\n";
    return out;
}

} // namespace

TEST_CASE("synth then fuse produces a re-readable volume and provenance") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config());
    REQUIRE(run_cli({"fuse", "--cases", cases.string(), "--method", "softmax-sum", "--out-dir",
                     (tmp / "fused").string()}) == cli::kExitOk);
    const LabelVolume fused = read_label_volume(tmp.path / "fused" / "case_000.mha");
    CHECK(fused.geometry.dims == Eigen::Vector3i(20, 20, 20));
    CHECK(fs::exists(tmp.path / "fused" / "case_000.prov.txt"));
    const std::string prov = testutil::read_file_text(tmp.path / "fused" / "case_000.prov.txt");
    CHECK(prov.find("command = fuse") != std::string::npos);
    CHECK(prov.find("fnv1a64:") != std::string::npos);
}

TEST_CASE("cli staple fusion matches the in-process result") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config(1));
    REQUIRE(run_cli({"fuse", "--cases", cases.string(), "--method", "staple", "--out-dir",
                     (tmp / "fused").string()}) == cli::kExitOk);
    const LabelVolume via_cli = read_label_volume(tmp.path / "fused" / "case_000.mha");

    const CaseManifest manifest = read_manifest(tmp.path / "exp" / "case_000" / "manifest.txt");
    std::vector<LabelVolume> masks;
    for (const auto& p : manifest.model_output_paths)
        masks.push_back(argmax_labels(read_score_volume(p)));
    const LabelVolume direct = staple_multiclass(masks, StapleParams{});
    CHECK((via_cli.data == direct.data).all());
}

TEST_CASE("sum fusion of mask inputs is a usage error, exit code 1") {
    TempDir tmp;
    std::mt19937_64 rng(1);
    write_volume(testutil::random_label_volume(rng, geom(6, 6, 6), 3), tmp / "ref.mha");
    for (int i = 0; i < 3; ++i)
        write_volume(testutil::random_label_volume(rng, geom(6, 6, 6), 3), tmp / ("m" + std::to_string(i) + ".mha"));
    testutil::write_file_text(tmp / "manifest.txt",
                              "case_id = c\nreference = ref.mha\nmodel_output = m0.mha\n"
                              "model_output = m1.mha\nmodel_output = m2.mha\n");
    CHECK(run_cli({"fuse", "--manifest", (tmp / "manifest.txt").string(), "--method", "logit-sum", "--out",
                   (tmp / "out.mha").string()}) == cli::kExitUsage);
    // majority vote on the same masks works
    CHECK(run_cli({"fuse", "--manifest", (tmp / "manifest.txt").string(), "--method", "majority-vote", "--out",
                   (tmp / "out.mha").string()}) == cli::kExitOk);
}

TEST_CASE("eval of the reference against itself gives all-zero metrics") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config(1));
    fs::create_directories(tmp / "pred");
    fs::copy_file(tmp.path / "exp" / "case_000" / "reference.mha", tmp.path / "pred" / "case_000.mha");
    REQUIRE(run_cli({"eval", "--cases", cases.string(), "--pred-dir", (tmp / "pred").string(), "--method-name",
                     "self", "--out-csv", (tmp / "eval.csv").string(), "--report-dir",
                     (tmp / "reports").string(), "--format", "text"}) == cli::kExitOk);
    const auto reports = read_report_csv(tmp / "eval.csv");
    REQUIRE(reports.size() == 1);
    for (const OrganMetrics& m : reports[0].organs) {
        CHECK(*m.mdta_mm == 0.0);
        CHECK(*m.hd95_mm == 0.0);
        CHECK(m.volume_diff_cm3 == 0.0);
    }
    const std::string per_case = testutil::read_file_text(tmp.path / "reports" / "case_000.txt");
    CHECK(per_case.find("mdta_mm = 0.0") != std::string::npos);
}

TEST_CASE("eval CSV equals in-process evaluate_case composition") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config(2));
    REQUIRE(run_cli({"fuse", "--cases", cases.string(), "--method", "majority-vote", "--out-dir",
                     (tmp / "fused").string()}) == cli::kExitOk);
    REQUIRE(run_cli({"eval", "--cases", cases.string(), "--pred-dir", (tmp / "fused").string(), "--method-name",
                     "majority-vote", "--out-csv", (tmp / "eval.csv").string()}) == cli::kExitOk);
    const auto reports = read_report_csv(tmp / "eval.csv");
    REQUIRE(reports.size() == 2);
    for (int c = 0; c < 2; ++c) {
        const std::string id = c == 0 ? "case_000" : "case_001";
        const CaseManifest manifest = read_manifest(tmp.path / "exp" / id / "manifest.txt");
        const LabelVolume pred = read_label_volume(tmp.path / "fused" / (id + ".mha"));
        const LabelVolume ref = read_label_volume(manifest.reference_path);
        const std::vector<int> labels{1, 2};
        const MetricReport direct =
            evaluate_case(pred, ref, labels, id, "majority-vote", manifest.label_names);
        REQUIRE(reports[c].organs.size() == direct.organs.size());
        for (std::size_t o = 0; o < direct.organs.size(); ++o) {
            CHECK(reports[c].organs[o].mdta_mm == direct.organs[o].mdta_mm);
            CHECK(reports[c].organs[o].hd95_mm == direct.organs[o].hd95_mm);
            CHECK(reports[c].organs[o].volume_diff_cm3 == direct.organs[o].volume_diff_cm3);
        }
    }
}

TEST_CASE("a case with a missing organ is flagged but exits zero") {
    TempDir tmp;
    std::mt19937_64 rng(2);
    // reference has organs 1 and 2; prediction misses organ 2 entirely
    LabelVolume ref = LabelVolume::zeros(geom(10, 10, 10), 3);
    LabelVolume pred = LabelVolume::zeros(geom(10, 10, 10), 3);
    for (int z = 2; z < 5; ++z)
        for (int y = 2; y < 5; ++y)
            for (int x = 2; x < 5; ++x) {
                ref.at(x, y, z) = 1;
                pred.at(x, y, z) = 1;
                ref.at(x + 4, y + 4, z + 4) = 2;
            }
    write_volume(ref, tmp / "ref.mha");
    write_volume(ref, tmp / "m0.mha");
    write_volume(pred, tmp / "pred.mha");
    // label 3 is named but absent from both volumes: flagged row, no error
    testutil::write_file_text(tmp / "manifest.txt",
                              "case_id = c\nreference = ref.mha\nmodel_output = m0.mha\n"
                              "label_name = 1 a\nlabel_name = 2 b\nlabel_name = 3 ghost\n");
    CHECK(run_cli({"eval", "--manifest", (tmp / "manifest.txt").string(), "--pred",
                   (tmp / "pred.mha").string(), "--method-name", "m", "--out-csv",
                   (tmp / "eval.csv").string()}) == cli::kExitOk);
    const auto reports = read_report_csv(tmp / "eval.csv");
    REQUIRE(reports.size() == 1);
    REQUIRE(reports[0].organs.size() == 3);
    CHECK(reports[0].organs[0].mdta_mm.has_value());
    CHECK_FALSE(reports[0].organs[1].mdta_mm.has_value());
    CHECK(reports[0].organs[1].volume_diff_cm3 < 0.0);
    CHECK_FALSE(reports[0].organs[2].mdta_mm.has_value());
    CHECK(reports[0].organs[2].volume_diff_cm3 == 0.0);
    CHECK(reports[0].organs[2].organ_name == "ghost");
}

TEST_CASE("compare: candidate identical to baseline is degenerate with zero points") {
    TempDir tmp;
    std::vector<MetricReport> rows;
    for (int c = 0; c < 10; ++c) {
        MetricReport r;
        r.case_id = "case_" + std::to_string(c);
        r.method = "bm";
        OrganMetrics m;
        m.label = 1;
        m.organ_name = "a";
        m.mdta_mm = 1.0 + 0.1 * c;
        m.hd95_mm = 3.0 + 0.1 * c;
        m.volume_diff_cm3 = 0.0;
        r.organs = {m};
        rows.push_back(r);
    }
    write_report_csv(rows, tmp / "bm.csv");
    for (auto& r : rows)
        r.method = "cand";
    write_report_csv(rows, tmp / "cand.csv");
    REQUIRE(run_cli({"compare", "--baseline", (tmp / "bm.csv").string(), "--candidate",
                     (tmp / "cand.csv").string(), "--out-table", (tmp / "table.csv").string(),
                     "--out-comparisons", (tmp / "cmp.csv").string()}) == cli::kExitOk);
    const std::string table = testutil::read_file_text(tmp / "table.csv");
    CHECK(table == "method,mdta_points,hd95_points,total\ncand,0,0,0\n");
    const std::string cmp = testutil::read_file_text(tmp / "cmp.csv");
    CHECK(cmp.find(",1.0,0,0\n") != std::string::npos);  // p = 1, not improved, 0 points
}

TEST_CASE("compare: a candidate one millimetre better everywhere earns five points") {
    TempDir tmp;
    std::vector<MetricReport> base_rows, cand_rows;
    for (int c = 0; c < 30; ++c) {
        MetricReport r;
        r.case_id = "case_" + std::to_string(c);
        r.method = "bm";
        OrganMetrics m;
        m.label = 1;
        m.organ_name = "a";
        m.mdta_mm = 2.0 + 0.01 * c;
        m.hd95_mm = 6.0 + 0.01 * c;
        m.volume_diff_cm3 = 0.0;
        r.organs = {m};
        base_rows.push_back(r);
        r.method = "cand";
        m.mdta_mm = *m.mdta_mm - 1.0;
        m.hd95_mm = *m.hd95_mm - 1.0;
        r.organs = {m};
        cand_rows.push_back(r);
    }
    write_report_csv(base_rows, tmp / "bm.csv");
    write_report_csv(cand_rows, tmp / "cand.csv");
    REQUIRE(run_cli({"compare", "--baseline", (tmp / "bm.csv").string(), "--candidate",
                     (tmp / "cand.csv").string(), "--out-table", (tmp / "table.csv").string()}) == cli::kExitOk);
    CHECK(testutil::read_file_text(tmp / "table.csv") ==
          "method,mdta_points,hd95_points,total\ncand,5,5,10\n");
}

TEST_CASE("compare with several candidates totals row sums and validates keys") {
    TempDir tmp;
    auto make_csv = [&](const std::string& method, double shift, const fs::path& path, int cases) {
        std::vector<MetricReport> rows;
        for (int c = 0; c < cases; ++c) {
            MetricReport r;
            r.case_id = "case_" + std::to_string(c);
            r.method = method;
            OrganMetrics m;
            m.label = 1;
            m.organ_name = "a";
            m.mdta_mm = 2.0 + 0.01 * c + shift;
            m.hd95_mm = 5.0 + 0.01 * c + shift;
            m.volume_diff_cm3 = 0.0;
            r.organs = {m};
            rows.push_back(r);
        }
        write_report_csv(rows, path);
    };
    make_csv("bm", 0.0, tmp / "bm.csv", 30);
    make_csv("m1", -1.0, tmp / "m1.csv", 30);
    make_csv("m2", -0.5, tmp / "m2.csv", 30);
    make_csv("m3", +0.5, tmp / "m3.csv", 30);
    REQUIRE(run_cli({"compare", "--baseline", (tmp / "bm.csv").string(), "--candidate", (tmp / "m1.csv").string(),
                     "--candidate", (tmp / "m2.csv").string(), "--candidate", (tmp / "m3.csv").string(),
                     "--out-table", (tmp / "table.csv").string()}) == cli::kExitOk);
    const auto table = testutil::read_file_text(tmp / "table.csv");
    CHECK(table.find("m1,5,5,10") != std::string::npos);
    CHECK(table.find("m2,5,5,10") != std::string::npos);
    CHECK(table.find("m3,0,0,0") != std::string::npos);

    make_csv("bad", 0.0, tmp / "bad.csv", 20);  // fewer cases: key mismatch
    CHECK(run_cli({"compare", "--baseline", (tmp / "bm.csv").string(), "--candidate",
                   (tmp / "bad.csv").string()}) == cli::kExitValidation);
}

TEST_CASE("select-bm singles out the obvious winner and writes a record") {
    TempDir tmp;
    auto make_model_csv = [&](int idx, double mdta, double hd95, bool defined = true) {
        std::vector<MetricReport> rows;
        for (int c = 0; c < 5; ++c) {
            MetricReport r;
            r.case_id = "case_" + std::to_string(c);
            r.method = "model_" + std::to_string(idx);
            OrganMetrics m;
            m.label = 1;
            m.organ_name = "a";
            if (defined) {
                m.mdta_mm = mdta + 0.01 * c;
                m.hd95_mm = hd95 + 0.01 * c;
            }
            m.volume_diff_cm3 = 0.0;
            r.organs = {m};
            rows.push_back(r);
        }
        const fs::path p = tmp / ("model_" + std::to_string(idx) + ".csv");
        write_report_csv(rows, p);
        return p;
    };
    const auto m0 = make_model_csv(0, 2.0, 6.0);
    const auto m1 = make_model_csv(1, 1.0, 4.0);
    const auto m2 = make_model_csv(2, 3.0, 7.0);
    REQUIRE(run_cli({"select-bm", "--eval-csv", m0.string(), "--eval-csv", m1.string(), "--eval-csv", m2.string(),
                     "--out", (tmp / "bm.txt").string()}) == cli::kExitOk);
    const std::string text = testutil::read_file_text(tmp / "bm.txt");
    CHECK(text.find("best_index = 1") != std::string::npos);
    CHECK(text.find("best_file = model_1.csv") != std::string::npos);

    // in-process oracle agreement
    std::vector<ModelMetricSamples> models(3);
    for (int i = 0; i < 3; ++i) {
        const auto reports = read_report_csv(tmp / ("model_" + std::to_string(i) + ".csv"));
        for (const auto& r : reports)
            for (const auto& o : r.organs) {
                models[i].mdta.push_back(*o.mdta_mm);
                models[i].hd95.push_back(*o.hd95_mm);
            }
    }
    CHECK(select_best_model(models).index == 1);

    // an all-undefined model is excluded with a warning, not an error
    const auto m3 = make_model_csv(3, 0.0, 0.0, false);
    CHECK(run_cli({"select-bm", "--eval-csv", m0.string(), "--eval-csv", m3.string(), "--out",
                   (tmp / "bm2.txt").string()}) == cli::kExitOk);
    CHECK(testutil::read_file_text(tmp / "bm2.txt").find("best_index = 0") != std::string::npos);
}

TEST_CASE("cli staple on mask manifests matches staple_multiclass") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config(1, 5));
    const CaseManifest scores_manifest = read_manifest(tmp.path / "exp" / "case_000" / "manifest.txt");
    // turn the score outputs into a five-mask manifest
    std::vector<LabelVolume> masks;
    std::string manifest_text = "case_id = case_000\nreference = reference.mha\n";
    fs::create_directories(tmp / "masks");
    fs::copy_file(scores_manifest.reference_path, tmp.path / "masks" / "reference.mha");
    for (std::size_t r = 0; r < scores_manifest.model_output_paths.size(); ++r) {
        masks.push_back(argmax_labels(read_score_volume(scores_manifest.model_output_paths[r])));
        const std::string name = "mask_" + std::to_string(r) + ".mha";
        write_volume(masks.back(), tmp.path / "masks" / name);
        manifest_text += "model_output = " + name + "\n";
    }
    testutil::write_file_text(tmp.path / "masks" / "manifest.txt", manifest_text);
    REQUIRE(run_cli({"fuse", "--manifest", (tmp.path / "masks" / "manifest.txt").string(), "--method", "staple",
                     "--out", (tmp / "consensus.mha").string()}) == cli::kExitOk);
    const LabelVolume via_cli = read_label_volume(tmp / "consensus.mha");
    align_label_counts(masks);
    const LabelVolume direct = staple_multiclass(masks, StapleParams{});
    CHECK((via_cli.data == direct.data).all());
}

TEST_CASE("eval output is independent of the worker thread count") {
    TempDir tmp;
    const fs::path cases = make_experiment(tmp, small_config(3, 3));
    REQUIRE(run_cli({"fuse", "--cases", cases.string(), "--method", "majority-vote", "--out-dir",
                     (tmp / "fused").string(), "--threads", "1"}) == cli::kExitOk);
    REQUIRE(run_cli({"eval", "--cases", cases.string(), "--pred-dir", (tmp / "fused").string(), "--method-name",
                     "mv", "--out-csv", (tmp / "eval1.csv").string(), "--threads", "1"}) == cli::kExitOk);
    REQUIRE(run_cli({"eval", "--cases", cases.string(), "--pred-dir", (tmp / "fused").string(), "--method-name",
                     "mv", "--out-csv", (tmp / "eval4.csv").string(), "--threads", "4"}) == cli::kExitOk);
    CHECK(testutil::read_file_text(tmp / "eval1.csv") == testutil::read_file_text(tmp / "eval4.csv"));
}

TEST_CASE("the default config runs the full pipeline in under a minute") {
    TempDir tmp;
    const auto start = std::chrono::steady_clock::now();
    REQUIRE(run_cli({"synth", "--write-default-config", (tmp / "config.txt").string()}) == cli::kExitOk);
    REQUIRE(run_cli({"synth", "--config", (tmp / "config.txt").string(), "--out-dir", (tmp / "exp").string()}) ==
            cli::kExitOk);
    const std::string cases = (tmp.path / "exp" / "cases.txt").string();
    REQUIRE(run_cli({"fuse", "--cases", cases, "--method", "softmax-sum", "--out-dir",
                     (tmp / "fused").string()}) == cli::kExitOk);
    REQUIRE(run_cli({"eval", "--cases", cases, "--pred-dir", (tmp / "fused").string(), "--method-name",
                     "softmax-sum", "--out-csv", (tmp / "eval.csv").string()}) == cli::kExitOk);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed < 60.0);
    CHECK(read_report_csv(tmp / "eval.csv").size() == 3);
}

TEST_CASE("single model select-bm returns index zero") {
    TempDir tmp;
    std::vector<MetricReport> rows(1);
    rows[0].case_id = "c";
    rows[0].method = "model_0";
    OrganMetrics m;
    m.label = 1;
    m.organ_name = "a";
    m.mdta_mm = 1.0;
    m.hd95_mm = 2.0;
    rows[0].organs = {m};
    write_report_csv(rows, tmp / "m0.csv");
    REQUIRE(run_cli({"select-bm", "--eval-csv", (tmp / "m0.csv").string(), "--out",
                     (tmp / "bm.txt").string()}) == cli::kExitOk);
    CHECK(testutil::read_file_text(tmp / "bm.txt").find("best_index = 0") != std::string::npos);
}

TEST_CASE("same-seed synth runs are bit-identical") {
    TempDir tmp;
    testutil::write_file_text(tmp / "config.txt", small_config(2, 2));
    REQUIRE(run_cli({"synth", "--config", (tmp / "config.txt").string(), "--out-dir", (tmp / "a").string()}) ==
            cli::kExitOk);
    REQUIRE(run_cli({"synth", "--config", (tmp / "config.txt").string(), "--out-dir", (tmp / "b").string()}) ==
            cli::kExitOk);
    CHECK(collect_tree(tmp / "a") == collect_tree(tmp / "b"));
}

TEST_CASE("overlapping organs in a config are a validation error, exit code 2") {
    TempDir tmp;
    std::string bad = small_config(1);
    bad += "organ = 3 mid ellipsoid 10 9 9 4 4 4\n";  // overlaps both
    testutil::write_file_text(tmp / "config.txt", bad);
    CHECK(run_cli({"synth", "--config", (tmp / "config.txt").string(), "--out-dir", (tmp / "exp").string()}) ==
          cli::kExitValidation);
}

TEST_CASE("exit codes: unknown method, missing files, unknown flags") {
    TempDir tmp;
    CHECK(run_cli({"fuse", "--manifest", "nowhere.txt", "--method", "mean", "--out", "x.mha"}) == cli::kExitUsage);
    CHECK(run_cli({"fuse", "--manifest", (tmp / "missing.txt").string(), "--method", "staple", "--out",
                   (tmp / "x.mha").string()}) == cli::kExitValidation);
    CHECK(run_cli({"bogus-command"}) == cli::kExitUsage);
    CHECK(run_cli({"eval", "--manifest", "m.txt"}) == cli::kExitUsage);
}

TEST_CASE("the installed binary honours the exit-code contract") {
    const char* exe = std::getenv("SEGENS_CLI");
    if (exe == nullptr)
        return;  // only meaningful under ctest
    TempDir tmp;
    const std::string quiet = " > /dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system((std::string(exe) + " --help" + quiet).c_str())) == 0);
    CHECK(WEXITSTATUS(std::system((std::string(exe) + " fuse --manifest nowhere.txt --method mean --out x.mha" +
                                   quiet).c_str())) == cli::kExitUsage);
    const fs::path cfg = tmp / "config.txt";
    testutil::write_file_text(cfg, small_config(1, 2));
    CHECK(WEXITSTATUS(std::system((std::string(exe) + " synth --config " + cfg.string() + " --out-dir " +
                                   (tmp / "exp").string() + quiet).c_str())) == 0);
    CHECK(fs::exists(tmp / "exp" / "cases.txt"));
}

TEST_SUITE_END();
