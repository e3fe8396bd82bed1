#include "segens/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "segens/fusion.hpp"
#include "segens/io.hpp"
#include "segens/metrics.hpp"
#include "segens/stats.hpp"
#include "segens/synth.hpp"

namespace segens::cli {

namespace fs = std::filesystem;

namespace {

// ---- small helpers ----------------------------------------------------------

int resolve_threads(int requested) {
    if (requested > 0)
        return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Static-free parallel loop; outputs must go to per-index slots so the
// result is independent of the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                body(i);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    for (std::thread& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, value);
    return buf;
}

std::string rel_to(const fs::path& target, const fs::path& base_dir) {
    std::error_code ec;
    const fs::path t = fs::weakly_canonical(target, ec);
    if (ec)
        return target.filename().string();
    const fs::path b = fs::weakly_canonical(base_dir, ec);
    if (ec)
        return target.filename().string();
    const fs::path rel = t.lexically_relative(b);
    return rel.empty() ? target.filename().string() : rel.generic_string();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

// Provenance: no timestamps, paths relative to the record's directory, so
// identical runs produce identical bytes.
void write_provenance(const fs::path& prov_path, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& params,
                      const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
    const fs::path dir = prov_path.parent_path().empty() ? fs::path(".") : prov_path.parent_path();
    std::string text = "# segens provenance\n";
    text += "command = " + command + "\n";
    for (const auto& [k, v] : params)
        text += "param = " + k + " " + v + "\n";
    for (const fs::path& p : inputs)
        text += "input = " + rel_to(p, dir) + " fnv1a64:" + hex64(fnv1a64_file(p)) + "\n";
    for (const fs::path& p : outputs)
        text += "output = " + rel_to(p, dir) + " fnv1a64:" + hex64(fnv1a64_file(p)) + "\n";
    write_text_file(prov_path, text);
}

std::string case_name(int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "case_%03d", index);
    return buf;
}

std::string model_name(int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "model_%02d", index);
    return buf;
}

// Manifest list: either a single --manifest (repeatable) or a --cases file
// with one manifest path per line, relative to the list's directory.
std::vector<fs::path> gather_manifests(const std::vector<std::string>& manifest_flags,
                                       const std::string& cases_flag) {
    std::vector<fs::path> paths;
    for (const std::string& m : manifest_flags)
        paths.emplace_back(m);
    if (!cases_flag.empty()) {
        std::ifstream in(cases_flag);
        if (!in)
            throw IoError("cannot open case list '" + cases_flag + "'");
        const fs::path base = fs::path(cases_flag).parent_path();
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                line.pop_back();
            if (line.empty() || line.front() == '#')
                continue;
            paths.push_back(base / line);
        }
    }
    if (paths.empty())
        throw UsageError("no cases given: use --manifest or --cases");
    return paths;
}

std::vector<int> organ_labels(const CaseManifest& manifest, const LabelVolume& reference) {
    std::vector<int> labels;
    if (!manifest.label_names.empty()) {
        for (const auto& [label, name] : manifest.label_names)
            labels.push_back(label);
    } else {
        for (int l = 1; l < reference.num_labels; ++l)
            labels.push_back(l);
    }
    return labels;
}

// ---- synth ------------------------------------------------------------------

struct SynthOptions {
    std::string config_path;
    std::string out_dir;
    std::string write_default;
};

int cmd_synth(const SynthOptions& opt) {
    if (!opt.write_default.empty()) {
        write_text_file(opt.write_default, default_synth_config());
        std::cout << "wrote sample config to " << opt.write_default << "\n";
        return kExitOk;
    }
    const SynthConfig base = read_synth_config(opt.config_path);
    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir);

    std::string cases_text;
    std::vector<fs::path> written;
    for (int c = 0; c < base.cases; ++c) {
        const SynthConfig cfg = instantiate_case(base, c);
        const std::string id = case_name(c);
        const fs::path case_dir = out_dir / id;
        fs::create_directories(case_dir);

        const LabelVolume truth = generate_ground_truth(cfg);
        const std::vector<ScoreVolume> outputs = generate_model_outputs(cfg, truth);

        CaseManifest manifest;
        manifest.case_id = id;
        manifest.reference_path = case_dir / "reference.mha";
        write_volume(truth, manifest.reference_path);
        written.push_back(manifest.reference_path);
        for (int r = 0; r < cfg.raters; ++r) {
            const fs::path p = case_dir / (model_name(r) + ".mha");
            write_volume(outputs[r], p);
            manifest.model_output_paths.push_back(p);
            written.push_back(p);
        }
        for (const OrganSpec& organ : cfg.organs)
            manifest.label_names[organ.label] = organ.name;
        const fs::path manifest_path = case_dir / "manifest.txt";
        write_manifest(manifest, manifest_path);
        written.push_back(manifest_path);
        cases_text += id + "/manifest.txt\n";
    }
    const fs::path cases_path = out_dir / "cases.txt";
    write_text_file(cases_path, cases_text);
    written.push_back(cases_path);
    write_provenance(out_dir / "synth.prov.txt", "synth", {{"seed", std::to_string(base.seed)}},
                     {fs::path(opt.config_path)}, written);
    std::cout << "synthesized " << base.cases << " case(s) under " << out_dir.string() << "\n";
    return kExitOk;
}

// ---- fuse -------------------------------------------------------------------

struct FuseOptions {
    std::vector<std::string> manifests;
    std::string cases;
    std::string method;
    std::string out;
    std::string out_dir;
    int threads = 0;
    StapleParams staple;
};

int cmd_fuse(const FuseOptions& opt) {
    const std::vector<fs::path> manifest_paths = gather_manifests(opt.manifests, opt.cases);
    FusionMethod method;
    method.variant = parse_fusion_method(opt.method);
    method.staple = opt.staple;
    if (manifest_paths.size() == 1 && !opt.out.empty() && opt.out_dir.empty()) {
        // single-output mode below
    } else if (opt.out_dir.empty()) {
        throw UsageError("fuse needs --out (single case) or --out-dir");
    } else {
        fs::create_directories(opt.out_dir);
    }

    const int threads = resolve_threads(opt.threads);
    parallel_for(static_cast<int>(manifest_paths.size()), threads, [&](int i) {
        const CaseManifest manifest = read_manifest(manifest_paths[i]);
        LabelVolume fused;
        if (manifest.score_models) {
            std::vector<ScoreVolume> models;
            models.reserve(manifest.model_output_paths.size());
            for (const fs::path& p : manifest.model_output_paths)
                models.push_back(read_score_volume(p));
            fused = fuse(method, models);
        } else {
            std::vector<LabelVolume> masks;
            masks.reserve(manifest.model_output_paths.size());
            for (const fs::path& p : manifest.model_output_paths)
                masks.push_back(read_label_volume(p));
            align_label_counts(masks);
            fused = fuse(method, masks);
        }
        const fs::path out_path = !opt.out.empty() && manifest_paths.size() == 1
                                      ? fs::path(opt.out)
                                      : fs::path(opt.out_dir) / (manifest.case_id + ".mha");
        write_volume(fused, out_path);

        std::vector<std::pair<std::string, std::string>> params = {{"method", opt.method}};
        if (method.variant == FusionVariant::Staple) {
            params.emplace_back("staple_init_sensitivity", format_double(method.staple.init_sensitivity));
            params.emplace_back("staple_init_specificity", format_double(method.staple.init_specificity));
            params.emplace_back("staple_max_iterations", std::to_string(method.staple.max_iterations));
            params.emplace_back("staple_convergence_tol", format_double(method.staple.convergence_tol));
            params.emplace_back("staple_roi_margin", std::to_string(method.staple.roi_margin));
        }
        std::vector<fs::path> inputs = {manifest_paths[i]};
        inputs.insert(inputs.end(), manifest.model_output_paths.begin(), manifest.model_output_paths.end());
        fs::path prov = out_path;
        prov.replace_extension(".prov.txt");
        write_provenance(prov, "fuse", params, inputs, {out_path});
    });
    std::cout << "fused " << manifest_paths.size() << " case(s) with " << opt.method << "\n";
    return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalOptions {
    std::vector<std::string> manifests;
    std::string cases;
    std::string pred;       // single prediction file (single case)
    std::string pred_dir;   // <case_id>.mha per case
    bool per_model = false;
    std::string method_name = "pred";
    std::string out_csv;
    std::string out_dir;    // per-model CSVs
    std::string report_dir; // optional per-case reports
    std::string format = "csv";
    int threads = 0;
};

LabelVolume load_prediction_for(const CaseManifest& manifest, const EvalOptions& opt) {
    if (!opt.pred.empty())
        return read_label_volume(opt.pred);
    const fs::path base = fs::path(opt.pred_dir) / (manifest.case_id + ".mha");
    if (fs::exists(base))
        return read_label_volume(base);
    const fs::path alt = fs::path(opt.pred_dir) / (manifest.case_id + ".mhd");
    if (fs::exists(alt))
        return read_label_volume(alt);
    throw IoError("no prediction for case '" + manifest.case_id + "' under '" + opt.pred_dir + "'");
}

MetricReport eval_one(const CaseManifest& manifest, LabelVolume pred, const std::string& method) {
    LabelVolume reference = read_label_volume(manifest.reference_path);
    std::array<LabelVolume, 2> pair = {std::move(pred), std::move(reference)};
    align_label_counts(pair);
    const std::vector<int> labels = organ_labels(manifest, pair[1]);
    // a named organ absent from both volumes still gets a (flagged) row
    for (int label : labels)
        if (label >= pair[0].num_labels && label < 256)
            pair[0].num_labels = pair[1].num_labels = label + 1;
    return evaluate_case(pair[0], pair[1], labels, manifest.case_id, method, manifest.label_names);
}

void maybe_write_case_report(const MetricReport& report, const EvalOptions& opt) {
    if (opt.report_dir.empty())
        return;
    fs::create_directories(opt.report_dir);
    const bool csv = opt.format == "csv";
    const fs::path path = fs::path(opt.report_dir) / (report.case_id + (csv ? ".csv" : ".txt"));
    write_report(report, path, csv ? ReportFormat::Csv : ReportFormat::Text);
}

int cmd_eval(const EvalOptions& opt) {
    if (opt.format != "csv" && opt.format != "text")
        throw UsageError("--format must be csv or text");
    const std::vector<fs::path> manifest_paths = gather_manifests(opt.manifests, opt.cases);
    const int threads = resolve_threads(opt.threads);

    if (opt.per_model) {
        if (opt.out_dir.empty())
            throw UsageError("--per-model needs --out-dir for the per-model CSVs");
        fs::create_directories(opt.out_dir);
        std::vector<CaseManifest> manifests(manifest_paths.size());
        for (std::size_t i = 0; i < manifest_paths.size(); ++i)
            manifests[i] = read_manifest(manifest_paths[i]);
        const std::size_t num_models = manifests[0].model_output_paths.size();
        for (const CaseManifest& m : manifests)
            if (m.model_output_paths.size() != num_models)
                throw ValidationError("--per-model: cases disagree on the number of model outputs");

        for (std::size_t model = 0; model < num_models; ++model) {
            std::vector<MetricReport> reports(manifests.size());
            parallel_for(static_cast<int>(manifests.size()), threads, [&](int i) {
                const CaseManifest& manifest = manifests[i];
                const fs::path& p = manifest.model_output_paths[model];
                LabelVolume pred = manifest.score_models ? argmax_labels(read_score_volume(p))
                                                         : read_label_volume(p);
                reports[i] = eval_one(manifest, std::move(pred), model_name(static_cast<int>(model)));
            });
            write_report_csv(reports, fs::path(opt.out_dir) / (model_name(static_cast<int>(model)) + ".csv"));
        }
        std::cout << "evaluated " << num_models << " model(s) on " << manifests.size() << " case(s)\n";
        return kExitOk;
    }

    if (opt.pred.empty() && opt.pred_dir.empty())
        throw UsageError("eval needs --pred, --pred-dir or --per-model");
    if (!opt.pred.empty() && manifest_paths.size() != 1)
        throw UsageError("--pred only works with a single case");
    if (opt.out_csv.empty())
        throw UsageError("eval needs --out-csv");

    std::vector<MetricReport> reports(manifest_paths.size());
    parallel_for(static_cast<int>(manifest_paths.size()), threads, [&](int i) {
        const CaseManifest manifest = read_manifest(manifest_paths[i]);
        reports[i] = eval_one(manifest, load_prediction_for(manifest, opt), opt.method_name);
        maybe_write_case_report(reports[i], opt);
    });
    write_report_csv(reports, opt.out_csv);
    std::cout << "evaluated " << reports.size() << " case(s) as '" << opt.method_name << "'\n";
    return kExitOk;
}

// ---- compare ----------------------------------------------------------------

struct CompareOptions {
    std::string baseline;
    std::vector<std::string> candidates;
    std::string dataset_size = "all";
    std::string alternative = "two-sided";
    std::string zero_policy = "drop";
    std::string out_comparisons;
    std::string out_table;
    std::string out_report;
};

struct MetricRows {
    // (case_id, organ_label) -> metrics
    std::map<std::pair<std::string, int>, OrganMetrics> rows;
    std::string method;
    std::map<int, std::string> organ_names;
};

MetricRows load_metric_rows(const fs::path& path) {
    MetricRows out;
    for (const MetricReport& report : read_report_csv(path)) {
        if (out.method.empty())
            out.method = report.method;
        else if (out.method != report.method)
            throw ValidationError("'" + path.string() + "': mixes methods '" + out.method + "' and '" +
                                  report.method + "'");
        for (const OrganMetrics& m : report.organs) {
            if (!out.rows.emplace(std::make_pair(report.case_id, m.label), m).second)
                throw ValidationError("'" + path.string() + "': duplicate row for case '" + report.case_id +
                                      "' organ " + std::to_string(m.label));
            out.organ_names[m.label] = m.organ_name;
        }
    }
    if (out.rows.empty())
        throw ValidationError("'" + path.string() + "': no rows");
    return out;
}

void check_same_keys(const MetricRows& baseline, const MetricRows& candidate, const std::string& name) {
    std::string missing;
    for (const auto& [key, m] : baseline.rows)
        if (!candidate.rows.count(key))
            missing += " " + key.first + "/organ" + std::to_string(key.second);
    std::string extra;
    for (const auto& [key, m] : candidate.rows)
        if (!baseline.rows.count(key))
            extra += " " + key.first + "/organ" + std::to_string(key.second);
    if (!missing.empty() || !extra.empty())
        throw ValidationError("candidate '" + name + "' keys mismatch baseline;" +
                              (missing.empty() ? "" : " missing:" + missing) +
                              (extra.empty() ? "" : " unmatched:" + extra));
}

int cmd_compare(const CompareOptions& opt) {
    const Alternative alternative = [&] {
        if (opt.alternative == "two-sided")
            return Alternative::TwoSided;
        if (opt.alternative == "candidate-better")
            return Alternative::CandidateBetter;
        throw UsageError("--alternative must be two-sided or candidate-better");
    }();
    const ZeroPolicy zero_policy = [&] {
        if (opt.zero_policy == "drop")
            return ZeroPolicy::Drop;
        if (opt.zero_policy == "pratt")
            return ZeroPolicy::Pratt;
        throw UsageError("--zero-policy must be drop or pratt");
    }();
    if (opt.candidates.empty())
        throw UsageError("compare needs at least one --candidate");

    const MetricRows baseline = load_metric_rows(opt.baseline);
    std::vector<Comparison> comparisons;
    std::string report_text = "# segens comparison vs baseline '" + baseline.method + "'\n";

    for (const std::string& cand_path : opt.candidates) {
        const MetricRows candidate = load_metric_rows(cand_path);
        check_same_keys(baseline, candidate, candidate.method);

        std::set<int> organs;
        for (const auto& [key, m] : baseline.rows)
            organs.insert(key.second);
        for (int organ : organs) {
            for (const std::string metric : {"mdta", "hd95"}) {
                PairedSample sample;
                sample.metric = metric;
                sample.organ = candidate.organ_names.count(organ) ? candidate.organ_names.at(organ)
                                                                  : "label_" + std::to_string(organ);
                sample.lower_is_better = true;
                int excluded = 0;
                for (const auto& [key, base_m] : baseline.rows) {
                    if (key.second != organ)
                        continue;
                    const OrganMetrics& cand_m = candidate.rows.at(key);
                    const auto base_v = metric == "mdta" ? base_m.mdta_mm : base_m.hd95_mm;
                    const auto cand_v = metric == "mdta" ? cand_m.mdta_mm : cand_m.hd95_mm;
                    if (!base_v || !cand_v) {
                        ++excluded;
                        continue;
                    }
                    sample.baseline.push_back(*base_v);
                    sample.candidate.push_back(*cand_v);
                }

                Comparison c;
                c.method = candidate.method;
                c.organ = sample.organ;
                c.dataset_size = opt.dataset_size;
                c.metric = metric;
                c.n_pairs = static_cast<int>(sample.baseline.size());
                c.n_excluded = excluded;
                if (sample.baseline.empty()) {
                    c.p_value = 1.0;
                    c.improved = false;
                } else {
                    const WilcoxonResult w = wilcoxon_signed_rank(sample, alternative, zero_policy);
                    c.p_value = w.p_value;
                    c.statistic = w.statistic;
                    std::vector<double> diffs(sample.baseline.size());
                    for (std::size_t i = 0; i < diffs.size(); ++i)
                        diffs[i] = sample.candidate[i] - sample.baseline[i];
                    const double med = median(diffs);
                    c.improved = sample.lower_is_better ? med < 0.0 : med > 0.0;
                }
                c.points = significance_points(c.p_value, c.improved);
                comparisons.push_back(c);

                std::string marker = c.points > 0 ? std::string(static_cast<std::size_t>(c.points), '*') : "ns";
                report_text += c.method + " " + c.organ + " " + metric + ": p=" + format_double(c.p_value) +
                               (c.improved ? " improved" : " not-improved") + " points=" +
                               std::to_string(c.points) + " [" + marker + "] (n=" + std::to_string(c.n_pairs) +
                               ", excluded=" + std::to_string(c.n_excluded) + ")\n";
            }
        }
    }

    const RankingTable table = build_ranking_table(comparisons);
    report_text += "\nmethod mdta_points hd95_points total\n";
    for (const RankingRow& row : table.rows)
        report_text += row.method + " " + std::to_string(row.mdta_points) + " " + std::to_string(row.hd95_points) +
                       " " + std::to_string(row.total) + "\n";

    if (!opt.out_comparisons.empty()) {
        std::string csv =
            "method,organ,dataset_size,metric,n_pairs,n_excluded,statistic,p_value,improved,points\n";
        for (const Comparison& c : comparisons)
            csv += c.method + "," + c.organ + "," + c.dataset_size + "," + c.metric + "," +
                   std::to_string(c.n_pairs) + "," + std::to_string(c.n_excluded) + "," +
                   format_double(c.statistic) + "," + format_double(c.p_value) + "," +
                   (c.improved ? "1" : "0") + "," + std::to_string(c.points) + "\n";
        write_text_file(opt.out_comparisons, csv);
    }
    if (!opt.out_table.empty()) {
        std::string csv = "method,mdta_points,hd95_points,total\n";
        for (const RankingRow& row : table.rows)
            csv += row.method + "," + std::to_string(row.mdta_points) + "," + std::to_string(row.hd95_points) +
                   "," + std::to_string(row.total) + "\n";
        write_text_file(opt.out_table, csv);
    }
    if (!opt.out_report.empty())
        write_text_file(opt.out_report, report_text);
    std::cout << report_text;
    return kExitOk;
}

// ---- select-bm ----------------------------------------------------------------

struct SelectBmOptions {
    std::vector<std::string> eval_csvs;
    std::string out;
};

int cmd_select_bm(const SelectBmOptions& opt) {
    if (opt.eval_csvs.empty())
        throw UsageError("select-bm needs at least one --eval-csv");
    std::vector<ModelMetricSamples> models;
    for (const std::string& path : opt.eval_csvs) {
        ModelMetricSamples samples;
        for (const MetricReport& report : read_report_csv(path))
            for (const OrganMetrics& m : report.organs) {
                if (m.mdta_mm)
                    samples.mdta.push_back(*m.mdta_mm);
                if (m.hd95_mm)
                    samples.hd95.push_back(*m.hd95_mm);
            }
        models.push_back(std::move(samples));
    }
    const BestModelChoice choice = select_best_model(models);

    std::string text = "# segens best-model selection\n";
    text += "models = " + std::to_string(models.size()) + "\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
        const bool excluded =
            std::find(choice.excluded.begin(), choice.excluded.end(), static_cast<int>(m)) != choice.excluded.end();
        text += "model = " + std::to_string(m) + " file=" + fs::path(opt.eval_csvs[m]).filename().string();
        if (excluded) {
            text += " excluded=1 (no defined metric values)\n";
            continue;
        }
        text += " median_mdta=" + format_double(choice.median_mdta[m]) +
                " median_hd95=" + format_double(choice.median_hd95[m]) +
                " rank_mdta=" + format_double(choice.rank_mdta[m]) +
                " rank_hd95=" + format_double(choice.rank_hd95[m]) +
                " rank_sum=" + format_double(choice.rank_sum[m]) + "\n";
    }
    for (int m : choice.excluded)
        std::cerr << "warning: model " << m << " has no defined metric values; excluded\n";
    text += "best_index = " + std::to_string(choice.index) + "\n";
    text += "best_file = " + fs::path(opt.eval_csvs[static_cast<std::size_t>(choice.index)]).filename().string() +
            "\n";
    std::cout << text;
    if (!opt.out.empty())
        write_text_file(opt.out, text);
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"segens: segmentation ensemble fusion, evaluation and ranking"};
    app.require_subcommand(1);

    SynthOptions synth_opt;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multi-case experiment");
    synth->add_option("--config", synth_opt.config_path, "synth config file");
    synth->add_option("--out-dir", synth_opt.out_dir, "output directory");
    synth->add_option("--write-default-config", synth_opt.write_default,
                      "write a sample config to this path and exit");
    synth->callback([&] {
        if (synth_opt.write_default.empty() && (synth_opt.config_path.empty() || synth_opt.out_dir.empty()))
            throw UsageError("synth needs --config and --out-dir");
    });

    FuseOptions fuse_opt;
    CLI::App* fuse = app.add_subcommand("fuse", "fuse model outputs into one segmentation");
    fuse->add_option("--manifest", fuse_opt.manifests, "case manifest (repeatable)");
    fuse->add_option("--cases", fuse_opt.cases, "file listing case manifests");
    fuse->add_option("--method", fuse_opt.method, "logit-sum | softmax-sum | majority-vote | staple")
        ->required();
    fuse->add_option("--out", fuse_opt.out, "output volume (single case)");
    fuse->add_option("--out-dir", fuse_opt.out_dir, "output directory (<case_id>.mha per case)");
    fuse->add_option("--threads", fuse_opt.threads, "worker threads (0 = auto)");
    fuse->add_option("--staple-init-sensitivity", fuse_opt.staple.init_sensitivity);
    fuse->add_option("--staple-init-specificity", fuse_opt.staple.init_specificity);
    fuse->add_option("--staple-max-iterations", fuse_opt.staple.max_iterations);
    fuse->add_option("--staple-convergence-tol", fuse_opt.staple.convergence_tol);
    fuse->add_option("--staple-roi-margin", fuse_opt.staple.roi_margin);

    EvalOptions eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "score predictions against the reference");
    eval->add_option("--manifest", eval_opt.manifests, "case manifest (repeatable)");
    eval->add_option("--cases", eval_opt.cases, "file listing case manifests");
    eval->add_option("--pred", eval_opt.pred, "prediction volume (single case)");
    eval->add_option("--pred-dir", eval_opt.pred_dir, "directory with <case_id>.mha predictions");
    eval->add_flag("--per-model", eval_opt.per_model, "evaluate each manifest model output instead");
    eval->add_option("--method-name", eval_opt.method_name, "method column value");
    eval->add_option("--out-csv", eval_opt.out_csv, "aggregate CSV output");
    eval->add_option("--out-dir", eval_opt.out_dir, "per-model CSV directory (with --per-model)");
    eval->add_option("--report-dir", eval_opt.report_dir, "optional per-case report directory");
    eval->add_option("--format", eval_opt.format, "per-case report format: csv | text");
    eval->add_option("--threads", eval_opt.threads, "worker threads (0 = auto)");

    CompareOptions cmp_opt;
    CLI::App* compare = app.add_subcommand("compare", "Wilcoxon comparisons and ranking table");
    compare->add_option("--baseline", cmp_opt.baseline, "baseline eval CSV")->required();
    compare->add_option("--candidate", cmp_opt.candidates, "candidate eval CSV (repeatable)")->required();
    compare->add_option("--dataset-size", cmp_opt.dataset_size, "dataset-size tag for the rows");
    compare->add_option("--alternative", cmp_opt.alternative, "two-sided | candidate-better");
    compare->add_option("--zero-policy", cmp_opt.zero_policy, "drop | pratt");
    compare->add_option("--out-comparisons", cmp_opt.out_comparisons, "comparisons CSV");
    compare->add_option("--out-table", cmp_opt.out_table, "ranking table CSV");
    compare->add_option("--out-report", cmp_opt.out_report, "human-readable report");

    SelectBmOptions bm_opt;
    CLI::App* select_bm = app.add_subcommand("select-bm", "pick the best model from per-model eval CSVs");
    select_bm->add_option("--eval-csv", bm_opt.eval_csvs, "per-model eval CSV, in model order (repeatable)")
        ->required();
    select_bm->add_option("--out", bm_opt.out, "write the selection record here");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_opt);
        if (fuse->parsed())
            return cmd_fuse(fuse_opt);
        if (eval->parsed())
            return cmd_eval(eval_opt);
        if (compare->parsed())
            return cmd_compare(cmp_opt);
        if (select_bm->parsed())
            return cmd_select_bm(bm_opt);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args);
}

} // namespace segens::cli
