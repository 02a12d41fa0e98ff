#include "tfusion/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "tfusion/config_io.hpp"
#include "tfusion/rng.hpp"
#include "tfusion/serialize.hpp"

namespace tfusion {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_metric(const MetricReport& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f [%.2f, %.2f]", 100.0 * r.point, 100.0 * r.ci_low,
                  100.0 * r.ci_high);
    return buf;
}

void assert_patient_disjoint(const Manifest& train, const Manifest& test, const std::string& set_name) {
    std::unordered_set<std::string> tp;
    for (const std::string& p : train.patients()) tp.insert(p);
    for (const std::string& p : test.patients())
        if (tp.count(p))
            throw std::logic_error("test set " + set_name + " shares patient " + p +
                                   " with the training cohort");
}

namespace {

const char* verdict_name(CiVerdict v) {
    switch (v) {
        case CiVerdict::Above: return "above";
        case CiVerdict::Below: return "below";
        default: return "none";
    }
}

MetricReport eval_metric(const ScoredSet& scored, const std::string& metric, const StatisticFn& fn,
                         const HarnessContext& ctx, const std::string& set_name,
                         const std::string& row_label) {
    BcaOptions opt;
    opt.n_bootstrap = ctx.n_bootstrap;
    opt.alpha = ctx.alpha;
    opt.seed = hash_combine(hash_combine(ctx.seed, fnv1a64(set_name)),
                            hash_combine(fnv1a64(row_label), fnv1a64(metric)));
    ScoredSet use = scored;
    if (!ctx.grouped) use.groups.clear();
    return bca_interval(use, metric, fn, opt);
}

ReportCell eval_cell(const ScoredSet& scored, const HarnessContext& ctx, const std::string& set_name,
                     const std::string& row_label) {
    ReportCell cell;
    cell.auroc = eval_metric(scored, "auroc", [](const ScoredSet& s) { return auroc(s); }, ctx,
                             set_name, row_label);
    cell.auprc = eval_metric(scored, "auprc", [](const ScoredSet& s) { return auprc(s); }, ctx,
                             set_name, row_label);
    return cell;
}

CiVerdict compare_to_baseline(const MetricReport& variant, const MetricReport& baseline) {
    if (variant.point > baseline.ci_high) return CiVerdict::Above;
    if (variant.point < baseline.ci_low) return CiVerdict::Below;
    return CiVerdict::None;
}

// top point estimate per column; ties share the mark
void mark_bests(Report& report) {
    for (size_t col = 0; col < report.test_sets.size(); ++col) {
        double best_auroc = -1.0, best_auprc = -1.0;
        for (const ReportRow& row : report.rows) {
            if (!row.cells[col]) continue;
            best_auroc = std::max(best_auroc, row.cells[col]->auroc.point);
            best_auprc = std::max(best_auprc, row.cells[col]->auprc.point);
        }
        for (ReportRow& row : report.rows) {
            if (!row.cells[col]) continue;
            row.cells[col]->auroc_best = row.cells[col]->auroc.point == best_auroc;
            row.cells[col]->auprc_best = row.cells[col]->auprc.point == best_auprc;
        }
    }
}

std::string cell_text(const ReportCell& c, bool auroc_col) {
    const MetricReport& r = auroc_col ? c.auroc : c.auprc;
    std::string s = format_metric(r);
    if (auroc_col ? c.auroc_best : c.auprc_best) s += " *";
    const CiVerdict v = auroc_col ? c.auroc_vs_baseline : c.auprc_vs_baseline;
    if (v == CiVerdict::Above) s += " ^";
    if (v == CiVerdict::Below) s += " v";
    return s;
}

}  // namespace

std::string render_table(const Report& report, const std::string& format) {
    if (format == "json") {
        json rows = json::array();
        for (const ReportRow& row : report.rows) {
            json cells = json::array();
            for (size_t col = 0; col < report.test_sets.size(); ++col) {
                if (!row.cells[col]) {
                    cells.push_back(nullptr);
                    continue;
                }
                const ReportCell& c = *row.cells[col];
                json ja = to_json(c.auroc);
                ja["best"] = c.auroc_best;
                ja["vs_baseline"] = verdict_name(c.auroc_vs_baseline);
                json jp = to_json(c.auprc);
                jp["best"] = c.auprc_best;
                jp["vs_baseline"] = verdict_name(c.auprc_vs_baseline);
                cells.push_back(json{{"test_set", report.test_sets[col]}, {"auroc", ja}, {"auprc", jp}});
            }
            rows.push_back(json{{"label", row.label}, {"cells", cells}});
        }
        json j{{"title", report.title}, {"test_sets", report.test_sets}, {"rows", rows},
               {"notes", report.notes}};
        return j.dump(2) + "\n";
    }

    if (format == "csv") {
        std::ostringstream os;
        os << "method,test_set,metric,point,ci_low,ci_high,best,vs_baseline\n";
        char buf[128];
        for (const ReportRow& row : report.rows) {
            for (size_t col = 0; col < report.test_sets.size(); ++col) {
                if (!row.cells[col]) continue;
                const ReportCell& c = *row.cells[col];
                for (int m = 0; m < 2; ++m) {
                    const bool is_auroc = m == 0;
                    const MetricReport& r = is_auroc ? c.auroc : c.auprc;
                    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", r.point, r.ci_low, r.ci_high);
                    os << row.label << "," << report.test_sets[col] << "," << r.metric << "," << buf
                       << "," << ((is_auroc ? c.auroc_best : c.auprc_best) ? 1 : 0) << ","
                       << verdict_name(is_auroc ? c.auroc_vs_baseline : c.auprc_vs_baseline) << "\n";
                }
            }
        }
        return os.str();
    }

    if (format != "text")
        throw std::invalid_argument("render_table: format '" + format + "', expected text, csv, or json");

    std::vector<std::string> headers = {"method"};
    for (const std::string& s : report.test_sets) {
        headers.push_back(s + " AUROC");
        headers.push_back(s + " AUPRC");
    }
    std::vector<std::vector<std::string>> grid;
    for (const ReportRow& row : report.rows) {
        std::vector<std::string> line = {row.label};
        for (size_t col = 0; col < report.test_sets.size(); ++col) {
            if (!row.cells[col]) {
                line.push_back("-");
                line.push_back("-");
            } else {
                line.push_back(cell_text(*row.cells[col], true));
                line.push_back(cell_text(*row.cells[col], false));
            }
        }
        grid.push_back(std::move(line));
    }
    std::vector<size_t> width(headers.size());
    for (size_t i = 0; i < headers.size(); ++i) width[i] = headers[i].size();
    for (const auto& line : grid)
        for (size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());

    std::ostringstream os;
    os << report.title << "\n";
    auto emit = [&](const std::vector<std::string>& line) {
        for (size_t i = 0; i < line.size(); ++i) {
            if (i) os << "  ";
            os << line[i];
            if (i + 1 < line.size()) os << std::string(width[i] - line[i].size(), ' ');
        }
        os << "\n";
    };
    emit(headers);
    size_t total = 0;
    for (size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
    os << std::string(total, '-') << "\n";
    for (const auto& line : grid) emit(line);
    for (const std::string& n : report.notes) os << "note: " << n << "\n";
    return os.str();
}

Report experiment_first_vs_latest(const HarnessContext& ctx) {
    Report report;
    report.title = "single-visit model: first vs latest visit";

    std::vector<const Manifest*> included;
    for (const auto& [name, m] : ctx.test_sets) {
        if (single_visit_only(m)) {
            report.notes.push_back(name + ": excluded, every sequence has a single visit");
            continue;
        }
        report.test_sets.push_back(name);
        included.push_back(&m);
    }
    if (included.empty())
        throw std::runtime_error("first_vs_latest: no test set has multi-visit sequences");

    ReportRow first_row{"first visit", {}};
    ReportRow latest_row{"latest visit", {}};
    for (size_t col = 0; col < included.size(); ++col) {
        const std::string& name = report.test_sets[col];
        const Dataset d_first = load_dataset(select_visits(*included[col], VisitSelect::First));
        const Dataset d_latest = load_dataset(select_visits(*included[col], VisitSelect::Latest));
        const ScoredSet s_first = score_dataset(ctx.baseline, FusionMethod::Baseline, d_first);
        const ScoredSet s_latest = score_dataset(ctx.baseline, FusionMethod::Baseline, d_latest);
        first_row.cells.push_back(eval_cell(s_first, ctx, name, "first visit"));
        latest_row.cells.push_back(eval_cell(s_latest, ctx, name, "latest visit"));

        const ReportCell& a = *first_row.cells[col];
        const ReportCell& b = *latest_row.cells[col];
        auto inside = [](const MetricReport& x, const MetricReport& y) {
            return x.point >= y.ci_low && x.point <= y.ci_high;
        };
        for (int m = 0; m < 2; ++m) {
            const MetricReport& ra = m == 0 ? a.auroc : a.auprc;
            const MetricReport& rb = m == 0 ? b.auroc : b.auprc;
            const bool indist = inside(ra, rb) && inside(rb, ra);
            report.notes.push_back(name + ": first vs latest " + ra.metric +
                                   (indist ? " indistinguishable, each point inside the other's CI"
                                           : " distinguishable, a point falls outside the other's CI"));
        }
    }
    report.rows.push_back(std::move(first_row));
    report.rows.push_back(std::move(latest_row));
    mark_bests(report);
    return report;
}

Report experiment_fusion_compare(HarnessContext& ctx) {
    Report report;
    report.title = "single-visit baseline vs temporal fusion";
    for (const auto& [name, m] : ctx.test_sets) report.test_sets.push_back(name);

    struct Variant {
        std::string label;
        FusionMethod method;
        bool pretrained;
    };
    const std::vector<Variant> variants = {
        {"baseline", FusionMethod::Baseline, false},
        {"avg_prediction (pretrained)", FusionMethod::AvgPrediction, true},
        {"conv_pooling (pretrained)", FusionMethod::ConvPooling, true},
        {"tsm (pretrained)", FusionMethod::TSM, true},
        {"avg_prediction (retrained)", FusionMethod::AvgPrediction, false},
        {"conv_pooling (retrained)", FusionMethod::ConvPooling, false},
        {"lstm (retrained)", FusionMethod::LSTM, false},
        {"tsm (retrained)", FusionMethod::TSM, false},
    };

    // retrained variants fit the full visit sequences from scratch
    Dataset train_full;
    bool train_loaded = false;
    std::vector<NetworkWeights> retrained;
    retrained.reserve(variants.size());  // weights_for keeps pointers into it
    std::vector<const NetworkWeights*> weights_for(variants.size(), &ctx.baseline);
    for (size_t vi = 0; vi < variants.size(); ++vi) {
        const Variant& v = variants[vi];
        if (v.method == FusionMethod::Baseline || v.pretrained) continue;
        if (!train_loaded) {
            train_full = load_dataset(ctx.train_manifest);
            train_loaded = true;
        }
        TrainConfig cfg = ctx.train_cfg;
        cfg.method = v.method;
        cfg.pretrained_weights.clear();
        cfg.seed = hash_combine(ctx.seed, fnv1a64(v.label));
        std::cerr << "[harness] training " << v.label << "\n";
        NetworkWeights w = init_network<float>(ctx.network, v.method);
        train(w, train_full, cfg);
        retrained.push_back(std::move(w));
        weights_for[vi] = &retrained.back();
    }

    std::vector<Dataset> test_data;
    std::vector<bool> single_only;
    for (const auto& [name, m] : ctx.test_sets) {
        test_data.push_back(load_dataset(m));
        single_only.push_back(single_visit_only(m));
        if (single_only.back())
            report.notes.push_back(name +
                                   ": pretrained adaptations omitted, every sequence has a single "
                                   "visit so they reduce to the baseline");
    }

    for (size_t vi = 0; vi < variants.size(); ++vi) {
        const Variant& v = variants[vi];
        ReportRow row{v.label, {}};
        for (size_t col = 0; col < test_data.size(); ++col) {
            if (v.pretrained && single_only[col]) {
                row.cells.emplace_back(std::nullopt);
                continue;
            }
            const ScoredSet scored = score_dataset(*weights_for[vi], v.method, test_data[col]);
            row.cells.push_back(eval_cell(scored, ctx, report.test_sets[col], v.label));
        }
        report.rows.push_back(std::move(row));
    }

    for (size_t col = 0; col < report.test_sets.size(); ++col) {
        const ReportCell& base = *report.rows[0].cells[col];
        for (size_t ri = 1; ri < report.rows.size(); ++ri) {
            if (!report.rows[ri].cells[col]) continue;
            ReportCell& c = *report.rows[ri].cells[col];
            c.auroc_vs_baseline = compare_to_baseline(c.auroc, base.auroc);
            c.auprc_vs_baseline = compare_to_baseline(c.auprc, base.auprc);
        }
    }
    mark_bests(report);
    report.notes.push_back("* top point estimate in the column; ^/v point outside the baseline CI");
    return report;
}

CohortSpec cohort_preset(const std::string& name) {
    CohortSpec s;
    if (name == "internal-train") {
        s.n_patients = 120;
        s.positive_rate = 0.25;
        s.seed = 100;
    } else if (name == "internal-test") {
        s.n_patients = 60;
        s.positive_rate = 0.25;
        s.seed = 101;
    } else if (name == "silent-trial") {
        s.n_patients = 60;
        s.positive_rate = 0.12;
        s.seed = 102;
    } else if (name == "stanford-like") {
        s.n_patients = 50;
        s.positive_rate = 0.05;
        s.visit_count_distribution = {{2, 0.5}, {3, 0.3}, {4, 0.2}};
        s.seed = 103;
    } else if (name == "chop-like") {
        s.n_patients = 40;
        s.positive_rate = 0.67;
        s.visit_count_distribution = {{1, 1.0}};
        s.seed = 104;
    } else {
        throw std::invalid_argument(
            "unknown cohort preset '" + name +
            "', expected internal-train, internal-test, silent-trial, stanford-like, or chop-like");
    }
    return s;
}

namespace {

CohortSpec parse_cohort_entry(const json& j) {
    if (j.contains("preset")) {
        json merged = to_json(cohort_preset(j.at("preset").get<std::string>()));
        if (j.contains("overrides")) merged.update(j.at("overrides"));
        return cohort_from_json(merged);
    }
    return cohort_from_json(j);
}

uint64_t file_fnv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path + " for fingerprinting");
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed for " + path);
}

}  // namespace

void run_harness(const std::string& spec_path) {
    const json spec = load_json_file(spec_path);
    if (!spec.contains("out_dir")) throw std::runtime_error("experiment spec: missing out_dir");
    const std::string out_dir = spec.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);

    HarnessContext ctx;
    ctx.seed = spec.value("seed", uint64_t{1});
    ctx.network = spec.contains("network") ? network_from_json(spec.at("network")) : BaselineConfig{};
    ctx.train_cfg = spec.contains("train") ? train_from_json(spec.at("train")) : TrainConfig{};
    ctx.train_cfg.method = FusionMethod::Baseline;
    if (spec.contains("bootstrap")) {
        const json& b = spec.at("bootstrap");
        ctx.n_bootstrap = b.value("B", ctx.n_bootstrap);
        ctx.alpha = b.value("alpha", ctx.alpha);
        ctx.grouped = b.value("grouped", ctx.grouped);
    }

    json manifest_prov = json::object();
    if (spec.contains("cohorts")) {
        PipelineConfig pipe;
        pipe.out_size = ctx.network.input_size;
        const json& c = spec.at("cohorts");
        const CohortSpec train_spec = parse_cohort_entry(c.at("train"));
        std::cerr << "[harness] generating training cohort\n";
        const std::string tm =
            generate_cohort(train_spec, (fs::path(out_dir) / "cohorts" / "train").string(), pipe, "train-p");
        ctx.train_manifest = load_manifest(tm);
        manifest_prov["train"] = file_fnv(tm);
        for (const json& t : c.at("tests")) {
            const std::string name = t.at("name").get<std::string>();
            std::cerr << "[harness] generating test cohort " << name << "\n";
            const std::string mp = generate_cohort(parse_cohort_entry(t.at("spec")),
                                                   (fs::path(out_dir) / "cohorts" / name).string(),
                                                   pipe, name + "-p");
            ctx.test_sets.emplace_back(name, load_manifest(mp));
            manifest_prov[name] = file_fnv(mp);
        }
    } else if (spec.contains("manifests")) {
        const json& m = spec.at("manifests");
        const std::string tm = m.at("train").get<std::string>();
        ctx.train_manifest = load_manifest(tm);
        manifest_prov["train"] = file_fnv(tm);
        for (const json& t : m.at("tests")) {
            const std::string name = t.at("name").get<std::string>();
            const std::string path = t.at("path").get<std::string>();
            ctx.test_sets.emplace_back(name, load_manifest(path));
            manifest_prov[name] = file_fnv(path);
        }
    } else {
        throw std::runtime_error("experiment spec: need a cohorts or manifests block");
    }
    if (ctx.test_sets.empty()) throw std::runtime_error("experiment spec: no test sets");

    for (const auto& [name, m] : ctx.test_sets) assert_patient_disjoint(ctx.train_manifest, m, name);

    // single-visit training view: every visit is its own example
    std::cerr << "[harness] training baseline\n";
    const Manifest expanded = expand_single_visits(ctx.train_manifest);
    const Dataset train_ds = load_dataset(expanded);
    ctx.baseline = init_network<float>(ctx.network, FusionMethod::Baseline);
    const TrainResult base_log = train(ctx.baseline, train_ds, ctx.train_cfg);

    const std::string weights_path = (fs::path(out_dir) / "baseline.tflw").string();
    save_weights(weights_path, ctx.baseline.params);
    save_json_file((fs::path(out_dir) / "model_card.json").string(),
                   model_card(ctx.network, ctx.train_cfg, manifest_prov["train"].get<uint64_t>(),
                              static_cast<int64_t>(train_ds.size())));
    {
        std::ostringstream os;
        os << "epoch,mean_loss\n";
        char buf[64];
        for (const TrainLogEntry& e : base_log.log) {
            std::snprintf(buf, sizeof(buf), "%lld,%.6f", static_cast<long long>(e.epoch), e.mean_loss);
            os << buf << "\n";
        }
        write_text_file((fs::path(out_dir) / "baseline_train_log.csv").string(), os.str());
    }

    for (const auto& [name, m] : ctx.test_sets) {
        std::ostringstream os;
        os << "visit_count,n_negative,n_positive\n";
        for (const VisitHistogramRow& r : visit_histogram(m))
            os << r.visit_count << "," << r.n_negative << "," << r.n_positive << "\n";
        write_text_file((fs::path(out_dir) / ("hist_" + name + ".csv")).string(), os.str());
    }

    std::vector<std::string> experiments;
    if (spec.contains("experiments"))
        experiments = spec.at("experiments").get<std::vector<std::string>>();
    else
        experiments = {"first_vs_latest", "fusion_compare"};

    json report_prov = json::object();
    for (const std::string& exp : experiments) {
        std::cerr << "[harness] experiment " << exp << "\n";
        Report report;
        if (exp == "first_vs_latest")
            report = experiment_first_vs_latest(ctx);
        else if (exp == "fusion_compare")
            report = experiment_fusion_compare(ctx);
        else
            throw std::runtime_error("experiment spec: unknown experiment '" + exp + "'");
        for (const std::string& fmt : {"text", "csv", "json"}) {
            const std::string ext = fmt == "text" ? "txt" : fmt;
            const std::string path = (fs::path(out_dir) / ("report_" + exp + "." + ext)).string();
            write_text_file(path, render_table(report, fmt));
            report_prov[exp + "." + ext] = file_fnv(path);
        }
    }

    save_json_file((fs::path(out_dir) / "provenance.json").string(),
                   json{{"seed", ctx.seed},
                        {"spec_fingerprint", file_fnv(spec_path)},
                        {"manifest_fingerprints", manifest_prov},
                        {"weights_fingerprint", file_fnv(weights_path)},
                        {"report_fingerprints", report_prov}});
    std::cerr << "[harness] done, outputs under " << out_dir << "\n";
}

}  // namespace tfusion
