#include "tfusion/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "tfusion/config_io.hpp"
#include "tfusion/rng.hpp"

namespace tfusion {

using nlohmann::json;

void CohortSpec::validate() const {
    if (n_patients < 1) throw std::invalid_argument("cohort: n_patients must be >= 1");
    if (visit_count_distribution.empty())
        throw std::invalid_argument("cohort: empty visit count distribution");
    double total = 0.0;
    int64_t prev = 0;
    for (const auto& [count, prob] : visit_count_distribution) {
        if (count <= prev)
            throw std::invalid_argument("cohort: visit counts must be positive and ascending");
        if (prob < 0.0) throw std::invalid_argument("cohort: negative visit count probability");
        prev = count;
        total += prob;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("cohort: visit count probabilities must sum to 1");
    if (positive_rate < 0.0 || positive_rate > 1.0)
        throw std::invalid_argument("cohort: positive_rate outside [0,1]");
    if (signal_strength < 0.0) throw std::invalid_argument("cohort: negative signal_strength");
    if (temporal_signal < 0.0) throw std::invalid_argument("cohort: negative temporal_signal");
}

std::vector<std::string> Manifest::patients() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const SeqRecord& s : sequences)
        if (seen.insert(s.patient_id).second) out.push_back(s.patient_id);
    return out;
}

int64_t Manifest::total_visits() const {
    int64_t n = 0;
    for (const SeqRecord& s : sequences) n += static_cast<int64_t>(s.visits.size());
    return n;
}

namespace {

// Hypoechoic bowl on speckled parenchyma; dilation widens and darkens the
// bowl with severity.
GrayImage render_view(double severity, double signal_strength, Rng rng) {
    const int64_t size = 300;
    GrayImage img(size, size);
    for (int64_t i = 0; i < size * size; ++i)
        img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(170.0 + 40.0 * rng.uniform());

    const double jx = rng.uniform(-15.0, 15.0);
    const double jy = rng.uniform(-15.0, 15.0);
    const double rot = rng.uniform(-0.5, 0.5);
    const double squash = rng.uniform(0.55, 0.75);

    const double p = std::clamp(severity * signal_strength, 0.0, 1.0);
    const double a = 25.0 + 80.0 * p;
    const double b = squash * a;
    const double depth = 150.0 * p;
    const double cx = 150.0 + jx;
    const double cy = 150.0 + jy;
    const double cr = std::cos(rot), sr = std::sin(rot);

    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double u = (cr * dx + sr * dy) / a;
            const double v = (-sr * dx + cr * dy) / b;
            const double r2 = u * u + v * v;
            if (r2 < 1.0) {
                const double val = static_cast<double>(img.at(x, y)) - depth * (1.0 - r2);
                img.at(x, y) = static_cast<uint8_t>(std::max(5.0, val));
            }
        }
    }
    return img;
}

std::string two_digit(int64_t v) { return (v < 10 ? "0" : "") + std::to_string(v); }

json visit_to_json(const SeqRecord& seq, const VisitRecord& v) {
    return json{{"type", "visit"},
                {"patient_id", v.patient_id},
                {"kidney_side", v.kidney_side},
                {"visit_index", v.visit_index},
                {"sagittal", v.sagittal_path},
                {"transverse", v.transverse_path},
                {"severity", v.severity},
                {"label", seq.label}};
}

}  // namespace

std::string generate_cohort(const CohortSpec& spec, const std::string& out_dir,
                            const PipelineConfig& preprocess, const std::string& patient_prefix) {
    spec.validate();
    preprocess.validate();

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");

    std::vector<double> visit_probs;
    for (const auto& [count, prob] : spec.visit_count_distribution) visit_probs.push_back(prob);

    Manifest m;
    m.spec = spec;
    m.preprocess = preprocess;
    m.dir = out_dir;

    const Rng root(spec.seed);
    const std::vector<std::string> sides = {"left", "right"};
    for (int64_t pi = 0; pi < spec.n_patients; ++pi) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%04lld", patient_prefix.c_str(),
                      static_cast<long long>(pi + 1));
        const std::string pid = buf;
        for (int64_t si = 0; si < 2; ++si) {
            const Rng seq_rng = root.derive(static_cast<uint64_t>(pi)).derive(static_cast<uint64_t>(si));
            Rng meta = seq_rng.derive(0);
            const int label = meta.uniform() < spec.positive_rate ? 1 : 0;
            const int64_t visits =
                spec.visit_count_distribution[static_cast<size_t>(meta.discrete(visit_probs))].first;

            // The label couples to severity through a cross-sectional level
            // term that fades as temporal_signal grows, a mild monotone trend
            // (positives worsen, negatives resolve), and a transient peak at
            // an interior visit for positives. A pure linear trend would leak
            // fully into the latest visit; the fade and the peak are what let
            // multi-visit models beat latest-visit inference at high
            // temporal_signal.
            const double ts = spec.temporal_signal;
            const double level_sep = 1.0 - std::min(1.0, 2.0 * ts);
            const double level = 0.25 + 0.5 * meta.uniform();
            const double sign = label ? 1.0 : -1.0;
            const double base =
                std::clamp(level + sign * level_sep * (0.20 + 0.15 * meta.uniform()), 0.05, 0.95);
            const double slope =
                (label ? 1.0 : -0.35) * 0.05 * ts * (0.5 + 0.5 * meta.uniform());
            const int64_t t_peak =
                visits == 1 ? 0 : static_cast<int64_t>(meta.below(static_cast<uint64_t>(visits - 1)));
            const double bump = label ? 1.2 * ts * (0.5 + 0.5 * meta.uniform()) : 0.0;

            SeqRecord seq;
            seq.patient_id = pid;
            seq.kidney_side = sides[static_cast<size_t>(si)];
            seq.label = label;
            for (int64_t t = 0; t < visits; ++t) {
                Rng vstream = seq_rng.derive(static_cast<uint64_t>(t + 1));
                const double severity =
                    std::clamp(base + slope * static_cast<double>(t) + (t == t_peak ? bump : 0.0) +
                                   0.03 * vstream.normal(),
                               0.0, 1.0);
                VisitRecord v;
                v.patient_id = pid;
                v.kidney_side = seq.kidney_side;
                v.visit_index = t;
                v.severity = severity;
                const std::string stem = pid + "_" + seq.kidney_side + "_v" + two_digit(t);
                v.sagittal_path = "images/" + stem + "_sag.pgm";
                v.transverse_path = "images/" + stem + "_trv.pgm";
                write_pgm(out_dir + "/" + v.sagittal_path,
                          render_view(severity, spec.signal_strength, vstream.derive(1)));
                write_pgm(out_dir + "/" + v.transverse_path,
                          render_view(severity, spec.signal_strength, vstream.derive(2)));
                seq.visits.push_back(std::move(v));
            }
            m.sequences.push_back(std::move(seq));
        }
    }

    const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    save_manifest(m, manifest_path);
    return manifest_path;
}

void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
    json header{{"type", "cohort_header"}, {"spec", to_json(m.spec)}, {"preprocess", to_json(m.preprocess)}};
    os << header.dump() << "\n";
    for (const SeqRecord& seq : m.sequences)
        for (const VisitRecord& v : seq.visits) os << visit_to_json(seq, v).dump() << "\n";
    if (!os) throw std::runtime_error("save_manifest: write failed for " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_manifest: cannot open " + path);

    Manifest m;
    m.dir = std::filesystem::path(path).parent_path().string();
    if (m.dir.empty()) m.dir = ".";

    std::map<std::string, size_t> seq_index;  // id -> position, first-appearance order
    std::string line;
    int64_t line_no = 0;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("load_manifest: " + path + " line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "cohort_header") {
            if (have_header)
                throw std::runtime_error("load_manifest: duplicate header at line " + std::to_string(line_no));
            m.spec = cohort_from_json(j.at("spec"));
            m.preprocess = pipeline_from_json(j.at("preprocess"));
            have_header = true;
        } else if (type == "visit") {
            VisitRecord v;
            v.patient_id = j.at("patient_id").get<std::string>();
            v.kidney_side = j.at("kidney_side").get<std::string>();
            v.visit_index = j.at("visit_index").get<int64_t>();
            v.sagittal_path = j.at("sagittal").get<std::string>();
            v.transverse_path = j.at("transverse").get<std::string>();
            v.severity = j.value("severity", 0.0);
            const int label = j.at("label").get<int>();
            if (label != 0 && label != 1)
                throw std::runtime_error("load_manifest: label " + std::to_string(label) +
                                         " at line " + std::to_string(line_no) + ", expected 0 or 1");
            const std::string id = v.patient_id + "_" + v.kidney_side;
            auto it = seq_index.find(id);
            if (it == seq_index.end()) {
                SeqRecord seq;
                seq.patient_id = v.patient_id;
                seq.kidney_side = v.kidney_side;
                seq.label = label;
                seq_index.emplace(id, m.sequences.size());
                m.sequences.push_back(std::move(seq));
                it = seq_index.find(id);
            } else if (m.sequences[it->second].label != label) {
                throw std::runtime_error("load_manifest: conflicting labels for sequence " + id);
            }
            m.sequences[it->second].visits.push_back(std::move(v));
        } else {
            throw std::runtime_error("load_manifest: unknown record type '" + type + "' at line " +
                                     std::to_string(line_no));
        }
    }
    if (!have_header) throw std::runtime_error("load_manifest: missing cohort_header in " + path);

    for (SeqRecord& seq : m.sequences) {
        std::sort(seq.visits.begin(), seq.visits.end(),
                  [](const VisitRecord& a, const VisitRecord& b) { return a.visit_index < b.visit_index; });
        for (size_t t = 0; t < seq.visits.size(); ++t) {
            if (seq.visits[t].visit_index != static_cast<int64_t>(t))
                throw std::runtime_error("load_manifest: sequence " + seq.id() +
                                         " visit indices not contiguous from 0");
        }
    }
    return m;
}

namespace {

Manifest subset_by_patients(const Manifest& m, const std::unordered_set<std::string>& keep) {
    Manifest out;
    out.spec = m.spec;
    out.preprocess = m.preprocess;
    out.dir = m.dir;
    for (const SeqRecord& s : m.sequences)
        if (keep.count(s.patient_id)) out.sequences.push_back(s);
    return out;
}

}  // namespace

std::pair<Manifest, Manifest> split_by_patient(const Manifest& m, double train_fraction, uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("split: train_fraction outside (0,1)");
    std::vector<std::string> pats = m.patients();
    const int64_t n = static_cast<int64_t>(pats.size());
    if (n < 2) throw std::invalid_argument("split: need at least 2 patients, have " + std::to_string(n));

    Rng rng(seed);
    rng.shuffle(pats);
    const int64_t n_train = std::clamp(
        static_cast<int64_t>(std::llround(train_fraction * static_cast<double>(n))), int64_t{1}, n - 1);

    std::unordered_set<std::string> train_set(pats.begin(), pats.begin() + n_train);
    std::unordered_set<std::string> test_set(pats.begin() + n_train, pats.end());
    return {subset_by_patients(m, train_set), subset_by_patients(m, test_set)};
}

std::vector<std::pair<Manifest, Manifest>> kfold_by_patient(const Manifest& m, int64_t k, uint64_t seed) {
    std::vector<std::string> pats = m.patients();
    const int64_t n = static_cast<int64_t>(pats.size());
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    if (n < k)
        throw std::invalid_argument("kfold: " + std::to_string(n) + " patients cannot fill " +
                                    std::to_string(k) + " folds");

    Rng rng(seed);
    rng.shuffle(pats);
    std::vector<std::unordered_set<std::string>> folds(static_cast<size_t>(k));
    for (int64_t i = 0; i < n; ++i) folds[static_cast<size_t>(i % k)].insert(pats[static_cast<size_t>(i)]);

    std::vector<std::pair<Manifest, Manifest>> out;
    for (int64_t f = 0; f < k; ++f) {
        std::unordered_set<std::string> train_set;
        for (int64_t g = 0; g < k; ++g)
            if (g != f) train_set.insert(folds[static_cast<size_t>(g)].begin(), folds[static_cast<size_t>(g)].end());
        out.emplace_back(subset_by_patients(m, train_set), subset_by_patients(m, folds[static_cast<size_t>(f)]));
    }
    return out;
}

std::vector<VisitHistogramRow> visit_histogram(const Manifest& m) {
    std::map<int64_t, VisitHistogramRow> rows;
    for (const SeqRecord& s : m.sequences) {
        VisitHistogramRow& r = rows[static_cast<int64_t>(s.visits.size())];
        r.visit_count = static_cast<int64_t>(s.visits.size());
        (s.label ? r.n_positive : r.n_negative) += 1;
    }
    std::vector<VisitHistogramRow> out;
    for (const auto& [count, row] : rows) out.push_back(row);
    return out;
}

Manifest expand_single_visits(const Manifest& m) {
    Manifest out;
    out.spec = m.spec;
    out.preprocess = m.preprocess;
    out.dir = m.dir;
    for (const SeqRecord& s : m.sequences) {
        for (const VisitRecord& v : s.visits) {
            SeqRecord one;
            one.patient_id = s.patient_id;
            // distinct sequence ids per visit keep patient grouping intact
            one.kidney_side = s.kidney_side + "_v" + two_digit(v.visit_index);
            one.label = s.label;
            VisitRecord v0 = v;
            v0.visit_index = 0;
            one.visits.push_back(std::move(v0));
            out.sequences.push_back(std::move(one));
        }
    }
    return out;
}

Manifest select_visits(const Manifest& m, VisitSelect mode) {
    if (mode == VisitSelect::All) return m;
    Manifest out;
    out.spec = m.spec;
    out.preprocess = m.preprocess;
    out.dir = m.dir;
    for (const SeqRecord& s : m.sequences) {
        SeqRecord one;
        one.patient_id = s.patient_id;
        one.kidney_side = s.kidney_side;
        one.label = s.label;
        VisitRecord v = mode == VisitSelect::First ? s.visits.front() : s.visits.back();
        v.visit_index = 0;
        one.visits.push_back(std::move(v));
        out.sequences.push_back(std::move(one));
    }
    return out;
}

bool single_visit_only(const Manifest& m) {
    for (const SeqRecord& s : m.sequences)
        if (s.visits.size() > 1) return false;
    return true;
}

}  // namespace tfusion
