#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tfusion/image.hpp"

namespace tfusion {

struct CohortSpec {
    int64_t n_patients = 100;
    // (visit count, probability), counts ascending; mode 3 mirrors the
    // "most frequently three visits" shape
    std::vector<std::pair<int64_t, double>> visit_count_distribution = {
        {1, 0.15}, {2, 0.25}, {3, 0.35}, {4, 0.15}, {5, 0.10}};
    double positive_rate = 0.25;
    double signal_strength = 1.0;   // severity -> image contrast coupling
    double temporal_signal = 0.0;   // label -> severity trend coupling
    uint64_t seed = 1;

    void validate() const;
};

struct VisitRecord {
    std::string patient_id;
    std::string kidney_side;  // "left" | "right"
    int64_t visit_index = 0;
    std::string sagittal_path;   // relative to the manifest directory
    std::string transverse_path;
    double severity = 0.0;  // latent, stored for audit
};

struct SeqRecord {
    std::string patient_id;
    std::string kidney_side;
    int label = 0;  // one outcome per kidney sequence
    std::vector<VisitRecord> visits;

    std::string id() const { return patient_id + "_" + kidney_side; }
};

struct Manifest {
    CohortSpec spec;
    PipelineConfig preprocess;
    std::vector<SeqRecord> sequences;
    std::string dir;  // directory the manifest lives in; resolves image paths

    std::vector<std::string> patients() const;  // first-appearance order
    int64_t total_visits() const;
};

// Renders every kidney sequence of the cohort into out_dir/images and writes
// out_dir/manifest.jsonl; returns the manifest path. Same spec and seed give
// byte-identical images and manifest.
std::string generate_cohort(const CohortSpec& spec, const std::string& out_dir,
                            const PipelineConfig& preprocess = PipelineConfig{},
                            const std::string& patient_prefix = "p");

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// patient-granular split; both kidneys of a patient land on one side
std::pair<Manifest, Manifest> split_by_patient(const Manifest& m, double train_fraction, uint64_t seed);

// folds partition patients; pair = (train, validation)
std::vector<std::pair<Manifest, Manifest>> kfold_by_patient(const Manifest& m, int64_t k, uint64_t seed);

struct VisitHistogramRow {
    int64_t visit_count = 0;
    int64_t n_negative = 0;
    int64_t n_positive = 0;
};
std::vector<VisitHistogramRow> visit_histogram(const Manifest& m);

// every visit becomes its own single-visit sequence (training view for the
// single-visit model)
Manifest expand_single_visits(const Manifest& m);

enum class VisitSelect { First, Latest, All };
Manifest select_visits(const Manifest& m, VisitSelect mode);

bool single_visit_only(const Manifest& m);

}  // namespace tfusion
