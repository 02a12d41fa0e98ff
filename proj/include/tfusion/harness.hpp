#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tfusion/dataset.hpp"
#include "tfusion/metrics.hpp"
#include "tfusion/network.hpp"
#include "tfusion/synthdata.hpp"
#include "tfusion/trainer.hpp"

namespace tfusion {

// significance of a variant against the baseline row by CI overlap
enum class CiVerdict { None, Above, Below };

struct ReportCell {
    MetricReport auroc;
    MetricReport auprc;
    CiVerdict auroc_vs_baseline = CiVerdict::None;
    CiVerdict auprc_vs_baseline = CiVerdict::None;
    bool auroc_best = false;  // top point estimate in its column
    bool auprc_best = false;
};

struct ReportRow {
    std::string label;
    // parallel to Report::test_sets; empty optional when the variant is not
    // applicable to that set
    std::vector<std::optional<ReportCell>> cells;
};

struct Report {
    std::string title;
    std::vector<std::string> test_sets;
    std::vector<ReportRow> rows;
    std::vector<std::string> notes;
};

// "92.69 [84.41, 96.73]": point and CI scaled to percent, two decimals
std::string format_metric(const MetricReport& r);

// format is "text", "csv", or "json"
std::string render_table(const Report& report, const std::string& format);

struct HarnessContext {
    BaselineConfig network;
    TrainConfig train_cfg;  // baseline and retrained variants
    int64_t n_bootstrap = 10000;
    double alpha = 0.05;
    bool grouped = true;  // patient-level bootstrap resampling
    uint64_t seed = 1;
    Manifest train_manifest;
    std::vector<std::pair<std::string, Manifest>> test_sets;
    NetworkWeights baseline;  // trained two-view backbone
};

// every test manifest must share no patient with the training manifest
void assert_patient_disjoint(const Manifest& train, const Manifest& test,
                             const std::string& set_name);

// Baseline scored on first-only vs latest-only visit views of each test set.
// Single-visit-only sets are excluded with a logged notice; at least one set
// must contain a multi-visit sequence.
Report experiment_first_vs_latest(const HarnessContext& ctx);

// Baseline vs pretrained-adapted (avg_prediction, conv_pooling, tsm reusing
// baseline weights) vs retrained (avg_prediction, conv_pooling, lstm, tsm
// trained from scratch) on full visit sequences. Pretrained rows are omitted
// on single-visit-only sets.
Report experiment_fusion_compare(HarnessContext& ctx);

// named cohort presets for the bundled experiment specs
CohortSpec cohort_preset(const std::string& name);

// Full pipeline driven by a JSON experiment spec: generate or load cohorts,
// train the baseline, run the requested experiments, and write reports,
// weights, histograms, and a provenance block under the output directory.
void run_harness(const std::string& spec_path);

}  // namespace tfusion
