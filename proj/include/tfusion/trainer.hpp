#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfusion/dataset.hpp"
#include "tfusion/network.hpp"
#include "tfusion/synthdata.hpp"

namespace tfusion {

struct TrainConfig {
    double learning_rate = 0.005;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int64_t batch_size = 16;  // gradient accumulation window
    int64_t epochs = 30;
    uint64_t seed = 1;
    FusionMethod method = FusionMethod::Baseline;
    // When set and the method adds no parameters over the two-view backbone
    // (baseline, avg_prediction, conv_pooling, tsm), weights are loaded and
    // training is skipped. For lstm the backbone is warm-started and the
    // recurrent head still trains.
    std::string pretrained_weights;

    void validate() const;
};

struct SgdState {
    // velocity buffers parallel to the parameter list
    std::vector<std::vector<float>> velocity;
};

// v = momentum * v + (g + weight_decay * w); w -= learning_rate * v
void sgd_step(NetworkWeights& w, SgdState& state, double learning_rate, double momentum,
              double weight_decay);

struct TrainLogEntry {
    int64_t epoch = 0;
    double mean_loss = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    bool skipped_pretrained = false;
};

// Copies file params into w by name. Shapes must match; file entries that
// name no parameter are rejected. Recurrent params may be absent from the
// file when allow_missing_lstm is set (backbone warm start).
void load_pretrained(NetworkWeights& w, const std::string& path, bool allow_missing_lstm);

TrainResult train(NetworkWeights& w, const Dataset& data, const TrainConfig& cfg);

struct SearchSpace {
    std::vector<double> learning_rates = {0.01, 0.005, 0.001};
    std::vector<double> momentums = {0.8, 0.9};
    std::vector<double> weight_decays = {5e-4, 1e-4};
    std::vector<int64_t> batch_sizes = {8, 16};
    int64_t n_samples = 4;
    int64_t epochs = 10;
    FusionMethod method = FusionMethod::Baseline;
    uint64_t seed = 1;

    int64_t grid_size() const {
        return static_cast<int64_t>(learning_rates.size() * momentums.size() *
                                    weight_decays.size() * batch_sizes.size());
    }
    void validate() const;
};

struct CandidateResult {
    TrainConfig config;
    std::vector<double> fold_auprc;
    std::vector<double> fold_auroc;
    double mean_auprc = 0.0;
    double mean_auroc = 0.0;
};

struct SearchResult {
    size_t best_index = 0;
    std::vector<CandidateResult> candidates;

    const TrainConfig& best() const { return candidates.at(best_index).config; }
};

// Samples n_samples distinct grid points without replacement, scores each by
// k-fold patient-level cross-validation on the training manifest, and picks
// the highest mean AUPRC (ties: mean AUROC, then sample order).
SearchResult random_grid_search_cv(const SearchSpace& space, const Manifest& train_manifest,
                                   const BaselineConfig& net_cfg, int64_t k = 5);

}  // namespace tfusion
