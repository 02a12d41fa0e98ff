#include "tfusion/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tfusion/gemm.hpp"
#include "tfusion/ops.hpp"
#include "tfusion/rng.hpp"
#include "tfusion/serialize.hpp"

namespace tfusion {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum outside [0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train: negative weight_decay");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train: negative epochs");
}

void SearchSpace::validate() const {
    if (learning_rates.empty() || momentums.empty() || weight_decays.empty() || batch_sizes.empty())
        throw std::invalid_argument("search: empty axis");
    if (n_samples < 1) throw std::invalid_argument("search: n_samples must be >= 1");
    if (n_samples > grid_size())
        throw std::invalid_argument("search: n_samples " + std::to_string(n_samples) +
                                    " exceeds grid of " + std::to_string(grid_size()));
    if (epochs < 1) throw std::invalid_argument("search: epochs must be >= 1");
}

void sgd_step(NetworkWeights& w, SgdState& state, double learning_rate, double momentum,
              double weight_decay) {
    if (state.velocity.empty()) {
        state.velocity.resize(w.params.size());
        for (size_t i = 0; i < w.params.size(); ++i)
            state.velocity[i].assign(static_cast<size_t>(w.params[i].second.numel()), 0.0f);
    }
    if (state.velocity.size() != w.params.size())
        throw std::invalid_argument("sgd: velocity count " + std::to_string(state.velocity.size()) +
                                    ", expected " + std::to_string(w.params.size()));
    const float lr = static_cast<float>(learning_rate);
    const float mom = static_cast<float>(momentum);
    const float wd = static_cast<float>(weight_decay);
    for (size_t i = 0; i < w.params.size(); ++i) {
        Tensor& t = w.params[i].second;
        if (state.velocity[i].size() != static_cast<size_t>(t.numel()))
            throw std::invalid_argument("sgd: velocity size mismatch for " + w.params[i].first);
        if (!t.grad) continue;
        float* wp = t.ptr();
        float* gp = t.grad->data();
        float* vp = state.velocity[i].data();
        const int64_t n = t.numel();
        for (int64_t k = 0; k < n; ++k) {
            const float g = gp[k] + wd * wp[k];
            vp[k] = mom * vp[k] + g;
            wp[k] -= lr * vp[k];
        }
    }
}

void load_pretrained(NetworkWeights& w, const std::string& path, bool allow_missing_lstm) {
    const NamedTensorList file = load_weights(path);
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : file) {
        if (!w.has(name))
            throw std::runtime_error("pretrained: file parameter " + name + " has no target");
        by_name.emplace(name, &t);
    }
    for (auto& [name, t] : w.params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            if (allow_missing_lstm && name.rfind("lstm.", 0) == 0) continue;
            throw std::runtime_error("pretrained: missing parameter " + name + " in " + path);
        }
        const Tensor& src = *it->second;
        if (src.shape != t.shape)
            throw std::runtime_error("pretrained: shape mismatch for " + name + ": file " +
                                     shape_str(src.shape) + ", network " + shape_str(t.shape));
        *t.data = *src.data;
    }
}

TrainResult train(NetworkWeights& w, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;

    if (!cfg.pretrained_weights.empty()) {
        const bool adds_params = cfg.method == FusionMethod::LSTM;
        load_pretrained(w, cfg.pretrained_weights, /*allow_missing_lstm=*/adds_params);
        if (!adds_params) {
            // the fusion rule is parameter-free over the two-view backbone
            result.skipped_pretrained = true;
            return result;
        }
    }
    if (data.sequences.empty()) throw std::invalid_argument("train: empty dataset");

    SgdState state;
    const Rng root(cfg.seed);
    std::vector<size_t> order(data.sequences.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng erng = root.derive(static_cast<uint64_t>(epoch));
        erng.shuffle(order);

        w.zero_grads();
        int64_t pending = 0;
        double loss_sum = 0.0;
        auto flush = [&]() {
            if (pending == 0) return;
            const float inv = 1.0f / static_cast<float>(pending);
            for (auto& [name, t] : w.params)
                if (t.grad)
                    for (float& g : *t.grad) g *= inv;
            sgd_step(w, state, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
            w.zero_grads();
            pending = 0;
        };

        for (size_t idx : order) {
            const LoadedSequence& ex = data.sequences[idx];
            GraphT<float> g;
            Tensor logits = forward_method(w, cfg.method, ex.visits, &g);
            Tensor loss = log_softmax_nll(logits, ex.label, &g);
            const float lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", sequence " + ex.id);
            loss_sum += static_cast<double>(lv);
            g.backward_from(loss);
            if (++pending == cfg.batch_size) flush();
        }
        flush();

        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(TrainLogEntry{epoch, loss_sum / static_cast<double>(data.sequences.size()), secs});
    }
    return result;
}

namespace {

struct GridPoint {
    double lr, mom, wd;
    int64_t batch;
};

GridPoint grid_at(const SearchSpace& s, int64_t flat) {
    const int64_t nb = static_cast<int64_t>(s.batch_sizes.size());
    const int64_t nw = static_cast<int64_t>(s.weight_decays.size());
    const int64_t nm = static_cast<int64_t>(s.momentums.size());
    GridPoint p;
    p.batch = s.batch_sizes[static_cast<size_t>(flat % nb)];
    flat /= nb;
    p.wd = s.weight_decays[static_cast<size_t>(flat % nw)];
    flat /= nw;
    p.mom = s.momentums[static_cast<size_t>(flat % nm)];
    flat /= nm;
    p.lr = s.learning_rates[static_cast<size_t>(flat)];
    return p;
}

}  // namespace

SearchResult random_grid_search_cv(const SearchSpace& space, const Manifest& train_manifest,
                                   const BaselineConfig& net_cfg, int64_t k) {
    space.validate();
    const int64_t grid = space.grid_size();

    // sample without replacement, candidate order fixed by the draw sequence
    std::vector<int64_t> flat(static_cast<size_t>(grid));
    std::iota(flat.begin(), flat.end(), int64_t{0});
    Rng rng(space.seed);
    std::vector<int64_t> chosen;
    for (int64_t i = 0; i < space.n_samples; ++i) {
        const uint64_t j = i + rng.below(static_cast<uint64_t>(grid - i));
        std::swap(flat[static_cast<size_t>(i)], flat[static_cast<size_t>(j)]);
        chosen.push_back(flat[static_cast<size_t>(i)]);
    }

    const auto folds = kfold_by_patient(train_manifest, k, space.seed);
    std::vector<std::pair<Dataset, Dataset>> fold_data;
    for (const auto& [tr, va] : folds) {
        for (const std::string& p : va.patients())
            for (const std::string& q : tr.patients())
                if (p == q) throw std::logic_error("search: patient " + p + " leaks across a fold");
        fold_data.emplace_back(load_dataset(tr), load_dataset(va));
    }

    SearchResult result;
    for (size_t ci = 0; ci < chosen.size(); ++ci) {
        const GridPoint gp = grid_at(space, chosen[static_cast<size_t>(ci)]);
        CandidateResult cand;
        cand.config.learning_rate = gp.lr;
        cand.config.momentum = gp.mom;
        cand.config.weight_decay = gp.wd;
        cand.config.batch_size = gp.batch;
        cand.config.epochs = space.epochs;
        cand.config.method = space.method;

        for (size_t f = 0; f < fold_data.size(); ++f) {
            TrainConfig cfg = cand.config;
            cfg.seed = hash_combine(space.seed, hash_combine(ci, f));
            NetworkWeights w = init_network<float>(net_cfg, space.method);
            train(w, fold_data[f].first, cfg);
            const ScoredSet scored = score_dataset(w, space.method, fold_data[f].second);
            cand.fold_auprc.push_back(auprc(scored));
            cand.fold_auroc.push_back(auroc(scored));
        }
        cand.mean_auprc = std::accumulate(cand.fold_auprc.begin(), cand.fold_auprc.end(), 0.0) /
                          static_cast<double>(cand.fold_auprc.size());
        cand.mean_auroc = std::accumulate(cand.fold_auroc.begin(), cand.fold_auroc.end(), 0.0) /
                          static_cast<double>(cand.fold_auroc.size());
        result.candidates.push_back(std::move(cand));
    }

    for (size_t i = 1; i < result.candidates.size(); ++i) {
        const CandidateResult& a = result.candidates[i];
        const CandidateResult& b = result.candidates[result.best_index];
        if (a.mean_auprc > b.mean_auprc ||
            (a.mean_auprc == b.mean_auprc && a.mean_auroc > b.mean_auroc))
            result.best_index = i;
    }
    return result;
}

}  // namespace tfusion
