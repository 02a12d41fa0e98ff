#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tfusion/ops.hpp"
#include "tfusion/rng.hpp"
#include "tfusion/tensor.hpp"

namespace tfusion {

enum class FusionMethod { Baseline, AvgPrediction, ConvPooling, TSM, LSTM };

inline const char* method_name(FusionMethod m) {
    switch (m) {
        case FusionMethod::Baseline: return "baseline";
        case FusionMethod::AvgPrediction: return "avg_prediction";
        case FusionMethod::ConvPooling: return "conv_pooling";
        case FusionMethod::TSM: return "tsm";
        case FusionMethod::LSTM: return "lstm";
    }
    return "?";
}

inline FusionMethod parse_method(const std::string& s) {
    if (s == "baseline") return FusionMethod::Baseline;
    if (s == "avg_prediction") return FusionMethod::AvgPrediction;
    if (s == "conv_pooling") return FusionMethod::ConvPooling;
    if (s == "tsm") return FusionMethod::TSM;
    if (s == "lstm") return FusionMethod::LSTM;
    throw std::invalid_argument("unknown fusion method: " + s);
}

// Two-view Siamese CNN: a shared conv stack plus branch_fc per view, outputs
// concatenated into one feature vector for the two-layer head. Dimensions are
// derived so the concatenated feature is feature_dim() wide (1024 with the
// default channel plan).
struct BaselineConfig {
    int64_t input_size = 256;
    std::vector<int64_t> conv_channels = {16, 32, 64, 64, 128, 128, 256};
    int64_t kernel = 3;
    int64_t padding = 1;
    int64_t branch_out = 512;
    int64_t head_hidden = 256;
    int64_t lstm_hidden = 512;  // per direction
    double tsm_fraction = 0.125;
    uint64_t init_seed = 1;

    int layers() const { return static_cast<int>(conv_channels.size()); }
    int64_t final_spatial() const { return input_size >> layers(); }
    int64_t flat_dim() const { return conv_channels.back() * final_spatial() * final_spatial(); }
    int64_t feature_dim() const { return 2 * branch_out; }

    void validate() const {
        if (conv_channels.empty()) throw std::invalid_argument("config: empty conv channel list");
        for (int64_t c : conv_channels)
            if (c < 1) throw std::invalid_argument("config: conv channels must be positive");
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("config: kernel " + std::to_string(kernel) + " must be odd");
        if (padding != (kernel - 1) / 2)
            throw std::invalid_argument("config: padding " + std::to_string(padding) +
                                        " does not preserve spatial size for kernel " + std::to_string(kernel));
        const int64_t div = int64_t(1) << layers();
        if (input_size < div || input_size % div != 0)
            throw std::invalid_argument("config: input size " + std::to_string(input_size) +
                                        " not divisible by 2^" + std::to_string(layers()));
        if (branch_out < 1 || head_hidden < 1 || lstm_hidden < 1)
            throw std::invalid_argument("config: layer widths must be positive");
        if (tsm_fraction < 0.0 || tsm_fraction > 0.5)
            throw std::invalid_argument("config: tsm fraction " + std::to_string(tsm_fraction) +
                                        " outside [0,0.5]");
    }

    // 8x8 inputs, two 2-channel convs; small enough for finite-difference
    // verification of every parameter.
    static BaselineConfig tiny(int64_t channels = 2) {
        BaselineConfig c;
        c.input_size = 8;
        c.conv_channels = {channels, channels};
        c.branch_out = 8;
        c.head_hidden = 8;
        c.lstm_hidden = 4;
        c.tsm_fraction = 0.25;
        return c;
    }

    // 64x64 inputs; large enough to learn rendered cohorts, cheap enough for
    // repeated training runs in one process.
    static BaselineConfig compact() {
        BaselineConfig c;
        c.input_size = 64;
        c.conv_channels = {8, 16, 32, 32, 64};
        c.branch_out = 64;
        c.head_hidden = 32;
        c.lstm_hidden = 64;
        return c;
    }
};

// Closed-form parameter count for a config and method; tests assert it
// against the actual allocation.
inline int64_t parameter_count(const BaselineConfig& cfg, FusionMethod method) {
    int64_t n = 0;
    int64_t cin = 1;
    for (int64_t cout : cfg.conv_channels) {
        n += cout * cin * cfg.kernel * cfg.kernel + cout;
        cin = cout;
    }
    n += cfg.branch_out * cfg.flat_dim() + cfg.branch_out;
    n += cfg.head_hidden * cfg.feature_dim() + cfg.head_hidden;
    n += 2 * cfg.head_hidden + 2;
    if (method == FusionMethod::LSTM) {
        const int64_t H = cfg.lstm_hidden;
        n += 2 * (4 * H * cfg.feature_dim() + 4 * H * H + 4 * H + 4 * H);
    }
    return n;
}

template <typename T>
struct NetworkWeightsT {
    BaselineConfig config;
    FusionMethod method = FusionMethod::Baseline;
    std::vector<std::pair<std::string, TensorT<T>>> params;  // insertion order
    std::unordered_map<std::string, size_t> index;

    void add(const std::string& name, TensorT<T> t) {
        if (index.count(name)) throw std::invalid_argument("duplicate parameter " + name);
        index.emplace(name, params.size());
        params.emplace_back(name, std::move(t));
    }

    TensorT<T>& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("no parameter " + name);
        return params[it->second].second;
    }
    const TensorT<T>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("no parameter " + name);
        return params[it->second].second;
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }

    std::vector<TensorT<T>*> tensors() {
        std::vector<TensorT<T>*> out;
        out.reserve(params.size());
        for (auto& [name, t] : params) out.push_back(&t);
        return out;
    }

    int64_t total_parameters() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : params) t.zero_grad();
    }
};

using NetworkWeights = NetworkWeightsT<float>;

// Kaiming-uniform fan-in for weights, zero biases, LSTM forget-gate bias 1.
// Each parameter draws from its own name-derived stream, so the values do not
// depend on initialization order.
template <typename T>
NetworkWeightsT<T> init_network(const BaselineConfig& cfg, FusionMethod method) {
    cfg.validate();
    NetworkWeightsT<T> w;
    w.config = cfg;
    w.method = method;
    Rng root(cfg.init_seed);

    auto kaiming = [&](const std::string& name, std::vector<int64_t> shape, int64_t fan_in) {
        TensorT<T> t = TensorT<T>::param(std::move(shape));
        Rng rs = root.derive(fnv1a64(name));
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rs.uniform(-bound, bound));
        w.add(name, std::move(t));
    };
    auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
        w.add(name, TensorT<T>::param(std::move(shape)));
    };

    int64_t cin = 1;
    for (int l = 0; l < cfg.layers(); ++l) {
        const int64_t cout = cfg.conv_channels[static_cast<size_t>(l)];
        const std::string stem = "conv" + std::to_string(l + 1);
        kaiming(stem + ".weight", {cout, cin, cfg.kernel, cfg.kernel}, cin * cfg.kernel * cfg.kernel);
        zeros(stem + ".bias", {cout});
        cin = cout;
    }
    kaiming("branch_fc.weight", {cfg.branch_out, cfg.flat_dim()}, cfg.flat_dim());
    zeros("branch_fc.bias", {cfg.branch_out});
    kaiming("head_fc1.weight", {cfg.head_hidden, cfg.feature_dim()}, cfg.feature_dim());
    zeros("head_fc1.bias", {cfg.head_hidden});
    kaiming("head_fc2.weight", {2, cfg.head_hidden}, cfg.head_hidden);
    zeros("head_fc2.bias", {2});

    if (method == FusionMethod::LSTM) {
        const int64_t H = cfg.lstm_hidden;
        for (const std::string dir : {"fw", "bw"}) {
            const std::string stem = "lstm." + dir;
            kaiming(stem + ".weight_ih", {4 * H, cfg.feature_dim()}, cfg.feature_dim());
            kaiming(stem + ".weight_hh", {4 * H, H}, H);
            TensorT<T> bih = TensorT<T>::param({4 * H});
            for (int64_t i = H; i < 2 * H; ++i) bih[i] = T(1);  // forget gate block
            w.add(stem + ".bias_ih", std::move(bih));
            zeros(stem + ".bias_hh", {4 * H});
        }
    }
    return w;
}

template <typename T>
struct VisitT {
    TensorT<T> sag;
    TensorT<T> trv;
};

template <typename T>
using VisitSeqT = std::vector<VisitT<T>>;

using Visit = VisitT<float>;
using VisitSeq = VisitSeqT<float>;

namespace detail {

template <typename T>
void check_view(const BaselineConfig& cfg, const TensorT<T>& img, const char* which) {
    require(img.rank() == 3 && img.dim(0) == 1 && img.dim(1) == cfg.input_size && img.dim(2) == cfg.input_size,
            std::string("forward: ") + which + " view shape " + shape_str(img.shape) + ", expected [1," +
                std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) + "]");
}

// conv stack only: [1,S,S] -> [C_last, S/2^L, S/2^L]
template <typename T>
TensorT<T> conv_stack(const NetworkWeightsT<T>& w, const TensorT<T>& img, GraphT<T>* g) {
    TensorT<T> x = img;
    for (int l = 1; l <= w.config.layers(); ++l) {
        const std::string stem = "conv" + std::to_string(l);
        x = conv2d(x, w.at(stem + ".weight"), w.at(stem + ".bias"), w.config.padding, g);
        x = relu(x, g);
        x = maxpool2d(x, g);
    }
    return x;
}

template <typename T>
TensorT<T> branch_feature(const NetworkWeightsT<T>& w, const TensorT<T>& img, GraphT<T>* g) {
    TensorT<T> x = conv_stack(w, img, g);
    x = reshape(x, {w.config.flat_dim()}, g);
    return linear(x, w.at("branch_fc.weight"), w.at("branch_fc.bias"), g);
}

// concatenated two-view feature, the "1024-dim" visit representation
template <typename T>
TensorT<T> visit_feature(const NetworkWeightsT<T>& w, const VisitT<T>& v, GraphT<T>* g) {
    check_view(w.config, v.sag, "sagittal");
    check_view(w.config, v.trv, "transverse");
    TensorT<T> fs = branch_feature(w, v.sag, g);
    TensorT<T> ft = branch_feature(w, v.trv, g);
    return concat(fs, ft, g);
}

template <typename T>
TensorT<T> head(const NetworkWeightsT<T>& w, const TensorT<T>& feature, GraphT<T>* g) {
    TensorT<T> h = linear(feature, w.at("head_fc1.weight"), w.at("head_fc1.bias"), g);
    h = relu(h, g);
    return linear(h, w.at("head_fc2.weight"), w.at("head_fc2.bias"), g);
}

template <typename T>
void check_nonempty(const VisitSeqT<T>& seq) {
    require(!seq.empty(), "forward: empty visit sequence");
}

}  // namespace detail

// --- forward passes ---------------------------------------------------------

template <typename T>
TensorT<T> forward_single(const NetworkWeightsT<T>& w, const TensorT<T>& sag, const TensorT<T>& trv,
                          GraphT<T>* g = nullptr) {
    VisitT<T> v{sag, trv};
    return detail::head(w, detail::visit_feature(w, v, g), g);
}

// Mean of per-visit logits. T=1 multiplies by exactly 1, so the single-visit
// case is bit-identical to forward_single.
template <typename T>
TensorT<T> forward_avg_prediction(const NetworkWeightsT<T>& w, const VisitSeqT<T>& seq, GraphT<T>* g = nullptr) {
    detail::check_nonempty(seq);
    TensorT<T> acc = forward_single(w, seq[0].sag, seq[0].trv, g);
    for (size_t t = 1; t < seq.size(); ++t)
        acc = add(acc, forward_single(w, seq[t].sag, seq[t].trv, g), g);
    return scale(acc, T(1) / static_cast<T>(seq.size()), g);
}

template <typename T>
TensorT<T> forward_conv_pooling(const NetworkWeightsT<T>& w, const VisitSeqT<T>& seq, GraphT<T>* g = nullptr) {
    detail::check_nonempty(seq);
    std::vector<TensorT<T>> feats;
    feats.reserve(seq.size());
    for (const VisitT<T>& v : seq) feats.push_back(detail::visit_feature(w, v, g));
    TensorT<T> stacked = stack_rows(feats, g);
    TensorT<T> pooled = temporal_max(stacked, g);
    return detail::head(w, pooled, g);
}

// Channel shifts applied per view before conv layers 2..L; the latest visit's
// features feed branch_fc and the head.
template <typename T>
TensorT<T> forward_tsm(const NetworkWeightsT<T>& w, const VisitSeqT<T>& seq, double fraction,
                       GraphT<T>* g = nullptr) {
    detail::check_nonempty(seq);
    const int64_t Tn = static_cast<int64_t>(seq.size());
    auto run_view = [&](auto view_of) {
        std::vector<TensorT<T>> maps;
        maps.reserve(seq.size());
        for (const VisitT<T>& v : seq) {
            const TensorT<T>& img = view_of(v);
            detail::check_view(w.config, img, "input");
            TensorT<T> x = conv2d(img, w.at("conv1.weight"), w.at("conv1.bias"), w.config.padding, g);
            x = relu(x, g);
            maps.push_back(maxpool2d(x, g));
        }
        for (int l = 2; l <= w.config.layers(); ++l) {
            TensorT<T> stacked = stack_rows(maps, g);
            TensorT<T> shifted = temporal_shift(stacked, fraction, g);
            const std::string stem = "conv" + std::to_string(l);
            for (int64_t t = 0; t < Tn; ++t) {
                TensorT<T> x = index_time(shifted, t, g);
                x = conv2d(x, w.at(stem + ".weight"), w.at(stem + ".bias"), w.config.padding, g);
                x = relu(x, g);
                maps[static_cast<size_t>(t)] = maxpool2d(x, g);
            }
        }
        TensorT<T> last = reshape(maps[static_cast<size_t>(Tn - 1)], {w.config.flat_dim()}, g);
        return linear(last, w.at("branch_fc.weight"), w.at("branch_fc.bias"), g);
    };
    TensorT<T> fs = run_view([](const VisitT<T>& v) -> const TensorT<T>& { return v.sag; });
    TensorT<T> ft = run_view([](const VisitT<T>& v) -> const TensorT<T>& { return v.trv; });
    return detail::head(w, concat(fs, ft, g), g);
}

template <typename T>
TensorT<T> forward_tsm(const NetworkWeightsT<T>& w, const VisitSeqT<T>& seq, GraphT<T>* g = nullptr) {
    return forward_tsm(w, seq, w.config.tsm_fraction, g);
}

// Bidirectional LSTM over per-visit features; final state is
// concat(forward last, backward last).
template <typename T>
TensorT<T> forward_lstm(const NetworkWeightsT<T>& w, const VisitSeqT<T>& seq, GraphT<T>* g = nullptr) {
    detail::check_nonempty(seq);
    detail::require(w.has("lstm.fw.weight_ih"), "forward: weights carry no lstm parameters");
    const int64_t H = w.config.lstm_hidden;
    std::vector<TensorT<T>> feats;
    feats.reserve(seq.size());
    for (const VisitT<T>& v : seq) feats.push_back(detail::visit_feature(w, v, g));

    auto run_dir = [&](const std::string& stem, bool reverse) {
        const TensorT<T>& Wih = w.at(stem + ".weight_ih");
        const TensorT<T>& Whh = w.at(stem + ".weight_hh");
        const TensorT<T>& bih = w.at(stem + ".bias_ih");
        const TensorT<T>& bhh = w.at(stem + ".bias_hh");
        TensorT<T> h = TensorT<T>::zeros({H});
        TensorT<T> c = TensorT<T>::zeros({H});
        const int64_t Tn = static_cast<int64_t>(feats.size());
        for (int64_t k = 0; k < Tn; ++k) {
            const int64_t t = reverse ? Tn - 1 - k : k;
            TensorT<T> z = add(linear(feats[static_cast<size_t>(t)], Wih, bih, g), linear(h, Whh, bhh, g), g);
            TensorT<T> gi = sigmoid(slice(z, 0, H, g), g);
            TensorT<T> gf = sigmoid(slice(z, H, H, g), g);
            TensorT<T> gg = tanh_act(slice(z, 2 * H, H, g), g);
            TensorT<T> go = sigmoid(slice(z, 3 * H, H, g), g);
            c = add(mul(gf, c, g), mul(gi, gg, g), g);
            h = mul(go, tanh_act(c, g), g);
        }
        return h;
    };
    TensorT<T> hf = run_dir("lstm.fw", false);
    TensorT<T> hb = run_dir("lstm.bw", true);
    return detail::head(w, concat(hf, hb, g), g);
}

// Baseline applied to a sequence scores its latest visit.
template <typename T>
TensorT<T> forward_method(const NetworkWeightsT<T>& w, FusionMethod method, const VisitSeqT<T>& seq,
                          GraphT<T>* g = nullptr) {
    detail::check_nonempty(seq);
    switch (method) {
        case FusionMethod::Baseline: return forward_single(w, seq.back().sag, seq.back().trv, g);
        case FusionMethod::AvgPrediction: return forward_avg_prediction(w, seq, g);
        case FusionMethod::ConvPooling: return forward_conv_pooling(w, seq, g);
        case FusionMethod::TSM: return forward_tsm(w, seq, g);
        case FusionMethod::LSTM: return forward_lstm(w, seq, g);
    }
    throw std::invalid_argument("forward: unknown method");
}

template <typename T>
T softmax_positive(const TensorT<T>& logits) {
    detail::require(logits.rank() == 1 && logits.dim(0) == 2,
                    "softmax_positive: logits shape " + shape_str(logits.shape) + ", expected [2]");
    const T m = std::max(logits[0], logits[1]);
    const T e0 = std::exp(logits[0] - m);
    const T e1 = std::exp(logits[1] - m);
    return e1 / (e0 + e1);
}

template <typename T>
T predict_proba(const NetworkWeightsT<T>& w, FusionMethod method, const VisitSeqT<T>& seq) {
    return softmax_positive(forward_method(w, method, seq, static_cast<GraphT<T>*>(nullptr)));
}

}  // namespace tfusion
