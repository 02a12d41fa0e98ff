#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfusion/gemm.hpp"
#include "tfusion/graph.hpp"
#include "tfusion/tensor.hpp"

namespace tfusion {

enum class Activation { Relu, Sigmoid, Tanh };

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Accumulates data-dependent branch choices (relu signs, argmaxes) into one
// hash word per op, reported to the graph's branch signature.
struct BranchHasher {
    uint64_t h = 1469598103934665603ull;
    uint64_t word = 0;
    int bits = 0;

    void push(uint64_t v, int nbits) {
        word = (word << nbits) | v;
        bits += nbits;
        if (bits >= 56) flush_word();
    }
    void push_word(uint64_t v) {
        flush_word();
        h = (h ^ v) * 1099511628211ull;
    }
    void flush_word() {
        if (!bits) return;
        h = (h ^ word) * 1099511628211ull;
        word = 0;
        bits = 0;
    }
    uint64_t value() {
        flush_word();
        return h;
    }
};

template <typename T>
void im2col(const T* input, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW, int64_t pad,
            int64_t Ho, int64_t Wo, T* col) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < kH; ++ky) {
            for (int64_t kx = 0; kx < kW; ++kx) {
                T* dst = col + ((c * kH + ky) * kW + kx) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) {
                        for (int64_t ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = T(0);
                        continue;
                    }
                    const T* src = input + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const int64_t ix = ox + kx - pad;
                        dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accum(const T* col, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW, int64_t pad,
                  int64_t Ho, int64_t Wo, T* dinput) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < kH; ++ky) {
            for (int64_t kx = 0; kx < kW; ++kx) {
                const T* src = col + ((c * kH + ky) * kW + kx) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = dinput + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const int64_t ix = ox + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// --- convolution ------------------------------------------------------------

// Cross-correlation (no kernel flip), stride 1. input [C_in,H,W],
// kernels [C_out,C_in,kH,kW], bias [C_out] -> [C_out, H+2p-kH+1, W+2p-kW+1].
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernels, const TensorT<T>& bias,
                  int64_t padding, GraphT<T>* g = nullptr) {
    detail::require(input.rank() == 3, "conv2d: input rank " + std::to_string(input.rank()) + ", expected 3");
    detail::require(kernels.rank() == 4, "conv2d: kernels rank " + std::to_string(kernels.rank()) + ", expected 4");
    detail::require(bias.rank() == 1, "conv2d: bias rank " + std::to_string(bias.rank()) + ", expected 1");
    detail::require(padding >= 0, "conv2d: negative padding " + std::to_string(padding));
    const int64_t Cin = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int64_t Cout = kernels.dim(0), kH = kernels.dim(2), kW = kernels.dim(3);
    detail::require(kernels.dim(1) == Cin, "conv2d: kernel input channels " + std::to_string(kernels.dim(1)) +
                                               " != input channels " + std::to_string(Cin));
    detail::require(bias.dim(0) == Cout, "conv2d: bias size " + std::to_string(bias.dim(0)) +
                                             " != output channels " + std::to_string(Cout));
    detail::require(kH <= H + 2 * padding, "conv2d: kernel height " + std::to_string(kH) +
                                               " exceeds padded input height " + std::to_string(H + 2 * padding));
    detail::require(kW <= W + 2 * padding, "conv2d: kernel width " + std::to_string(kW) +
                                               " exceeds padded input width " + std::to_string(W + 2 * padding));
    const int64_t Ho = H + 2 * padding - kH + 1;
    const int64_t Wo = W + 2 * padding - kW + 1;
    const int64_t K = Cin * kH * kW;
    const int64_t P = Ho * Wo;

    std::vector<T> col(static_cast<size_t>(K * P));
    detail::im2col(input.ptr(), Cin, H, W, kH, kW, padding, Ho, Wo, col.data());

    TensorT<T> out = TensorT<T>::zeros({Cout, Ho, Wo});
    for (int64_t o = 0; o < Cout; ++o) {
        T* row = out.ptr() + o * P;
        const T b = bias[o];
        for (int64_t j = 0; j < P; ++j) row[j] = b;
    }
    gemm_accum(Cout, P, K, kernels.ptr(), col.data(), out.ptr());

    if (g) {
        const int in_id = input_id(*g, input);
        const int w_id = input_id(*g, kernels);
        const int b_id = input_id(*g, bias);
        const int self = static_cast<int>(g->size());
        g->record("conv2d", {in_id, w_id, b_id}, out,
                  [self, in_id, w_id, b_id, Cin, H, W, Cout, kH, kW, padding, Ho, Wo, K, P](GraphT<T>& gr) {
                      const std::vector<T>& dout = gr.grad(self);
                      if (gr.needs_grad(b_id)) {
                          std::vector<T>& db = gr.grad(b_id);
                          for (int64_t o = 0; o < Cout; ++o)
                              db[static_cast<size_t>(o)] += sum_fixed(dout.data() + o * P, P);
                      }
                      const bool want_w = gr.needs_grad(w_id);
                      const bool want_in = gr.needs_grad(in_id);
                      if (want_w) {
                          std::vector<T> col(static_cast<size_t>(K * P));
                          detail::im2col(gr.value(in_id).data(), Cin, H, W, kH, kW, padding, Ho, Wo, col.data());
                          gemm_abT_accum(Cout, K, P, dout.data(), col.data(), gr.grad(w_id).data());
                      }
                      if (want_in) {
                          std::vector<T> dcol(static_cast<size_t>(K * P), T(0));
                          gemm_aTb_accum(K, P, Cout, gr.value(w_id).data(), dout.data(), dcol.data());
                          detail::col2im_accum(dcol.data(), Cin, H, W, kH, kW, padding, Ho, Wo,
                                               gr.grad(in_id).data());
                      }
                  });
        attach(out, g, self);
    }
    return out;
}

// --- pooling ----------------------------------------------------------------

// 2x2 window, stride 2. Ties route gradient to the first element in row-major
// window scan order.
template <typename T>
TensorT<T> maxpool2d(const TensorT<T>& input, GraphT<T>* g = nullptr) {
    detail::require(input.rank() == 3, "maxpool2d: input rank " + std::to_string(input.rank()) + ", expected 3");
    const int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    detail::require(H % 2 == 0, "maxpool2d: odd height " + std::to_string(H));
    detail::require(W % 2 == 0, "maxpool2d: odd width " + std::to_string(W));
    const int64_t Ho = H / 2, Wo = W / 2;

    TensorT<T> out = TensorT<T>::zeros({C, Ho, Wo});
    std::vector<int64_t> argmax(static_cast<size_t>(C * Ho * Wo));
    detail::BranchHasher bh;
    const T* in = input.ptr();
    T* op = out.ptr();
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t oy = 0; oy < Ho; ++oy) {
            for (int64_t ox = 0; ox < Wo; ++ox) {
                const int64_t base = (c * H + oy * 2) * W + ox * 2;
                T best = in[base];
                int64_t arg = base;
                uint64_t local = 0;
                const int64_t cands[3] = {base + 1, base + W, base + W + 1};
                for (int k = 0; k < 3; ++k) {
                    if (in[cands[k]] > best) {
                        best = in[cands[k]];
                        arg = cands[k];
                        local = static_cast<uint64_t>(k + 1);
                    }
                }
                const int64_t oidx = (c * Ho + oy) * Wo + ox;
                op[oidx] = best;
                argmax[static_cast<size_t>(oidx)] = arg;
                bh.push(local, 2);
            }
        }
    }

    if (g) {
        g->note_branch(bh.value());
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("maxpool2d", {in_id}, out, [self, in_id, argmax = std::move(argmax)](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& din = gr.grad(in_id);
            for (size_t i = 0; i < argmax.size(); ++i) din[static_cast<size_t>(argmax[i])] += dout[i];
        });
        attach(out, g, self);
    }
    return out;
}

// --- linear -----------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  GraphT<T>* g = nullptr) {
    detail::require(input.rank() == 1, "linear: input rank " + std::to_string(input.rank()) + ", expected 1");
    detail::require(weight.rank() == 2, "linear: weight rank " + std::to_string(weight.rank()) + ", expected 2");
    detail::require(bias.rank() == 1, "linear: bias rank " + std::to_string(bias.rank()) + ", expected 1");
    const int64_t Nin = input.dim(0), Nout = weight.dim(0);
    detail::require(weight.dim(1) == Nin, "linear: weight columns " + std::to_string(weight.dim(1)) +
                                              " != input size " + std::to_string(Nin));
    detail::require(bias.dim(0) == Nout, "linear: bias size " + std::to_string(bias.dim(0)) +
                                             " != output size " + std::to_string(Nout));

    TensorT<T> out = TensorT<T>::zeros({Nout});
    for (int64_t o = 0; o < Nout; ++o) out[o] = dot_fixed(weight.ptr() + o * Nin, input.ptr(), Nin) + bias[o];

    if (g) {
        const int in_id = input_id(*g, input);
        const int w_id = input_id(*g, weight);
        const int b_id = input_id(*g, bias);
        const int self = static_cast<int>(g->size());
        g->record("linear", {in_id, w_id, b_id}, out, [self, in_id, w_id, b_id, Nin, Nout](GraphT<T>& gr) {
            const std::vector<T>& dout = gr.grad(self);
            if (gr.needs_grad(b_id)) {
                std::vector<T>& db = gr.grad(b_id);
                for (int64_t o = 0; o < Nout; ++o) db[static_cast<size_t>(o)] += dout[static_cast<size_t>(o)];
            }
            if (gr.needs_grad(w_id)) {
                std::vector<T>& dw = gr.grad(w_id);
                const std::vector<T>& x = gr.value(in_id);
                for (int64_t o = 0; o < Nout; ++o)
                    axpy(Nin, dout[static_cast<size_t>(o)], x.data(), dw.data() + o * Nin);
            }
            if (gr.needs_grad(in_id)) {
                std::vector<T>& dx = gr.grad(in_id);
                const std::vector<T>& w = gr.value(w_id);
                for (int64_t o = 0; o < Nout; ++o)
                    axpy(Nin, dout[static_cast<size_t>(o)], w.data() + o * Nin, dx.data());
            }
        });
        attach(out, g, self);
    }
    return out;
}

// --- activations ------------------------------------------------------------

// Gradient passes iff input > 0; exactly zero blocks it.
template <typename T>
TensorT<T> relu(const TensorT<T>& input, GraphT<T>* g = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(input.shape);
    const int64_t n = input.numel();
    detail::BranchHasher bh;
    for (int64_t i = 0; i < n; ++i) {
        const bool pos = input[i] > T(0);
        out[i] = pos ? input[i] : T(0);
        bh.push(pos ? 1u : 0u, 1);
    }
    if (g) {
        g->note_branch(bh.value());
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("relu", {in_id}, out, [self, in_id, n](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            const std::vector<T>& x = gr.value(in_id);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < n; ++i)
                if (x[static_cast<size_t>(i)] > T(0)) din[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& input, GraphT<T>* g = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(input.shape);
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) {
        const T x = input[i];
        if (x >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out[i] = e / (T(1) + e);
        }
    }
    if (g) {
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("sigmoid", {in_id}, out, [self, in_id, n](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            const std::vector<T>& y = gr.value(self);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < n; ++i) {
                const T yi = y[static_cast<size_t>(i)];
                din[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)] * yi * (T(1) - yi);
            }
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> tanh_act(const TensorT<T>& input, GraphT<T>* g = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(input.shape);
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(input[i]);
    if (g) {
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("tanh", {in_id}, out, [self, in_id, n](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            const std::vector<T>& y = gr.value(self);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < n; ++i) {
                const T yi = y[static_cast<size_t>(i)];
                din[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)] * (T(1) - yi * yi);
            }
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> activation(const TensorT<T>& input, Activation kind, GraphT<T>* g = nullptr) {
    switch (kind) {
        case Activation::Relu: return relu(input, g);
        case Activation::Sigmoid: return sigmoid(input, g);
        case Activation::Tanh: return tanh_act(input, g);
    }
    throw std::invalid_argument("activation: unknown kind");
}

// --- loss -------------------------------------------------------------------

// Max-subtracted log-softmax plus NLL of the true class; gradient w.r.t.
// logits is softmax(logits) - onehot(label).
template <typename T>
TensorT<T> log_softmax_nll(const TensorT<T>& logits, int64_t label, GraphT<T>* g = nullptr) {
    detail::require(logits.rank() == 1, "log_softmax_nll: logits rank " + std::to_string(logits.rank()) + ", expected 1");
    const int64_t K = logits.dim(0);
    detail::require(label >= 0 && label < K, "log_softmax_nll: label " + std::to_string(label) +
                                                 " outside [0," + std::to_string(K) + ")");
    T m = logits[0];
    for (int64_t i = 1; i < K; ++i) m = std::max(m, logits[i]);
    std::vector<T> p(static_cast<size_t>(K));
    T s = T(0);
    for (int64_t i = 0; i < K; ++i) {
        p[static_cast<size_t>(i)] = std::exp(logits[i] - m);
        s += p[static_cast<size_t>(i)];
    }
    for (int64_t i = 0; i < K; ++i) p[static_cast<size_t>(i)] /= s;
    TensorT<T> out = TensorT<T>::scalar(-(logits[label] - m - std::log(s)));

    if (g) {
        const int in_id = input_id(*g, logits);
        const int self = static_cast<int>(g->size());
        g->record("log_softmax_nll", {in_id}, out, [self, in_id, label, K, p = std::move(p)](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const T up = gr.grad(self)[0];
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < K; ++i)
                din[static_cast<size_t>(i)] += up * (p[static_cast<size_t>(i)] - (i == label ? T(1) : T(0)));
        });
        attach(out, g, self);
    }
    return out;
}

// --- shape ops --------------------------------------------------------------

template <typename T>
TensorT<T> concat(const TensorT<T>& a, const TensorT<T>& b, GraphT<T>* g = nullptr) {
    detail::require(a.rank() == 1, "concat: left rank " + std::to_string(a.rank()) + ", expected 1");
    detail::require(b.rank() == 1, "concat: right rank " + std::to_string(b.rank()) + ", expected 1");
    const int64_t N = a.dim(0), M = b.dim(0);
    TensorT<T> out = TensorT<T>::zeros({N + M});
    for (int64_t i = 0; i < N; ++i) out[i] = a[i];
    for (int64_t i = 0; i < M; ++i) out[N + i] = b[i];
    if (g) {
        const int a_id = input_id(*g, a);
        const int b_id = input_id(*g, b);
        const int self = static_cast<int>(g->size());
        g->record("concat", {a_id, b_id}, out, [self, a_id, b_id, N, M](GraphT<T>& gr) {
            const std::vector<T>& dout = gr.grad(self);
            if (gr.needs_grad(a_id)) {
                std::vector<T>& da = gr.grad(a_id);
                for (int64_t i = 0; i < N; ++i) da[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
            }
            if (gr.needs_grad(b_id)) {
                std::vector<T>& db = gr.grad(b_id);
                for (int64_t i = 0; i < M; ++i) db[static_cast<size_t>(i)] += dout[static_cast<size_t>(N + i)];
            }
        });
        attach(out, g, self);
    }
    return out;
}

// Slice [start, start+len) of a rank-1 tensor.
template <typename T>
TensorT<T> slice(const TensorT<T>& input, int64_t start, int64_t len, GraphT<T>* g = nullptr) {
    detail::require(input.rank() == 1, "slice: input rank " + std::to_string(input.rank()) + ", expected 1");
    detail::require(start >= 0 && len >= 0 && start + len <= input.dim(0),
                    "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                        ") outside size " + std::to_string(input.dim(0)));
    TensorT<T> out = TensorT<T>::zeros({len});
    for (int64_t i = 0; i < len; ++i) out[i] = input[start + i];
    if (g) {
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("slice", {in_id}, out, [self, in_id, start, len](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < len; ++i) din[static_cast<size_t>(start + i)] += dout[static_cast<size_t>(i)];
        });
        attach(out, g, self);
    }
    return out;
}

// Copying reshape; keeps buffer identity distinct so leaf dedup stays sound.
template <typename T>
TensorT<T> reshape(const TensorT<T>& input, std::vector<int64_t> new_shape, GraphT<T>* g = nullptr) {
    detail::require(shape_numel(new_shape) == input.numel(),
                    "reshape: " + shape_str(new_shape) + " does not hold " + std::to_string(input.numel()) +
                        " values");
    TensorT<T> out = TensorT<T>::zeros(std::move(new_shape));
    std::memcpy(out.ptr(), input.ptr(), static_cast<size_t>(input.numel()) * sizeof(T));
    if (g) {
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        const int64_t n = input.numel();
        g->record("reshape", {in_id}, out, [self, in_id, n](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < n; ++i) din[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
        });
        attach(out, g, self);
    }
    return out;
}

// Stack equal-shape tensors along a new leading axis.
template <typename T>
TensorT<T> stack_rows(const std::vector<TensorT<T>>& parts, GraphT<T>* g = nullptr) {
    detail::require(!parts.empty(), "stack_rows: empty input list");
    const int64_t Tn = static_cast<int64_t>(parts.size());
    for (const TensorT<T>& p : parts)
        detail::require(p.shape == parts[0].shape, "stack_rows: mismatched element shape " + shape_str(p.shape) +
                                                       " vs " + shape_str(parts[0].shape));
    std::vector<int64_t> shape;
    shape.push_back(Tn);
    for (int64_t d : parts[0].shape) shape.push_back(d);
    const int64_t step = parts[0].numel();
    TensorT<T> out = TensorT<T>::zeros(std::move(shape));
    for (int64_t t = 0; t < Tn; ++t)
        std::memcpy(out.ptr() + t * step, parts[static_cast<size_t>(t)].ptr(),
                    static_cast<size_t>(step) * sizeof(T));
    if (g) {
        std::vector<int> ids;
        ids.reserve(parts.size());
        for (const TensorT<T>& p : parts) ids.push_back(input_id(*g, p));
        const int self = static_cast<int>(g->size());
        g->record("stack_rows", ids, out, [self, ids, step](GraphT<T>& gr) {
            const std::vector<T>& dout = gr.grad(self);
            for (size_t t = 0; t < ids.size(); ++t) {
                if (!gr.needs_grad(ids[t])) continue;
                std::vector<T>& din = gr.grad(ids[t]);
                const T* src = dout.data() + static_cast<int64_t>(t) * step;
                for (int64_t i = 0; i < step; ++i) din[static_cast<size_t>(i)] += src[i];
            }
        });
        attach(out, g, self);
    }
    return out;
}

// Select one index along the leading axis.
template <typename T>
TensorT<T> index_time(const TensorT<T>& input, int64_t idx, GraphT<T>* g = nullptr) {
    detail::require(input.rank() >= 2, "index_time: input rank " + std::to_string(input.rank()) + ", expected >= 2");
    const int64_t Tn = input.dim(0);
    detail::require(idx >= 0 && idx < Tn,
                    "index_time: index " + std::to_string(idx) + " outside [0," + std::to_string(Tn) + ")");
    std::vector<int64_t> shape(input.shape.begin() + 1, input.shape.end());
    const int64_t step = shape_numel(shape);
    TensorT<T> out = TensorT<T>::zeros(std::move(shape));
    std::memcpy(out.ptr(), input.ptr() + idx * step, static_cast<size_t>(step) * sizeof(T));
    if (g) {
        const int in_id = input_id(*g, input);
        const int self = static_cast<int>(g->size());
        g->record("index_time", {in_id}, out, [self, in_id, idx, step](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& din = gr.grad(in_id);
            T* dst = din.data() + idx * step;
            for (int64_t i = 0; i < step; ++i) dst[i] += dout[static_cast<size_t>(i)];
        });
        attach(out, g, self);
    }
    return out;
}

// --- arithmetic -------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, GraphT<T>* g = nullptr) {
    detail::require(a.shape == b.shape,
                    "add: shape " + shape_str(a.shape) + " != shape " + shape_str(b.shape));
    TensorT<T> out = TensorT<T>::zeros(a.shape);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    if (g) {
        const int a_id = input_id(*g, a);
        const int b_id = input_id(*g, b);
        const int self = static_cast<int>(g->size());
        g->record("add", {a_id, b_id}, out, [self, a_id, b_id, n](GraphT<T>& gr) {
            const std::vector<T>& dout = gr.grad(self);
            if (gr.needs_grad(a_id)) {
                std::vector<T>& da = gr.grad(a_id);
                for (int64_t i = 0; i < n; ++i) da[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
            }
            if (gr.needs_grad(b_id)) {
                std::vector<T>& db = gr.grad(b_id);
                for (int64_t i = 0; i < n; ++i) db[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
            }
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, GraphT<T>* g = nullptr) {
    detail::require(a.shape == b.shape,
                    "mul: shape " + shape_str(a.shape) + " != shape " + shape_str(b.shape));
    TensorT<T> out = TensorT<T>::zeros(a.shape);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    if (g) {
        const int a_id = input_id(*g, a);
        const int b_id = input_id(*g, b);
        const int self = static_cast<int>(g->size());
        g->record("mul", {a_id, b_id}, out, [self, a_id, b_id, n](GraphT<T>& gr) {
            const std::vector<T>& dout = gr.grad(self);
            if (gr.needs_grad(a_id)) {
                std::vector<T>& da = gr.grad(a_id);
                const std::vector<T>& bv = gr.value(b_id);
                for (int64_t i = 0; i < n; ++i)
                    da[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)] * bv[static_cast<size_t>(i)];
            }
            if (gr.needs_grad(b_id)) {
                std::vector<T>& db = gr.grad(b_id);
                const std::vector<T>& av = gr.value(a_id);
                for (int64_t i = 0; i < n; ++i)
                    db[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)] * av[static_cast<size_t>(i)];
            }
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s, GraphT<T>* g = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(a.shape);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
    if (g) {
        const int a_id = input_id(*g, a);
        const int self = static_cast<int>(g->size());
        g->record("scale", {a_id}, out, [self, a_id, s, n](GraphT<T>& gr) {
            if (!gr.needs_grad(a_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& da = gr.grad(a_id);
            for (int64_t i = 0; i < n; ++i) da[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)] * s;
        });
        attach(out, g, self);
    }
    return out;
}

template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, GraphT<T>* g = nullptr) {
    TensorT<T> out = TensorT<T>::scalar(sum_fixed(a.ptr(), a.numel()));
    if (g) {
        const int a_id = input_id(*g, a);
        const int self = static_cast<int>(g->size());
        const int64_t n = a.numel();
        g->record("reduce_sum", {a_id}, out, [self, a_id, n](GraphT<T>& gr) {
            if (!gr.needs_grad(a_id)) return;
            const T up = gr.grad(self)[0];
            std::vector<T>& da = gr.grad(a_id);
            for (int64_t i = 0; i < n; ++i) da[static_cast<size_t>(i)] += up;
        });
        attach(out, g, self);
    }
    return out;
}

// --- temporal ops -----------------------------------------------------------

// Columnwise max over the time axis of [T,N]; gradient routes to the earliest
// argmax time step.
template <typename T>
TensorT<T> temporal_max(const TensorT<T>& features, GraphT<T>* g = nullptr) {
    detail::require(features.rank() == 2,
                    "temporal_max: input rank " + std::to_string(features.rank()) + ", expected 2");
    const int64_t Tn = features.dim(0), N = features.dim(1);
    detail::require(Tn >= 1, "temporal_max: empty time axis");

    TensorT<T> out = TensorT<T>::zeros({N});
    std::vector<int64_t> argmax(static_cast<size_t>(N), 0);
    std::memcpy(out.ptr(), features.ptr(), static_cast<size_t>(N) * sizeof(T));
    for (int64_t t = 1; t < Tn; ++t) {
        const T* row = features.ptr() + t * N;
        for (int64_t i = 0; i < N; ++i) {
            if (row[i] > out[i]) {
                out[i] = row[i];
                argmax[static_cast<size_t>(i)] = t;
            }
        }
    }
    if (g) {
        detail::BranchHasher bh;
        for (int64_t i = 0; i < N; ++i) bh.push_word(static_cast<uint64_t>(argmax[static_cast<size_t>(i)]));
        g->note_branch(bh.value());
        const int in_id = input_id(*g, features);
        const int self = static_cast<int>(g->size());
        g->record("temporal_max", {in_id}, out, [self, in_id, N, argmax = std::move(argmax)](GraphT<T>& gr) {
            if (!gr.needs_grad(in_id)) return;
            const std::vector<T>& dout = gr.grad(self);
            std::vector<T>& din = gr.grad(in_id);
            for (int64_t i = 0; i < N; ++i)
                din[static_cast<size_t>(argmax[static_cast<size_t>(i)] * N + i)] += dout[static_cast<size_t>(i)];
        });
        attach(out, g, self);
    }
    return out;
}

// Shift channels [0,c_f) one step forward in time and channels [c_f,2c_f) one
// step backward, zero-filled at the sequence ends; c_f = floor(C * fraction).
// Identity at T=1 so single-visit sequences reduce to the unshifted network.
template <typename T>
TensorT<T> temporal_shift(const TensorT<T>& fmap, double fraction, GraphT<T>* g = nullptr) {
    detail::require(fmap.rank() == 4,
                    "temporal_shift: input rank " + std::to_string(fmap.rank()) + ", expected 4");
    detail::require(fraction >= 0.0 && fraction <= 0.5,
                    "temporal_shift: fraction " + std::to_string(fraction) + " outside [0,0.5]");
    const int64_t Tn = fmap.dim(0), C = fmap.dim(1), H = fmap.dim(2), W = fmap.dim(3);
    const int64_t cf = static_cast<int64_t>(C * fraction);
    const int64_t plane = H * W;
    const int64_t step = C * plane;

    TensorT<T> out = TensorT<T>::zeros(fmap.shape);
    if (Tn == 1 || cf == 0) {
        std::memcpy(out.ptr(), fmap.ptr(), static_cast<size_t>(fmap.numel()) * sizeof(T));
    } else {
        for (int64_t t = 0; t < Tn; ++t) {
            T* dst = out.ptr() + t * step;
            // forward-shifted block reads t-1, zero at t=0
            if (t > 0)
                std::memcpy(dst, fmap.ptr() + (t - 1) * step, static_cast<size_t>(cf * plane) * sizeof(T));
            // backward-shifted block reads t+1, zero at t=T-1
            if (t < Tn - 1)
                std::memcpy(dst + cf * plane, fmap.ptr() + (t + 1) * step + cf * plane,
                            static_cast<size_t>(cf * plane) * sizeof(T));
            std::memcpy(dst + 2 * cf * plane, fmap.ptr() + t * step + 2 * cf * plane,
                        static_cast<size_t>((C - 2 * cf) * plane) * sizeof(T));
        }
    }

    if (g) {
        const int in_id = input_id(*g, fmap);
        const int self = static_cast<int>(g->size());
        const bool identity = (Tn == 1 || cf == 0);
        const int64_t total = fmap.numel();
        g->record("temporal_shift", {in_id}, out,
                  [self, in_id, identity, total, Tn, cf, plane, step, C](GraphT<T>& gr) {
                      if (!gr.needs_grad(in_id)) return;
                      const std::vector<T>& dout = gr.grad(self);
                      std::vector<T>& din = gr.grad(in_id);
                      if (identity) {
                          for (int64_t i = 0; i < total; ++i) din[static_cast<size_t>(i)] += dout[static_cast<size_t>(i)];
                          return;
                      }
                      for (int64_t t = 0; t < Tn; ++t) {
                          const T* src = dout.data() + t * step;
                          if (t > 0)
                              axpy(cf * plane, T(1), src, din.data() + (t - 1) * step);
                          if (t < Tn - 1)
                              axpy(cf * plane, T(1), src + cf * plane, din.data() + (t + 1) * step + cf * plane);
                          axpy((C - 2 * cf) * plane, T(1), src + 2 * cf * plane,
                               din.data() + t * step + 2 * cf * plane);
                      }
                  });
        attach(out, g, self);
    }
    return out;
}

}  // namespace tfusion
