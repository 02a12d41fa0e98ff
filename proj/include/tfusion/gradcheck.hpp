#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tfusion/graph.hpp"
#include "tfusion/ops.hpp"
#include "tfusion/tensor.hpp"

namespace tfusion {

template <typename T>
struct GradCheckReport {
    T max_rel_err = T(0);
    int64_t checked = 0;
    int64_t skipped_kinks = 0;
};

// Central-difference verification of backward gradients. The loss function is
// re-evaluated at +step/-step per component; evaluations whose branch
// signature (relu signs, pool and temporal argmaxes) differs from the base
// point crossed a kink, where finite differences are invalid, and are skipped
// rather than compared. Error is |analytic - numeric| / max(1, |analytic|,
// |numeric|), relative for large components and absolute below unit scale.
template <typename T, typename F>
GradCheckReport<T> grad_check_params(F&& f, const std::vector<TensorT<T>*>& params, T step) {
    for (TensorT<T>* p : params) {
        p->set_requires_grad(true);
        p->zero_grad();
    }
    uint64_t base_sig = 0;
    {
        GraphT<T> g;
        TensorT<T> loss = f(&g);
        base_sig = g.branch_signature();
        g.backward_from(loss);
    }
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (TensorT<T>* p : params) analytic.push_back(*p->grad);

    GradCheckReport<T> rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        TensorT<T>& p = *params[pi];
        for (int64_t i = 0; i < p.numel(); ++i) {
            const T saved = p[i];
            p[i] = saved + step;
            GraphT<T> gp;
            const T lp = f(&gp).item();
            const uint64_t sp = gp.branch_signature();
            p[i] = saved - step;
            GraphT<T> gm;
            const T lm = f(&gm).item();
            const uint64_t sm = gm.branch_signature();
            p[i] = saved;
            if (sp != base_sig || sm != base_sig) {
                ++rep.skipped_kinks;
                continue;
            }
            const T numeric = (lp - lm) / (T(2) * step);
            const T a = analytic[pi][static_cast<size_t>(i)];
            const T denom = std::max(T(1), std::max(std::abs(a), std::abs(numeric)));
            const T err = std::abs(a - numeric) / denom;
            if (err > rep.max_rel_err) rep.max_rel_err = err;
            ++rep.checked;
        }
    }
    for (TensorT<T>* p : params) p->zero_grad();
    return rep;
}

// Single-tensor form: differentiates a scalar function of one point tensor.
template <typename T>
T grad_check(const std::function<TensorT<T>(const TensorT<T>&, GraphT<T>*)>& f, TensorT<T>& point, T step) {
    auto wrapped = [&](GraphT<T>* g) { return f(point, g); };
    return grad_check_params<T>(wrapped, {&point}, step).max_rel_err;
}

}  // namespace tfusion
