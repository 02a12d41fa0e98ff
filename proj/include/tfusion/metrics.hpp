#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfusion/rng.hpp"

namespace tfusion {

// Aligned score/label lists; optional group ids make the bootstrap resample
// and jackknife at group (patient) granularity instead of per example.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> groups;  // empty, or aligned with scores

    size_t size() const { return scores.size(); }

    void validate() const {
        if (scores.size() != labels.size())
            throw std::invalid_argument("scored set: " + std::to_string(scores.size()) + " scores vs " +
                                        std::to_string(labels.size()) + " labels");
        if (!groups.empty() && groups.size() != scores.size())
            throw std::invalid_argument("scored set: " + std::to_string(groups.size()) + " groups vs " +
                                        std::to_string(scores.size()) + " scores");
        for (int l : labels)
            if (l != 0 && l != 1) throw std::invalid_argument("scored set: label " + std::to_string(l));
    }
};

// Mann-Whitney statistic via average ranks: ties between a positive and a
// negative count half a win.
inline double auroc(const ScoredSet& s) {
    s.validate();
    int64_t np = 0, nn = 0;
    for (int l : s.labels) (l ? np : nn)++;
    if (np == 0 || nn == 0)
        throw std::domain_error("undefined metric: auroc needs both classes, got " + std::to_string(np) +
                                " positive / " + std::to_string(nn) + " negative");
    const size_t n = s.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (s.scores[a] != s.scores[b]) return s.scores[a] < s.scores[b];
        return a < b;
    });
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[idx[j + 1]] == s.scores[idx[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // 1-based
        for (size_t k = i; k <= j; ++k)
            if (s.labels[idx[k]]) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double npd = static_cast<double>(np);
    return (pos_rank_sum - npd * (npd + 1.0) / 2.0) / (npd * static_cast<double>(nn));
}

// Average precision over distinct thresholds; equal scores collapse into one
// block so ties cannot order-cheat the curve.
inline double auprc(const ScoredSet& s) {
    s.validate();
    int64_t np = 0;
    for (int l : s.labels) np += l;
    if (np == 0) throw std::domain_error("undefined metric: auprc needs at least one positive");
    const size_t n = s.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
        return a < b;
    });
    double ap = 0.0, prev_recall = 0.0;
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[idx[j + 1]] == s.scores[idx[i]]) ++j;
        for (size_t k = i; k <= j; ++k) (s.labels[idx[k]] ? tp : fp)++;
        const double recall = static_cast<double>(tp) / static_cast<double>(np);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

// --- normal quantiles -------------------------------------------------------

// Wichura's AS241 rational approximation (PPND16 constants).
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("inverse_normal_cdf: p " + std::to_string(p) + " outside (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                                 6.7265770927008700853e4) *
                                    r +
                                4.5921953931549871457e4) *
                                   r +
                               1.3731693765509461125e4) *
                                  r +
                              1.9715909503065514427e3) *
                                 r +
                             1.3314166789178437745e2) *
                                r +
                            3.3871328727963666080e0);
        const double den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                                 3.9307895800092710610e4) *
                                    r +
                                2.1213794301586595867e4) *
                                   r +
                               5.3941960214247511077e3) *
                                  r +
                              6.8718700749205790830e2) *
                                 r +
                             4.2313330701600911252e1) *
                                r +
                            1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        const double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                                 2.41780725177450611770e-1) *
                                    r +
                                1.27045825245236838258e0) *
                                   r +
                               3.64784832476320460504e0) *
                                  r +
                              5.76949722146069140550e0) *
                                 r +
                             4.63033784615654529590e0) *
                                r +
                            1.42343711074968357734e0);
        const double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                                 1.51986665636164571966e-2) *
                                    r +
                                1.48103976427480074590e-1) *
                                   r +
                               6.89767334985100004550e-1) *
                                  r +
                              1.67638483018380384940e0) *
                                 r +
                             2.05319162663775882187e0) *
                                r +
                            1.0);
        x = num / den;
    } else {
        r -= 5.0;
        const double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                                 1.24266094738807843860e-3) *
                                    r +
                                2.65321895265761230930e-2) *
                                   r +
                               2.96560571828504891230e-1) *
                                  r +
                              1.78482653991729133580e0) *
                                 r +
                             5.46378491116411436990e0) *
                                r +
                            6.65790464350110377720e0);
        const double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                                 1.84631831751005468180e-5) *
                                    r +
                                7.86869131145613259100e-4) *
                                   r +
                               1.48753612908506148525e-2) *
                                  r +
                              1.36929880922735805310e-1) *
                                 r +
                             5.99832206555887937690e-1) *
                                r +
                            1.0);
        x = num / den;
    }
    return (q < 0.0) ? -x : x;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

// type-7 empirical quantile (linear interpolation) of a pre-sorted vector
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile: empty sample");
    const double qc = std::clamp(q, 0.0, 1.0);
    const double h = qc * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// --- BCa bootstrap ----------------------------------------------------------

struct BcaOptions {
    int64_t n_bootstrap = 10000;
    double alpha = 0.05;
    uint64_t seed = 0;
    // test hooks: forcing both to 0 reduces the interval to the percentile
    // interval by construction
    std::optional<double> force_z0;
    std::optional<double> force_accel;
};

struct MetricReport {
    std::string metric;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int64_t n_bootstrap = 0;
    int64_t n_discarded = 0;  // single-class resamples, dropped from the replicate set
    uint64_t seed = 0;
    double z0 = 0.0;
    double accel = 0.0;
    bool accel_degenerate = false;  // zero jackknife denominator, a forced to 0
};

using StatisticFn = std::function<double(const ScoredSet&)>;

namespace detail {

// resampling units: indices grouped by group id when present, else singletons;
// first-appearance order
inline std::vector<std::vector<size_t>> resample_units(const ScoredSet& s) {
    std::vector<std::vector<size_t>> units;
    if (s.groups.empty()) {
        units.reserve(s.size());
        for (size_t i = 0; i < s.size(); ++i) units.push_back({i});
        return units;
    }
    std::vector<std::string> seen;
    for (size_t i = 0; i < s.size(); ++i) {
        size_t u = 0;
        for (; u < seen.size(); ++u)
            if (seen[u] == s.groups[i]) break;
        if (u == seen.size()) {
            seen.push_back(s.groups[i]);
            units.emplace_back();
        }
        units[u].push_back(i);
    }
    return units;
}

inline ScoredSet gather(const ScoredSet& s, const std::vector<size_t>& take) {
    ScoredSet out;
    out.scores.reserve(take.size());
    out.labels.reserve(take.size());
    if (!s.groups.empty()) out.groups.reserve(take.size());
    for (size_t i : take) {
        out.scores.push_back(s.scores[i]);
        out.labels.push_back(s.labels[i]);
        if (!s.groups.empty()) out.groups.push_back(s.groups[i]);
    }
    return out;
}

}  // namespace detail

inline MetricReport bca_interval(const ScoredSet& s, const std::string& metric_name, const StatisticFn& stat,
                                 const BcaOptions& opt) {
    s.validate();
    if (opt.n_bootstrap < 1) throw std::invalid_argument("bca: n_bootstrap must be positive");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0))
        throw std::invalid_argument("bca: alpha " + std::to_string(opt.alpha) + " outside (0,1)");

    MetricReport rep;
    rep.metric = metric_name;
    rep.n_bootstrap = opt.n_bootstrap;
    rep.seed = opt.seed;
    rep.point = stat(s);

    const std::vector<std::vector<size_t>> units = detail::resample_units(s);
    const size_t nu = units.size();

    // replicate r draws from its own seed-derived stream, so results do not
    // depend on evaluation order
    Rng root(opt.seed);
    std::vector<double> thetas;
    thetas.reserve(static_cast<size_t>(opt.n_bootstrap));
    std::vector<size_t> take;
    for (int64_t r = 0; r < opt.n_bootstrap; ++r) {
        Rng rr = root.derive(static_cast<uint64_t>(r));
        take.clear();
        for (size_t k = 0; k < nu; ++k) {
            const std::vector<size_t>& u = units[rr.below(nu)];
            take.insert(take.end(), u.begin(), u.end());
        }
        try {
            thetas.push_back(stat(detail::gather(s, take)));
        } catch (const std::domain_error&) {
            ++rep.n_discarded;
        }
    }
    if (thetas.empty())
        throw std::runtime_error("bca: statistic undefined on all " + std::to_string(opt.n_bootstrap) +
                                 " replicates");
    const double nv = static_cast<double>(thetas.size());

    if (opt.force_z0) {
        rep.z0 = *opt.force_z0;
    } else {
        int64_t below = 0;
        for (double t : thetas)
            if (t < rep.point) ++below;
        double p0 = static_cast<double>(below) / nv;
        // clamp away from 0/1 where the normal quantile is unbounded
        p0 = std::clamp(p0, 0.5 / nv, 1.0 - 0.5 / nv);
        rep.z0 = inverse_normal_cdf(p0);
    }

    if (opt.force_accel) {
        rep.accel = *opt.force_accel;
    } else {
        std::vector<double> jack;
        jack.reserve(nu);
        bool jack_ok = nu >= 2;
        for (size_t leave = 0; leave < nu && jack_ok; ++leave) {
            take.clear();
            for (size_t k = 0; k < nu; ++k) {
                if (k == leave) continue;
                take.insert(take.end(), units[k].begin(), units[k].end());
            }
            try {
                jack.push_back(stat(detail::gather(s, take)));
            } catch (const std::domain_error&) {
                jack_ok = false;
            }
        }
        if (!jack_ok) {
            rep.accel = 0.0;
            rep.accel_degenerate = true;
        } else {
            double mean = 0.0;
            for (double j : jack) mean += j;
            mean /= static_cast<double>(jack.size());
            double s2 = 0.0, s3 = 0.0;
            for (double j : jack) {
                const double d = mean - j;
                s2 += d * d;
                s3 += d * d * d;
            }
            if (s2 <= 0.0) {
                rep.accel = 0.0;
                rep.accel_degenerate = true;
            } else {
                rep.accel = s3 / (6.0 * std::pow(s2, 1.5));
            }
        }
    }

    double a_lo, a_hi;
    if (rep.z0 == 0.0 && rep.accel == 0.0) {
        // null adjustment: Phi(z0 + z_q) is exactly q, so take the levels
        // directly instead of round-tripping through the approximations
        a_lo = opt.alpha / 2.0;
        a_hi = 1.0 - opt.alpha / 2.0;
    } else {
        const double z_lo = inverse_normal_cdf(opt.alpha / 2.0);
        const double z_hi = inverse_normal_cdf(1.0 - opt.alpha / 2.0);
        const double w_lo = rep.z0 + (rep.z0 + z_lo) / (1.0 - rep.accel * (rep.z0 + z_lo));
        const double w_hi = rep.z0 + (rep.z0 + z_hi) / (1.0 - rep.accel * (rep.z0 + z_hi));
        a_lo = normal_cdf(w_lo);
        a_hi = normal_cdf(w_hi);
    }

    std::sort(thetas.begin(), thetas.end());
    const double e0 = quantile_sorted(thetas, a_lo);
    const double e1 = quantile_sorted(thetas, a_hi);
    rep.ci_low = std::min(e0, e1);
    rep.ci_high = std::max(e0, e1);
    return rep;
}

inline MetricReport percentile_interval(const ScoredSet& s, const std::string& metric_name,
                                        const StatisticFn& stat, BcaOptions opt) {
    opt.force_z0 = 0.0;
    opt.force_accel = 0.0;
    return bca_interval(s, metric_name, stat, opt);
}

}  // namespace tfusion
