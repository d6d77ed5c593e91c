#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <vector>

#include "kintrace/error.hpp"

namespace kintrace {

struct QuadRule {
    std::vector<double> x;  // nodes
    std::vector<double> w;  // weights
};

namespace detail {

// Orthonormal Legendre on [-1,1] (unit weight): value and derivative at x.
inline void legendre_eval(int n, double x, double& pn, double& dpn, double* all = nullptr) {
    double p0 = std::sqrt(0.5), p1 = std::sqrt(1.5) * x;
    if (all) all[0] = p0;
    if (n == 0) { pn = p0; dpn = 0.0; return; }
    if (all && n >= 1) all[1] = p1;
    double d0 = 0.0, d1 = std::sqrt(1.5);
    for (int k = 1; k < n; ++k) {
        // x p_k = a_{k+1} p_{k+1} + a_k p_{k-1},  a_k = k / sqrt(4k^2 - 1)
        const double ak1 = (k + 1.0) / std::sqrt(4.0 * (k + 1.0) * (k + 1.0) - 1.0);
        const double ak = k / std::sqrt(4.0 * k * k - 1.0);
        const double p2 = (x * p1 - ak * p0) / ak1;
        const double d2 = (p1 + x * d1 - ak * d0) / ak1;
        p0 = p1; p1 = p2; d0 = d1; d1 = d2;
        if (all) all[k + 1] = p1;
    }
    pn = p1;
    dpn = d1;
}

// Orthonormal Hermite with weight e^{-x^2}: value and derivative at x,
// using d/dx pi_n = sqrt(2n) pi_{n-1}.
inline void hermite_eval(int n, double x, double& pn, double& dpn, double* all = nullptr) {
    const double pi4 = 0.7511255444649425;  // pi^{-1/4}
    double p0 = pi4, p1 = std::sqrt(2.0) * x * pi4;
    if (all) all[0] = p0;
    if (n == 0) { pn = p0; dpn = 0.0; return; }
    if (all) all[1] = p1;
    for (int k = 1; k < n; ++k) {
        const double p2 = std::sqrt(2.0 / (k + 1.0)) * x * p1 - std::sqrt(k / (k + 1.0)) * p0;
        p0 = p1; p1 = p2;
        if (all) all[k + 1] = p1;
    }
    pn = p1;
    dpn = std::sqrt(2.0 * n) * p0;
}

// Bracket sign changes on a fine grid, polish each root by Newton.
// Weights via the Christoffel identity w_i = 1 / sum_{k<n} p_k(x_i)^2.
template <class Eval>
inline QuadRule orthopoly_rule(int n, double lo, double hi, Eval eval) {
    QuadRule r;
    const int grid = 64 * n + 64;
    double pn_prev, dp_unused;
    eval(n, lo, pn_prev, dp_unused, nullptr);
    double x_prev = lo;
    std::vector<double> table(n + 1);
    for (int g = 1; g <= grid && static_cast<int>(r.x.size()) < n; ++g) {
        const double x = lo + (hi - lo) * g / grid;
        double pn, dpn;
        eval(n, x, pn, dpn, nullptr);
        if ((pn_prev < 0.0) != (pn < 0.0)) {
            double root = 0.5 * (x_prev + x);
            for (int it = 0; it < 60; ++it) {
                double f, df;
                eval(n, root, f, df, nullptr);
                const double step = f / df;
                root -= step;
                if (std::fabs(step) < 1e-15 * (1.0 + std::fabs(root))) break;
            }
            double f, df;
            eval(n, root, f, df, table.data());
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += table[k] * table[k];
            r.x.push_back(root);
            r.w.push_back(1.0 / s);
        }
        pn_prev = pn;
        x_prev = x;
    }
    if (static_cast<int>(r.x.size()) != n)
        throw QuadratureDivergence("orthopoly_rule: failed to isolate all nodes");
    return r;
}

}  // namespace detail

// Gauss-Legendre rule on [-1,1], cached per order.
inline const QuadRule& gauss_legendre(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
        it = cache.emplace(n, detail::orthopoly_rule(n, -1.0, 1.0,
            [](int m, double x, double& p, double& dp, double* all) {
                detail::legendre_eval(m, x, p, dp, all);
            })).first;
    }
    return it->second;
}

// Gauss-Hermite rule for weight e^{-x^2} on R, cached per order.
inline const QuadRule& gauss_hermite(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
        const double span = std::sqrt(2.0 * n + 1.0) + 2.0;
        it = cache.emplace(n, detail::orthopoly_rule(n, -span, span,
            [](int m, double x, double& p, double& dp, double* all) {
                detail::hermite_eval(m, x, p, dp, all);
            })).first;
    }
    return it->second;
}

// Fixed Gauss-Legendre integral over [a,b].
template <class F>
inline double integrate_gl(F&& f, double a, double b, int order) {
    const QuadRule& r = gauss_legendre(order);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * f(mid + half * r.x[i]);
    return s * half;
}

namespace detail {

// Gauss-Kronrod 15(7) pair (QUADPACK dqk15 constants).
constexpr double kr15_x[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
constexpr double kr15_w[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
constexpr double g7_w[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

template <class F>
inline void gk15(F& f, double a, double b, double& kronrod, double& err) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double fk[15];
    for (int i = 0; i < 7; ++i) {
        fk[i] = f(mid - half * kr15_x[i]);
        fk[14 - i] = f(mid + half * kr15_x[i]);
    }
    fk[7] = f(mid);
    double k = kr15_w[7] * fk[7];
    for (int i = 0; i < 7; ++i) k += kr15_w[i] * (fk[i] + fk[14 - i]);
    double g = g7_w[3] * fk[7];
    for (int i = 0; i < 3; ++i) g += g7_w[i] * (fk[2 * i + 1] + fk[13 - 2 * i]);
    kronrod = k * half;
    err = std::fabs((k - g) * half);
}

}  // namespace detail

// Adaptive 1D integration over [a,b]. `breaks` are interior points where the
// integrand is peaked or non-smooth; the interval is pre-split there.
// Throws QuadratureDivergence if the error target cannot be met.
template <class F>
inline double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-8,
                                 const std::vector<double>& breaks = {},
                                 int max_intervals = 20000, double abs_floor = 0.0) {
    struct Seg { double a, b, val, err; };
    std::vector<Seg> segs;
    std::vector<double> pts;
    pts.push_back(a);
    for (double p : breaks)
        if (p > a && p < b) pts.push_back(p);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1] <= pts[i]) continue;
        Seg s{pts[i], pts[i + 1], 0.0, 0.0};
        detail::gk15(f, s.a, s.b, s.val, s.err);
        segs.push_back(s);
    }
    double total = 0.0, toterr = 0.0;
    for (const Seg& s : segs) { total += s.val; toterr += s.err; }
    int rounds = 0;
    while (toterr > rel_tol * std::max(std::fabs(total), abs_floor) &&
           static_cast<int>(segs.size()) < max_intervals) {
        // split the worst segment
        std::size_t worst = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            if (segs[i].err > segs[worst].err) worst = i;
        Seg s = segs[worst];
        const double m = 0.5 * (s.a + s.b);
        if (m <= s.a || m >= s.b) break;  // interval exhausted at double precision
        Seg l{s.a, m, 0.0, 0.0}, r{m, s.b, 0.0, 0.0};
        detail::gk15(f, l.a, l.b, l.val, l.err);
        detail::gk15(f, r.a, r.b, r.val, r.err);
        segs[worst] = l;
        segs.push_back(r);
        total = toterr = 0.0;
        for (const Seg& q : segs) { total += q.val; toterr += q.err; }
        ++rounds;
    }
    if (toterr > 100.0 * rel_tol * std::max(std::fabs(total), abs_floor) &&
        toterr > abs_floor)
        throw QuadratureDivergence("integrate_adaptive: refinement stalled");
    return total;
}

}  // namespace kintrace
