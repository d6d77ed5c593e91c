#pragma once

/**
 * Strictly convex domains described by a level set, and the ray geometry on
 * them that every other module consumes.
 *
 * A domain is Omega = { xi < 0 } with boundary { xi = 0 }, where xi supplies
 * analytic derivatives up to third order and a uniform convexity constant
 * c_xi with  z . Hess(xi) . z >= c_xi |z|^2  everywhere on the closure.
 *
 * The central operation is the backward exit time
 *    t_b(x,v) = inf{ s > 0 : x - s v  outside Omega },
 * with footpoint x_b = x - t_b v. Along the backward ray, g(s) = xi(x - s v)
 * is strictly convex, so g has at most two roots; the solver first locates
 * the minimum of g (Newton on the monotone g'), then the unique root beyond
 * it (safeguarded Newton-bisection). Strict convexity makes both phases
 * bracket-safe.
 *
 * Boundary states are classified by the sign of n(x).v into incoming /
 * outgoing / grazing, plus the "almost grazing or fast" band of the outgoing
 * half (n.v < eps or |v| > 1/eps) that the singularity scans sample.
 */

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kintrace/error.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

enum class DomainTag { Sphere, Ellipsoid, Disk2D, QuarticBall, Custom };

inline const char* to_string(DomainTag t) {
    switch (t) {
        case DomainTag::Sphere: return "sphere";
        case DomainTag::Ellipsoid: return "ellipsoid";
        case DomainTag::Disk2D: return "disk";
        case DomainTag::QuarticBall: return "quartic";
        case DomainTag::Custom: return "custom";
    }
    return "?";
}

template <std::size_t N>
struct ConvexDomain {
    using VecN = Vec<N>;
    using MatN = Mat<N, N>;
    using TenN = Ten3<N>;

    std::function<double(const VecN&)> xi;
    std::function<VecN(const VecN&)> grad_xi;
    std::function<MatN(const VecN&)> hess_xi;
    std::function<TenN(const VecN&)> third_xi;

    double c_xi = 0.0;      // uniform convexity constant
    double diameter = 0.0;  // sup |x - y| over the closure (an upper bound is fine)
    DomainTag tag = DomainTag::Custom;
    std::string name = "custom";

    // |xi| <= boundary_band * scale() counts as "on the boundary".
    double boundary_band = 1e-10;
    // width of the |xi| band inside which a nonzero gradient is required
    double gradient_band = 0.1;

    double scale() const { return diameter; }
    double boundary_tol() const { return boundary_band * scale(); }

    bool contains(const VecN& x, double slack = 0.0) const { return xi(x) <= slack; }
    bool on_boundary(const VecN& x) const { return std::fabs(xi(x)) <= boundary_tol(); }

    // --- builtins -----------------------------------------------------------

    // xi = |x|^2 - R^2 in any dimension.
    static ConvexDomain ball_like(double radius) {
        if (radius <= 0.0) throw ParameterViolation("ball domain: radius must be > 0");
        ConvexDomain d;
        const double r2 = radius * radius;
        d.xi = [r2](const VecN& x) { return norm2(x) - r2; };
        d.grad_xi = [](const VecN& x) { return 2.0 * x; };
        d.hess_xi = [](const VecN&) {
            MatN h;
            for (std::size_t i = 0; i < N; ++i) h(i, i) = 2.0;
            return h;
        };
        d.third_xi = [](const VecN&) { return TenN{}; };
        d.c_xi = 2.0;
        d.diameter = 2.0 * radius;
        return d;
    }

    static ConvexDomain sphere(double radius) {
        static_assert(N == 3);
        ConvexDomain d = ball_like(radius);
        d.tag = DomainTag::Sphere;
        d.name = "sphere";
        return d;
    }

    static ConvexDomain disk(double radius) {
        static_assert(N == 2);
        ConvexDomain d = ball_like(radius);
        d.tag = DomainTag::Disk2D;
        d.name = "disk";
        return d;
    }

    static ConvexDomain ellipsoid(double a, double b, double c) {
        static_assert(N == 3);
        ConvexDomain d;
        const Vec3 inv2{1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c)};
        d.xi = [inv2](const VecN& x) {
            return x[0] * x[0] * inv2[0] + x[1] * x[1] * inv2[1] + x[2] * x[2] * inv2[2] - 1.0;
        };
        d.grad_xi = [inv2](const VecN& x) {
            return VecN{2.0 * x[0] * inv2[0], 2.0 * x[1] * inv2[1], 2.0 * x[2] * inv2[2]};
        };
        d.hess_xi = [inv2](const VecN&) {
            MatN h;
            for (std::size_t i = 0; i < N; ++i) h(i, i) = 2.0 * inv2[i];
            return h;
        };
        d.third_xi = [](const VecN&) { return TenN{}; };
        const double m = std::max(a, std::max(b, c));
        d.c_xi = 2.0 / (m * m);
        d.diameter = 2.0 * m;
        d.tag = DomainTag::Ellipsoid;
        d.name = "ellipsoid";
        return d;
    }

    // xi = |x|^2 + lambda * sum_i x_i^4 - 1 with lambda >= 0. Hess >= 2 Id;
    // the cubic term is the only source of a nonzero third derivative among
    // the builtins.
    static ConvexDomain quartic_ball(double lambda) {
        static_assert(N == 3);
        if (lambda < 0.0) throw ParameterViolation("quartic_ball: lambda must be >= 0");
        ConvexDomain d;
        d.xi = [lambda](const VecN& x) {
            double s = -1.0;
            for (std::size_t i = 0; i < N; ++i) s += x[i] * x[i] + lambda * x[i] * x[i] * x[i] * x[i];
            return s;
        };
        d.grad_xi = [lambda](const VecN& x) {
            VecN g;
            for (std::size_t i = 0; i < N; ++i) g[i] = 2.0 * x[i] + 4.0 * lambda * x[i] * x[i] * x[i];
            return g;
        };
        d.hess_xi = [lambda](const VecN& x) {
            MatN h;
            for (std::size_t i = 0; i < N; ++i) h(i, i) = 2.0 + 12.0 * lambda * x[i] * x[i];
            return h;
        };
        d.third_xi = [lambda](const VecN& x) {
            TenN t;
            for (std::size_t i = 0; i < N; ++i) t(i, i, i) = 24.0 * lambda * x[i];
            return t;
        };
        d.c_xi = 2.0;
        d.diameter = 2.0;  // contained in the unit ball for lambda >= 0
        d.tag = DomainTag::QuarticBall;
        d.name = "quartic";
        return d;
    }

    // Custom domains supply their own analytic derivatives (no automatic
    // differentiation here); validate() cross-checks them by finite
    // differences.
    static ConvexDomain custom(std::function<double(const VecN&)> xi_fn,
                               std::function<VecN(const VecN&)> grad_fn,
                               std::function<MatN(const VecN&)> hess_fn,
                               std::function<TenN(const VecN&)> third_fn,
                               double c_xi_value, double diameter_value,
                               std::string label = "custom") {
        ConvexDomain d;
        d.xi = std::move(xi_fn);
        d.grad_xi = std::move(grad_fn);
        d.hess_xi = std::move(hess_fn);
        d.third_xi = std::move(third_fn);
        d.c_xi = c_xi_value;
        d.diameter = diameter_value;
        d.name = std::move(label);
        return d;
    }

    // Rejection-sample a point of the closed domain from the bounding box.
    VecN sample_interior(CounterRng& rng, double xi_slack = 0.0) const {
        const double half = 0.5 * diameter;
        for (int tries = 0; tries < 100000; ++tries) {
            VecN x;
            for (std::size_t i = 0; i < N; ++i) x[i] = rng.uniform(-half, half);
            if (xi(x) <= xi_slack) return x;
        }
        throw KintraceError("sample_interior: rejection sampling failed");
    }

    // Project onto { xi = 0 } along the ray from the origin (the builtins are
    // star-shaped around it), then polish with a Newton step along the
    // gradient. Requires xi(0) < 0 and x != 0.
    VecN project_to_boundary(VecN x) const {
        const double xn = norm(x);
        if (xn < 1e-14) throw DegenerateGradient("project_to_boundary: x at the origin");
        if (xi(VecN{}) >= 0.0)
            throw ParameterViolation("project_to_boundary: origin must be interior");
        const VecN dir = x / xn;
        double lo = 0.0, hi = diameter;
        for (int i = 0; i < 100; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (xi(mid * dir) < 0.0) lo = mid; else hi = mid;
        }
        x = (0.5 * (lo + hi)) * dir;
        for (int i = 0; i < 4; ++i) {
            const double f = xi(x);
            const VecN g = grad_xi(x);
            const double gg = norm2(g);
            if (gg < 1e-24) throw DegenerateGradient("project_to_boundary: |grad xi| ~ 0");
            x -= (f / gg) * g;
        }
        return x;
    }

    // --- construction-time checks -------------------------------------------

    struct ValidationReport {
        double worst_convexity_ratio = 1e300;  // min of zHz / (c_xi |z|^2) over samples
        double worst_derivative_error = 0.0;   // max relative FD mismatch
        std::vector<VecN> gradient_band_violations;
        bool ok() const {
            return worst_convexity_ratio >= 1.0 - 1e-9 && worst_derivative_error < 1e-4 &&
                   gradient_band_violations.empty();
        }
    };

    // Sample the closure: convexity floor, nonvanishing gradient inside the
    // |xi| band, FD cross-check of grad/hess/third.
    ValidationReport validate(int samples = 200, std::uint64_t seed = 2) const {
        ValidationReport rep;
        CounterRng rng(seed, CounterRng::stream_id(0xD011A1u));
        const double h = 1e-5 * scale();
        for (int k = 0; k < samples; ++k) {
            const VecN x = sample_interior(rng);
            const VecN z = rng.template unit_vec<N>();

            const double zhz = quad_form(hess_xi(x), z);
            rep.worst_convexity_ratio = std::min(rep.worst_convexity_ratio, zhz / c_xi);

            if (std::fabs(xi(x)) < gradient_band * scale() && norm(grad_xi(x)) <= 1e-12)
                rep.gradient_band_violations.push_back(x);

            // directional FD checks: grad vs xi, hess vs grad, third vs hess
            VecN xp = x, xm = x;
            for (std::size_t i = 0; i < N; ++i) { xp[i] += h * z[i]; xm[i] -= h * z[i]; }
            const double d1 = (xi(xp) - xi(xm)) / (2.0 * h);
            const double a1 = dot(grad_xi(x), z);
            rep.worst_derivative_error = std::max(
                rep.worst_derivative_error, std::fabs(d1 - a1) / std::max(1.0, std::fabs(a1)));

            const VecN g2 = (grad_xi(xp) - grad_xi(xm)) / (2.0 * h);
            const VecN a2 = hess_xi(x) * z;
            rep.worst_derivative_error = std::max(
                rep.worst_derivative_error, norm(g2 - a2) / std::max(1.0, norm(a2)));

            const double h3 = (quad_form(hess_xi(xp), z) - quad_form(hess_xi(xm), z)) / (2.0 * h);
            const double a3 = contract3(third_xi(x), z);
            rep.worst_derivative_error = std::max(
                rep.worst_derivative_error, std::fabs(h3 - a3) / std::max(1.0, std::fabs(a3)));
        }
        return rep;
    }
};

// A point of phase space at time t. <v> = sqrt(1+|v|^2) >= 1 by construction.
template <std::size_t N>
struct PhaseState {
    double t = 0.0;
    Vec<N> x{};
    Vec<N> v{};
    double vbracket() const { return bracket(v); }
};

template <std::size_t N>
struct ExitData {
    double t_b = 0.0;              // backward exit time (first positive root)
    Vec<N> x_b{};                  // footpoint x - t_b v
    Vec<N> normal_at_exit{};       // unit outward normal at x_b
    double incidence = 0.0;        // n(x_b) . v, <= 0 up to tolerance
};

enum class GammaRegion { Incoming, Outgoing, Grazing, NearGrazingOrFast };

inline const char* to_string(GammaRegion g) {
    switch (g) {
        case GammaRegion::Incoming: return "incoming";
        case GammaRegion::Outgoing: return "outgoing";
        case GammaRegion::Grazing: return "grazing";
        case GammaRegion::NearGrazingOrFast: return "near_grazing_or_fast";
    }
    return "?";
}

// n(x) = grad xi / |grad xi|.
template <std::size_t N>
inline Vec<N> outward_normal(const ConvexDomain<N>& dom, const Vec<N>& x) {
    const Vec<N> g = dom.grad_xi(x);
    const double gn = norm(g);
    if (gn <= 1e-12) throw DegenerateGradient("outward_normal: |grad xi| <= 1e-12");
    return g / gn;
}

namespace detail {

// Root of the strictly convex g(s) = xi(x - s v) inside a bracket with
// g(lo) <= 0 < g(hi) and exactly one sign change: safeguarded Newton that
// falls back to bisection whenever the Newton step leaves the bracket.
template <class G, class DG>
inline double convex_root(G&& g, DG&& dg, double lo, double hi, double tol_f, double tol_s) {
    double s = hi;
    double f = g(s);
    for (int it = 0; it < 120; ++it) {
        if (std::fabs(f) <= tol_f) return s;
        if (f > 0.0) hi = s; else lo = s;
        if (hi - lo <= tol_s) return hi;  // the root lies at the upper face of the bracket
        const double d = dg(s);
        double snew = (d != 0.0) ? s - f / d : 0.5 * (lo + hi);
        if (!(snew > lo && snew < hi)) snew = 0.5 * (lo + hi);
        s = snew;
        f = g(s);
    }
    return s;
}

// Bracket start for boundary states whose backward ray re-enters: a point
// strictly inside the chord, a small fraction of the quadratic-model chord
// time 2 (v.grad xi) / (v.Hess xi.v).
template <std::size_t N>
inline double chord_seed(const ConvexDomain<N>& dom, const Vec<N>& x, const Vec<N>& v) {
    const double num = dot(v, dom.grad_xi(x));
    const double den = quad_form(dom.hess_xi(x), v);
    if (den <= 0.0) return 0.0;
    return 2.0 * num / den;
}

}  // namespace detail

/**
 * Backward exit time and footpoint of the ray s -> x - s v.
 *
 * Preconditions: x in the closure, |v| > 0. A boundary state whose backward
 * ray leaves immediately (n.v <= grazing tolerance) exits with t_b = 0.
 * Throws NoExit for |v| = 0: a stationary state never exits.
 */
template <std::size_t N>
inline ExitData<N> backward_exit_time(const ConvexDomain<N>& dom, const Vec<N>& x,
                                      const Vec<N>& v) {
    const double vnorm = norm(v);
    if (vnorm == 0.0) throw NoExit("backward_exit_time: |v| = 0");
    const double xi0 = dom.xi(x);
    if (xi0 > dom.boundary_tol())
        throw OutsideDomain("backward_exit_time: x outside the closed domain");

    const auto g = [&](double s) { return dom.xi(x - s * v); };
    const auto dg = [&](double s) { return -dot(v, dom.grad_xi(x - s * v)); };

    ExitData<N> out;
    const double tol_f = 1e-14 * dom.scale();
    const double s_hi0 = 1.02 * dom.diameter / vnorm + 1e-12 * dom.scale() / vnorm;
    const double tol_s = 1e-15 * s_hi0;

    double lo = 0.0;
    if (std::fabs(xi0) <= dom.boundary_tol()) {
        const Vec<N> nx = outward_normal(dom, x);
        const double nv = dot(nx, v);
        if (nv <= 1e-12 * vnorm) {  // immediate exit (incoming or grazing start)
            out.t_b = 0.0;
            out.x_b = x;
            out.normal_at_exit = nx;
            out.incidence = nv;
            return out;
        }
        // Re-entering: skip the root at s ~ 0 by starting strictly inside the
        // chord. g < 0 on the whole open chord, so any interior seed works.
        const double model = detail::chord_seed(dom, x, v);
        double seed = 0.0;
        for (double frac : {1e-1, 1e-3, 1e-6}) {
            if (model * frac > 0.0 && g(model * frac) < 0.0) {
                seed = model * frac;
                break;
            }
        }
        if (seed <= 0.0) {
            // The dip of g along the chord is below double resolution of xi:
            // fall back to the quadratic chord model, which is second-order
            // accurate in the (tiny) chord time.
            out.t_b = std::max(model, 0.0);
            out.x_b = x - out.t_b * v;
            out.normal_at_exit = outward_normal(dom, out.x_b);
            out.incidence = dot(out.normal_at_exit, v);
            return out;
        }
        lo = seed;
    }

    double hi = s_hi0;
    if (g(hi) <= 0.0) {
        hi = 2.0 * s_hi0;  // cannot happen for s|v| > diameter; numerical safety only
        if (g(hi) <= 0.0) throw NoExit("backward_exit_time: no sign change found");
    }
    out.t_b = detail::convex_root(g, dg, lo, hi, tol_f, tol_s);
    out.x_b = x - out.t_b * v;
    out.normal_at_exit = outward_normal(dom, out.x_b);
    out.incidence = dot(out.normal_at_exit, v);
    return out;
}

// Independent pure-bisection solve over the same bracket; root cross-checks.
template <std::size_t N>
inline double backward_exit_time_bisect(const ConvexDomain<N>& dom, const Vec<N>& x,
                                        const Vec<N>& v, double tol = 1e-14) {
    const double vnorm = norm(v);
    if (vnorm == 0.0) throw NoExit("backward_exit_time_bisect: |v| = 0");
    const auto g = [&](double s) { return dom.xi(x - s * v); };
    double lo = 0.0;
    const double s_hi0 = 1.02 * dom.diameter / vnorm + 1e-12 * dom.scale() / vnorm;
    if (std::fabs(dom.xi(x)) <= dom.boundary_tol()) {
        const double nv = dot(outward_normal(dom, x), v);
        if (nv <= 1e-12 * vnorm) return 0.0;
        const double model = detail::chord_seed(dom, x, v);
        double seed = 0.0;
        for (double frac : {1e-1, 1e-3, 1e-6}) {
            if (model * frac > 0.0 && g(model * frac) < 0.0) {
                seed = model * frac;
                break;
            }
        }
        if (seed <= 0.0) return std::max(model, 0.0);
        lo = seed;
    }
    double hi = s_hi0;
    if (g(hi) <= 0.0) hi = 2.0 * s_hi0;
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (lo + hi);
        if (g(m) > 0.0) hi = m; else lo = m;
        if (hi - lo < tol * s_hi0) break;
    }
    return 0.5 * (lo + hi);
}

/**
 * Classify a boundary phase point by the sign of n(x).v. The grazing band is
 * |n.v| <= 1e-12; the outgoing half further splits off the almost-grazing or
 * fast band (n.v < eps or |v| > 1/eps).
 */
template <std::size_t N>
inline GammaRegion classify(const ConvexDomain<N>& dom, const Vec<N>& x, const Vec<N>& v,
                            double eps) {
    if (std::fabs(dom.xi(x)) > dom.boundary_tol())
        throw NotOnBoundary("classify: |xi(x)| above boundary tolerance");
    const double nv = dot(outward_normal(dom, x), v);
    if (std::fabs(nv) <= 1e-12) return GammaRegion::Grazing;
    if (nv < 0.0) return GammaRegion::Incoming;
    if (nv < eps || norm(v) > 1.0 / eps) return GammaRegion::NearGrazingOrFast;
    return GammaRegion::Outgoing;
}

}  // namespace kintrace
