#pragma once

/**
 * Non-local-to-local velocity integrals along trajectories.
 *
 * The basic object is the grazing u-integral at a fixed interior point X,
 *
 *   I(X, v) = int_{R^3} e^{-th |v-u|^2} / ( |v-u|^{2-kappa} alpha(X,u)^beta ) du,
 *
 * which concentrates on the plane u.n(X) = 0 when X is close to the boundary
 * (alpha(X,u) = |grad xi|^2 u_n^2 + 2|xi| u.Hess.u there) and obeys
 * I ~ 1 / ( |v|^{2 beta - 1} |xi(X)|^{beta - 1/2} ) for 1/2 < beta < 3/2.
 *
 * Quadrature runs in the frame (u_n, u_tau): an adaptive 1D integral in u_n
 * per tangential node (break points at the alpha ridge and the kernel peak),
 * and a two-chart tangential integral -- a smooth partition of unity
 * separating the alpha spike at u_tau = 0 from the kernel peak at
 * u_tau = v_tau -- each chart in radius-graded polar coordinates.
 *
 * The dynamical estimate integrates I along a deterministic backward
 * trajectory with weight e^{-l <v> (t-s)}. Near each bounce time the
 * integrand carries an integrable |s - t^l|^{1/2 - beta} endpoint
 * singularity, so every segment is integrated with a square-root grading
 * toward both endpoints. Multiplying by alpha(x,v)^{beta-1/2} <v> gives a
 * ratio that stays bounded on grazing scans -- the half-power gain that the
 * trajectory integration buys.
 */

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "kintrace/error.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/jacobian.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/quadrature.hpp"
#include "kintrace/trajectory.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

struct NonlocalParams {
    double beta = 1.0;     // in (1/2, 3/2); the u-variant needs (1/2, 1)
    double l_rate = 20.0;  // exponential time weight; calibrate_nonlocal_rate fits it
    double theta = 0.5;    // Gaussian velocity localization
    double kappa = 1.0;    // hard-potential exponent in (0, 1]
    double r_moment = 0.0;
    std::function<double(double)> Z;  // nonnegative time weight; default Z == 1

    double z_eval(double s) const { return Z ? Z(s) : 1.0; }
    void check(bool u_variant = false) const {
        if (!(beta > 0.5 && beta < 1.5))
            throw ParameterViolation("NonlocalParams: need 1/2 < beta < 3/2");
        if (u_variant && !(beta < 1.0))
            throw ParameterViolation("NonlocalParams: the |v|/|u| variant needs beta < 1");
        if (!(kappa > 0.0 && kappa <= 1.0))
            throw ParameterViolation("NonlocalParams: need 0 < kappa <= 1");
    }
};

struct NonlocalQuadConfig {
    // u-integral
    double inner_tol = 1e-4;
    int inner_max_intervals = 300;
    int sigma_order = 16;     // graded polar radius nodes per chart
    int phi_order = 20;       // azimuth nodes per chart
    int max_outer_level = 2;  // refinement doublings of the outer orders
    double outer_tol = 2e-3;
    // trajectory integral
    int time_order = 5;            // graded nodes per segment half
    double time_cutoff = 1e-8;     // drop segments once e^{-l<v>(t-s)} falls below

    // cheaper preset for trajectory integrals, where thousands of u-integrals
    // are summed and a uniform quadrature bias cancels in ratio scans
    static NonlocalQuadConfig fast() {
        NonlocalQuadConfig c;
        c.inner_tol = 2e-3;
        c.inner_max_intervals = 60;
        c.sigma_order = 8;
        c.phi_order = 12;
        c.max_outer_level = 0;
        return c;
    }
};

struct UIntegral {
    double value = 0.0;
    double ratio = 0.0;  // value * |v|^{2 beta - 1} |xi(X)|^{beta - 1/2}
};

// Near-grazing state on the unit ball with kinetic distance ~ alpha_target:
// half the budget from the incidence, half from the depth (grazing scans of
// the trajectory integrals need alpha(x,v) -> 0, not merely |xi(x)| -> 0).
inline PhaseState<3> sphere_grazing_state(double alpha_target, const Vec3& direction_unit,
                                          double v_mag = 1.0, double t = 1.0) {
    const Vec3 u = normalized(direction_unit);
    const auto tb = tangent_basis<3>(u);
    const double d = alpha_target / (16.0 * v_mag * v_mag);
    const double w = std::sqrt(alpha_target / 8.0) / v_mag;
    PhaseState<3> st;
    st.t = t;
    st.x = (1.0 - d) * u;
    st.v = v_mag * normalized(tb[0] + w * u);
    return st;
}

namespace detail {

inline double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

struct UFrame {
    Vec3 n, t1, t2;
    double grad_norm = 0.0;
    double xi_abs = 0.0;
    Mat<3, 3> hess;
    Vec3 X;
    double vn = 0.0;
    double vp = 0.0, vq = 0.0;  // tangential components of v
    Vec3 v;
    double v_norm = 0.0;
};

template <class Extra>
inline double u_integral_frame(const UFrame& fr, const NonlocalParams& par,
                               const NonlocalQuadConfig& cfg, Extra&& extra_factor) {
    const double theta = par.theta, beta = par.beta, kappa = par.kappa;
    const double vb_r = std::pow(bracket(fr.v), -par.r_moment);
    const double L = std::sqrt(42.0 / theta);  // Gaussian support radius

    // exact alpha(X, u) for u = un n + p t1 + q t2
    auto alpha_of = [&](double un, double p, double q) {
        const Vec3 u = un * fr.n + p * fr.t1 + q * fr.t2;
        return fr.grad_norm * fr.grad_norm * un * un + 2.0 * fr.xi_abs * quad_form(fr.hess, u);
    };

    auto inner = [&](double p, double q) {
        const Vec3 utau = p * fr.t1 + q * fr.t2;
        const double ridge =
            std::sqrt(2.0 * fr.xi_abs * std::max(quad_form(fr.hess, utau), 1e-300)) /
            fr.grad_norm;
        const double dp = p - fr.vp, dq = q - fr.vq;
        const double tau_gauss = std::exp(-theta * (dp * dp + dq * dq));
        if (tau_gauss < 1e-18) return 0.0;

        auto f_un = [&](double un) {
            const double dn = un - fr.vn;
            const double d2 = dn * dn + dp * dp + dq * dq;
            if (d2 == 0.0) return 0.0;
            const double kern = std::exp(-theta * dn * dn) * std::pow(d2, 0.5 * (kappa - 2.0));
            const double a = alpha_of(un, p, q);
            double val = kern * std::pow(a, -beta);
            if (par.r_moment != 0.0) {
                const Vec3 u = un * fr.n + p * fr.t1 + q * fr.t2;
                val *= std::pow(bracket(u), par.r_moment) * vb_r;
            }
            val *= extra_factor(un, p, q);
            return val;
        };
        const double lo = std::min(-3.0 * ridge - 1.0, fr.vn - L);
        const double hi = std::max(3.0 * ridge + 1.0, fr.vn + L);
        const std::vector<double> breaks{-ridge, 0.0, ridge, fr.vn};
        return tau_gauss * integrate_adaptive(f_un, lo, hi, cfg.inner_tol, breaks,
                                              cfg.inner_max_intervals, 1e-300);
    };

    const double vtau = std::sqrt(fr.vp * fr.vp + fr.vq * fr.vq);
    const bool two_charts = vtau > 0.05;
    const double rho0 = two_charts ? 0.5 * vtau : 0.0;

    auto polar_chart = [&](double cp, double cq, double radius, auto&& weight, int level) {
        const int ns = cfg.sigma_order << level, nphi = cfg.phi_order << level;
        const QuadRule& qs = gauss_legendre(ns);
        const double tmax = std::sqrt(radius);
        double total = 0.0;
        for (int is = 0; is < ns; ++is) {
            const double tt = 0.5 * tmax * (qs.x[is] + 1.0);
            const double wt = 0.5 * tmax * qs.w[is];
            const double sg = tt * tt;          // graded radius
            const double jac = 2.0 * tt * sg;   // d sigma = 2 t dt, times sigma
            double ring = 0.0;
            for (int ip = 0; ip < nphi; ++ip) {
                const double phi = 2.0 * M_PI * ip / nphi;
                const double p = cp + sg * std::cos(phi), q = cq + sg * std::sin(phi);
                const double wgt = weight(p, q);
                if (wgt > 0.0) ring += wgt * inner(p, q);
            }
            total += wt * jac * (2.0 * M_PI / nphi) * ring;
        }
        return total;
    };

    auto evaluate = [&](int level) {
        if (!two_charts) {
            const double radius = L + vtau + 1.0;
            return polar_chart(0.0, 0.0, radius, [](double, double) { return 1.0; }, level);
        }
        auto chi = [&](double p, double q) {
            const double r = std::sqrt(p * p + q * q);
            return 1.0 - smooth_step((r - 0.5 * rho0) / (0.5 * rho0));
        };
        const double a = polar_chart(0.0, 0.0, rho0, chi, level);
        const double radius_b = L + vtau + 1.0;
        const double b = polar_chart(
            fr.vp, fr.vq, radius_b, [&](double p, double q) { return 1.0 - chi(p, q); }, level);
        return a + b;
    };

    double prev = evaluate(0);
    for (int level = 1; level <= cfg.max_outer_level; ++level) {
        const double cur = evaluate(level);
        if (std::fabs(cur - prev) <= cfg.outer_tol * std::fabs(cur)) return cur;
        prev = cur;
    }
    return prev;  // last refinement; scans tolerate ~outer_tol
}

template <std::size_t N>
inline UFrame make_frame(const ConvexDomain<N>& dom, const Vec<N>& X, const Vec<N>& v);

template <>
inline UFrame make_frame<3>(const ConvexDomain<3>& dom, const Vec3& X, const Vec3& v) {
    UFrame fr;
    const Vec3 g = dom.grad_xi(X);
    fr.grad_norm = norm(g);
    if (fr.grad_norm <= 1e-12) throw DegenerateGradient("u-integral: |grad xi(X)| ~ 0");
    fr.n = g / fr.grad_norm;
    const auto tb = tangent_basis<3>(fr.n);
    fr.t1 = tb[0];
    fr.t2 = tb[1];
    fr.xi_abs = -dom.xi(X);
    fr.hess = dom.hess_xi(X);
    fr.X = X;
    fr.v = v;
    fr.vn = dot(v, fr.n);
    fr.vp = dot(v, fr.t1);
    fr.vq = dot(v, fr.t2);
    fr.v_norm = norm(v);
    return fr;
}

}  // namespace detail

/**
 * The grazing u-integral at a strictly interior point (|xi(X)| >= 1e-10).
 * Returns the integral and its product with |v|^{2 beta - 1} |xi|^{beta-1/2}
 * (bounded on grazing scans; log-log slope vs |xi| is -(beta - 1/2)).
 */
inline UIntegral grazing_u_integral(const ConvexDomain<3>& dom, const Vec3& X, const Vec3& v,
                                    const NonlocalParams& par,
                                    const NonlocalQuadConfig& cfg = {}) {
    par.check();
    if (std::fabs(dom.xi(X)) < 1e-10)
        throw ParameterViolation("grazing_u_integral: X must be strictly interior");
    if (dom.xi(X) > 0.0) throw OutsideDomain("grazing_u_integral: X outside the domain");
    const auto fr = detail::make_frame(dom, X, v);
    UIntegral out;
    out.value =
        detail::u_integral_frame(fr, par, cfg, [](double, double, double) { return 1.0; });
    out.ratio = out.value * std::pow(fr.v_norm, 2.0 * par.beta - 1.0) *
                std::pow(fr.xi_abs, par.beta - 0.5);
    return out;
}

struct DynamicalIntegral {
    double lhs = 0.0;
    double rhs_scale = 0.0;  // 1 / ( <v> alpha(x,v)^{beta - 1/2} )
    double ratio = 0.0;      // lhs / rhs_scale
    int inner_evals = 0;
};

namespace detail {

// integral over [lo, hi] with sqrt grading toward both endpoints (the
// trajectory integrand has |s - t^l|^{1/2 - beta} endpoint singularities)
template <class F>
inline double graded_segment(F&& f, double lo, double hi, int order) {
    const QuadRule& q = gauss_legendre(order);
    const double mid = 0.5 * (lo + hi);
    double total = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i) {
        const double t = 0.5 * (q.x[i] + 1.0);  // in (0,1)
        const double w = 0.5 * q.w[i];
        // left half: s = lo + (mid - lo) t^2 ; right half mirrored
        total += w * 2.0 * t * (mid - lo) * f(lo + (mid - lo) * t * t);
        total += w * 2.0 * t * (hi - mid) * f(hi - (hi - mid) * t * t);
    }
    return total;
}

template <class Inner>
inline DynamicalIntegral time_integral(const ConvexDomain<3>& dom, DeterministicBc dbc,
                                       const PhaseState<3>& state, const NonlocalParams& par,
                                       const NonlocalQuadConfig& cfg, Inner&& inner_at) {
    const BoundaryCondition bc = to_boundary_condition(dbc);
    const auto cyc = build_cycle(dom, bc, state, 0.0, 2000000);
    const double vb = bracket(state.v);

    DynamicalIntegral out;
    double lhs = 0.0;
    for (std::size_t l = 0; l < cyc.entries.size(); ++l) {
        const double seg_hi = std::min(cyc.entries[l].t, state.t);
        const double seg_lo = (l + 1 < cyc.entries.size()) ? cyc.entries[l + 1].t : 0.0;
        const double hi = seg_hi;
        const double lo = std::max(seg_lo, 0.0);
        if (hi <= lo) continue;
        if (std::exp(-par.l_rate * vb * (state.t - hi)) < cfg.time_cutoff) break;
        const auto& e = cyc.entries[l];
        auto f_s = [&](double s) {
            ++out.inner_evals;
            const Vec3 X = e.x - (e.t - s) * e.v;
            const double w = std::exp(-par.l_rate * vb * (state.t - s)) * par.z_eval(s);
            if (w < cfg.time_cutoff) return 0.0;
            return w * inner_at(X, e.v);
        };
        lhs += graded_segment(f_s, lo, hi, cfg.time_order);
    }
    out.lhs = lhs;
    const double a = kinetic_distance(dom, state.x, state.v);
    out.rhs_scale = 1.0 / (vb * std::pow(a, par.beta - 0.5));
    out.ratio = out.lhs / out.rhs_scale;
    return out;
}

}  // namespace detail

/**
 * Time-weighted trajectory integral of the grazing u-integral along a
 * specular or bounce-back cycle; `ratio` is lhs * <v> alpha(x,v)^{beta-1/2},
 * the quantity that stays within one constant over grazing scans. Uses the
 * fast() quadrature preset by default: thousands of inner integrals are
 * summed and their uniform bias cancels in the ratio.
 */
inline DynamicalIntegral dynamical_nonlocal_integral(
    const ConvexDomain<3>& dom, DeterministicBc dbc, const PhaseState<3>& state,
    const NonlocalParams& par, const NonlocalQuadConfig& cfg = NonlocalQuadConfig::fast()) {
    par.check();
    return detail::time_integral(dom, dbc, state, par, cfg, [&](const Vec3& X, const Vec3& V) {
        const auto fr = detail::make_frame(dom, X, V);
        return detail::u_integral_frame(fr, par, cfg,
                                        [](double, double, double) { return 1.0; });
    });
}

/**
 * Variant with the extra |v|/|u| factor (or a constant override, used by the
 * factor-identity check); requires 1/2 < beta < 1.
 */
inline DynamicalIntegral nonlocal_u_variant(
    const ConvexDomain<3>& dom, DeterministicBc dbc, const PhaseState<3>& state,
    const NonlocalParams& par, const NonlocalQuadConfig& cfg = NonlocalQuadConfig::fast(),
    std::optional<double> factor_override = {}) {
    par.check(!factor_override.has_value());
    return detail::time_integral(dom, dbc, state, par, cfg, [&](const Vec3& X, const Vec3& V) {
        const auto fr = detail::make_frame(dom, X, V);
        const double vmag = fr.v_norm;
        if (factor_override) {
            const double c = *factor_override;
            return detail::u_integral_frame(fr, par, cfg,
                                            [c](double, double, double) { return c; });
        }
        return detail::u_integral_frame(fr, par, cfg, [vmag](double un, double p, double q) {
            const double umag = std::sqrt(un * un + p * p + q * q);
            return vmag / std::max(umag, 1e-14);
        });
    });
}

// Double l until the dynamical ratio stabilizes within 5% (the integral is
// monotone decreasing in l, so this terminates).
inline double calibrate_nonlocal_rate(const ConvexDomain<3>& dom, DeterministicBc dbc,
                                      const PhaseState<3>& state, NonlocalParams par,
                                      const NonlocalQuadConfig& cfg = NonlocalQuadConfig::fast(),
                                      double l_start = 10.0, int max_doublings = 8) {
    par.check();
    par.l_rate = l_start;
    double prev = dynamical_nonlocal_integral(dom, dbc, state, par, cfg).ratio;
    for (int i = 0; i < max_doublings; ++i) {
        par.l_rate *= 2.0;
        const double cur = dynamical_nonlocal_integral(dom, dbc, state, par, cfg).ratio;
        if (std::fabs(cur - prev) <= 0.05 * std::fabs(prev)) return par.l_rate;
        prev = cur;
    }
    return par.l_rate;
}

}  // namespace kintrace
