#pragma once

/**
 * Closed-form specular cycles on the 2D unit disk, and their exact
 * derivatives.
 *
 * In polar coordinates r = |x|, theta = angle(x), with velocity components
 * v_n = v.n(x) (radial) and v_t = v.t(x) (tangential), the bounce data of the
 * backward specular trajectory are elementary:
 *
 *   Q    = sqrt(v_n^2 + (1 - r^2) v_t^2)        (chord discriminant;
 *                                                alpha = 4 Q^2 on the disk)
 *   t^l  = t - ( r v_n + (2l - 1) Q ) / |v|^2   (bounce times; uniform gap
 *                                                2Q/|v|^2 after the first)
 *   th^l = theta - A - (2l - 1) B               (bounce angles)
 *   ps^l = theta + pi/2 - A - 2 l B             (post-bounce velocity angles)
 *
 * with A = atan2(v_n, v_t) and B = acos(r v_t / |v|). States with v_t < 0 are
 * mirrored across the x-axis first (the formulas above assume v_t >= 0); the
 * signed r v_n term covers both inward and outward initial velocities.
 *
 * Everything here is differentiated exactly in the four directions
 * (r, theta, v_n, v_t), where the theta-derivative holds the Cartesian
 * velocity fixed (so d v_n = v_t dtheta, d v_t = -v_n dtheta). The normal
 * derivative of the trajectory is the r-derivative.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "kintrace/error.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/trajectory.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

struct DiskPolar {
    double r = 0.0, theta = 0.0;  // position
    double vn = 0.0, vt = 0.0;    // velocity components in (n, t) at theta
};

inline DiskPolar disk_polar(const Vec2& x, const Vec2& v) {
    DiskPolar p;
    p.r = norm(x);
    if (p.r < 1e-14) throw CenterDegenerate("disk: polar angle undefined at the center");
    p.theta = std::atan2(x[1], x[0]);
    const Vec2 n{x[0] / p.r, x[1] / p.r};
    const Vec2 t{-n[1], n[0]};
    p.vn = dot(v, n);
    p.vt = dot(v, t);
    return p;
}

namespace detail {

struct DiskTerms {
    // mirrored so vt >= 0
    bool mirrored = false;
    double t = 0.0, r = 0.0, theta = 0.0, vn = 0.0, vt = 0.0;
    double V2 = 0.0, V = 0.0;
    double Q = 0.0, A = 0.0, B = 0.0;

    double t_l(std::size_t l) const {
        return t - (r * vn + (2.0 * l - 1.0) * Q) / V2;
    }
    double theta_l(std::size_t l) const { return theta - A - (2.0 * l - 1.0) * B; }
    double psi_l(std::size_t l) const {
        return theta + 1.5707963267948966 - A - 2.0 * l * B;
    }
    Vec2 x_l(std::size_t l) const {
        const double th = theta_l(l);
        return unmirror(Vec2{std::cos(th), std::sin(th)});
    }
    Vec2 v_l(std::size_t l) const {
        const double ps = psi_l(l);
        return unmirror(V * Vec2{std::cos(ps), std::sin(ps)});
    }
    Vec2 unmirror(Vec2 w) const {
        if (mirrored) w[1] = -w[1];
        return w;
    }
};

inline DiskTerms disk_terms(const PhaseState<2>& st) {
    const DiskPolar p = disk_polar(st.x, st.v);
    DiskTerms d;
    d.t = st.t;
    d.r = p.r;
    d.mirrored = p.vt < 0.0;
    d.theta = d.mirrored ? -p.theta : p.theta;
    d.vn = p.vn;
    d.vt = d.mirrored ? -p.vt : p.vt;
    d.V2 = d.vn * d.vn + d.vt * d.vt;
    d.V = std::sqrt(d.V2);
    if (d.V == 0.0) throw NoExit("disk cycle: |v| = 0");
    d.Q = std::sqrt(d.vn * d.vn + (1.0 - d.r * d.r) * d.vt * d.vt);
    d.A = std::atan2(d.vn, d.vt);
    d.B = std::acos(std::clamp(d.r * d.vt / d.V, -1.0, 1.0));
    return d;
}

}  // namespace detail

/**
 * Analytic specular cycle on the unit disk; matches the iterative
 * build_cycle entry by entry. r = 0 is rejected (polar angle undefined).
 */
inline Cycle<2> disk_specular_cycle(const PhaseState<2>& state, double s_min,
                                    std::size_t l_cap = 1000000) {
    if (s_min > state.t) throw ParameterViolation("disk_specular_cycle: s_min > t");
    const auto d = detail::disk_terms(state);

    Cycle<2> cyc;
    cyc.bc = BoundaryCondition::specular();
    cyc.s_min = s_min;
    cyc.entries.push_back({state.t, state.x, state.v, 0.0});
    if (d.Q <= 0.0) return cyc;  // grazing chord of zero length
    for (std::size_t l = 1;; ++l) {
        if (l > l_cap) throw BounceCapExceeded<2>(cyc);
        const double tl = d.t_l(l);
        const Vec2 xl = d.x_l(l);
        const Vec2 vl = d.v_l(l);
        cyc.entries.push_back({tl, xl, vl, std::fabs(dot(vl, xl)) / d.V});
        if (tl <= s_min) break;
    }
    return cyc;
}

/**
 * Exact partial derivatives of the disk trajectory at time s with respect to
 * (r, theta, v_n, v_t) of the initial state, evaluated in the mirrored frame
 * (all asymptotic magnitudes are mirror-invariant).
 *
 * The grazing asymptotics that drive the blow-up scans are
 *   |d_n X(s)| ~ |t-s| v_t^2 / Q,      (normal-directed: the tangential
 *                                       projection cancels to O(1))
 *   |d_n V(s) . n| ~ |t-s| |v|^4 / Q^2,
 * with Q = sqrt(alpha)/2. Within one bounce segment the prefactors
 * oscillate with the phase of s, so scans should take a sup over a small
 * window of s values.
 */
struct DiskDerivatives {
    std::size_t l_star = 0;
    Vec2 X{}, V{};                    // trajectory point (mirrored frame)
    Vec2 dX_dr{}, dX_dtheta{}, dX_dvn{}, dX_dvt{};
    Vec2 dV_dr{}, dV_dtheta{}, dV_dvn{}, dV_dvt{};
    double dnX_tangential = 0.0;      // (dX/dr) . t(X): stays O(1) at grazing
    double dnX_normal = 0.0;          // (dX/dr) . n(X): carries the 1/sqrt(alpha) growth
    double dnX_norm = 0.0;            // |dX/dr|
    double dnV_normal = 0.0;          // (dV/dr) . n(X): grows like 1/alpha
    double dnV_norm = 0.0;            // |dV/dr|
    double Q = 0.0;                   // sqrt(alpha)/2 on the disk
};

inline DiskDerivatives disk_normal_derivatives(const PhaseState<2>& state, double s) {
    const auto d = detail::disk_terms(state);
    if (d.Q <= 0.0) throw GrazingDegenerate("disk_normal_derivatives: grazing state");

    // segment index: largest l with t_l > s (0 = free flight)
    double lf = (((state.t - s) * d.V2 - d.r * d.vn) / d.Q + 1.0) / 2.0;
    std::size_t l = lf > 0.0 ? static_cast<std::size_t>(lf) : 0;
    while (l > 0 && d.t_l(l) <= s) --l;
    while (d.t_l(l + 1) > s) ++l;

    DiskDerivatives out;
    out.l_star = l;
    out.Q = d.Q;

    const double r = d.r, vn = d.vn, vt = d.vt, V2 = d.V2, V = d.V, Q = d.Q;

    // dQ, dA, dB, dV in the four directions (r, theta, vn, vt); the theta
    // direction includes the induced rotation of the velocity components.
    const double dQ[4] = {-r * vt * vt / Q, r * r * vn * vt / Q, vn / Q, (1.0 - r * r) * vt / Q};
    const double dA[4] = {0.0, 1.0, vt / V2, -vn / V2};
    const double dB[4] = {-vt / Q, r * vn / Q, r * vt * vn / (Q * V2), -r * vn * vn / (Q * V2)};
    const double dV[4] = {0.0, 0.0, vn / V, vt / V};
    const double dV2[4] = {0.0, 0.0, 2.0 * vn, 2.0 * vt};
    const double dRvn[4] = {vn, r * vt, r, 0.0};  // d(r vn)
    const double dTheta0[4] = {0.0, 1.0, 0.0, 0.0};

    if (l == 0) {
        // free flight: X = x - (t-s) v, V = v, all in polar directions
        const double c = std::cos(d.theta), sn = std::sin(d.theta);
        const Vec2 nhat{c, sn}, that{-sn, c};
        const Vec2 dx_dir[4] = {nhat, r * that, Vec2{}, Vec2{}};
        const Vec2 dv_dir[4] = {Vec2{}, Vec2{}, nhat, that};
        Vec2* dX[4] = {&out.dX_dr, &out.dX_dtheta, &out.dX_dvn, &out.dX_dvt};
        Vec2* dVout[4] = {&out.dV_dr, &out.dV_dtheta, &out.dV_dvn, &out.dV_dvt};
        for (int p = 0; p < 4; ++p) {
            *dX[p] = dx_dir[p] - (state.t - s) * dv_dir[p];
            *dVout[p] = dv_dir[p];
        }
        out.V = vn * nhat + vt * that;
        out.X = Vec2{r * c, r * sn} - (state.t - s) * out.V;
    } else {
        const double L = static_cast<double>(l);
        const double thl = d.theta_l(l);
        const double psl = d.psi_l(l);
        const double tl = d.t_l(l);
        const Vec2 xl{std::cos(thl), std::sin(thl)};
        const Vec2 xl_perp{-std::sin(thl), std::cos(thl)};
        const Vec2 w{std::cos(psl), std::sin(psl)};
        const Vec2 w_perp{-std::sin(psl), std::cos(psl)};

        Vec2* dX[4] = {&out.dX_dr, &out.dX_dtheta, &out.dX_dvn, &out.dX_dvt};
        Vec2* dVout[4] = {&out.dV_dr, &out.dV_dtheta, &out.dV_dvn, &out.dV_dvt};
        for (int p = 0; p < 4; ++p) {
            const double dtl = -(dRvn[p] + (2.0 * L - 1.0) * dQ[p]) / V2 +
                               (r * vn + (2.0 * L - 1.0) * Q) * dV2[p] / (V2 * V2);
            const double dthl = dTheta0[p] - dA[p] - (2.0 * L - 1.0) * dB[p];
            const double dpsl = dTheta0[p] - dA[p] - 2.0 * L * dB[p];
            const Vec2 dVl = dV[p] * w + V * dpsl * w_perp;
            *dX[p] = dthl * xl_perp - dtl * (V * w) - (tl - s) * dVl;
            *dVout[p] = dVl;
        }
        out.X = xl - (tl - s) * (V * w);
        out.V = V * w;
    }

    const double Xn = norm(out.X);
    if (Xn < 1e-14) throw CenterDegenerate("disk_normal_derivatives: X(s) at the center");
    const Vec2 nX{out.X[0] / Xn, out.X[1] / Xn};
    const Vec2 tX{-nX[1], nX[0]};
    out.dnX_tangential = dot(out.dX_dr, tX);
    out.dnX_normal = dot(out.dX_dr, nX);
    out.dnX_norm = norm(out.dX_dr);
    out.dnV_normal = dot(out.dV_dr, nX);
    out.dnV_norm = norm(out.dV_dr);
    return out;
}

}  // namespace kintrace
