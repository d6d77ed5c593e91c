#pragma once

/**
 * Derivatives of exit data and of whole trajectories.
 *
 * Exit data has closed-form derivatives at non-grazing footpoints,
 *   grad_x t_b = n_b / (v.n_b),            grad_v t_b = -t_b n_b / (v.n_b),
 *   grad_x x_b = I - grad_x t_b (x) v,     grad_v x_b = -t_b I + t_b grad_x t_b (x) v,
 * (rows index the differentiation direction). Bounce-back cycles are built
 * from two exit solves, so every cycle quantity has an exact derivative by
 * the chain rule through these formulas.
 *
 * Trajectory Jacobians d(X_cl, V_cl)/d(t, x, v) at fixed s are computed by
 * central differences with per-direction steps. A perturbed trajectory whose
 * bounce count at s differs from the base trajectory has crossed a bounce
 * kink, where the derivative does not exist; such stencils are detected and
 * the step is shrunk (never averaged across the kink). Near grazing the
 * bounce times move at rate ~ |v|^2 (t-s)/alpha under x-perturbations, so
 * steps shrink like alpha^(3/2).
 *
 * The grazing-singularity exponents of the Jacobian blocks are measured by
 * scaling_exponents: a family of near-tangent states with alpha spanning
 * several decades, a log-log fit of the sup norms of the four blocks, and
 * pass bands around the rates -1/2 (dxX, dvV), -1 (dxV), 0 (dvX).
 */

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "kintrace/error.hpp"
#include "kintrace/fit.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/trajectory.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

template <std::size_t N>
struct ExitDerivatives {
    ExitData<N> exit;
    Vec<N> grad_x_tb{};
    Vec<N> grad_v_tb{};
    Mat<N, N> grad_x_xb{};  // (i,j) = d x_b[j] / d x[i]
    Mat<N, N> grad_v_xb{};
};

template <std::size_t N>
inline ExitDerivatives<N> d_exit(const ConvexDomain<N>& dom, const Vec<N>& x, const Vec<N>& v) {
    ExitDerivatives<N> out;
    out.exit = backward_exit_time(dom, x, v);
    const double vn = dot(out.exit.normal_at_exit, v);
    if (std::fabs(vn) <= 1e-10 * norm(v))
        throw GrazingExit("d_exit: grazing footpoint, |v.n(x_b)| below threshold");
    const Vec<N> n_over = out.exit.normal_at_exit / vn;
    out.grad_x_tb = n_over;
    out.grad_v_tb = -out.exit.t_b * n_over;
    out.grad_x_xb = Mat<N, N>::identity() - outer(out.grad_x_tb, v);
    out.grad_v_xb = -out.exit.t_b * Mat<N, N>::identity() - outer(out.grad_v_tb, v);
    return out;
}

/**
 * Exact derivative bundle for entry l >= 1 of a bounce-back cycle starting at
 * an interior state (x, v). t^l depends on the two chord footpoints
 * x1 = x_b(x, v) and x2 = x_b(x, -v); positions alternate between them and
 * the velocity only flips sign, so d v^l = (-1)^l Id and d_x v^l = 0.
 */
template <std::size_t N>
struct BounceBackDerivatives {
    std::size_t l = 1;
    double t_l = 0.0;
    Vec<N> x_l{};
    Vec<N> grad_x_tl{};
    Vec<N> grad_v_tl{};
    Mat<N, N> grad_x_xl{};
    Mat<N, N> grad_v_xl{};
    double dv_vl_sign = -1.0;  // d v^l / d v = sign * Id
    Vec<N> grad_x_gap{};       // d (t^l - t^{l+1})
    Vec<N> grad_v_gap{};
};

template <std::size_t N>
inline BounceBackDerivatives<N> bounce_back_cycle_derivatives(const ConvexDomain<N>& dom,
                                                              const PhaseState<N>& state,
                                                              std::size_t l) {
    if (l < 1) throw ParameterViolation("bounce_back_cycle_derivatives: l >= 1");
    const auto e1 = d_exit(dom, state.x, state.v);   // footpoint x1, time t_b(x,v)
    const auto e2 = d_exit(dom, state.x, -state.v);  // footpoint x2, time t_b(x,-v)

    // chain rule for the (x, -v) exit as a function of v
    const Vec<N> dv_tb2 = -e2.grad_v_tb;            // d/dv t_b(x,-v)
    Mat<N, N> dv_xb2 = -1.0 * e2.grad_v_xb;         // d/dv x_b(x,-v)

    BounceBackDerivatives<N> out;
    out.l = l;
    const double lf = static_cast<double>(l);
    const double t1 = state.t - e1.exit.t_b;
    const double chord = e1.exit.t_b + e2.exit.t_b;
    out.t_l = t1 - (lf - 1.0) * chord;
    out.x_l = (l % 2 == 1) ? e1.exit.x_b : e2.exit.x_b;

    // t^l = t - l t_b(x,v) - (l-1) t_b(x,-v)
    out.grad_x_tl = -lf * e1.grad_x_tb - (lf - 1.0) * e2.grad_x_tb;
    out.grad_v_tl = -lf * e1.grad_v_tb - (lf - 1.0) * dv_tb2;
    out.grad_x_gap = e1.grad_x_tb + e2.grad_x_tb;
    out.grad_v_gap = e1.grad_v_tb + dv_tb2;

    if (l % 2 == 1) {
        out.grad_x_xl = e1.grad_x_xb;
        out.grad_v_xl = e1.grad_v_xb;
    } else {
        out.grad_x_xl = e2.grad_x_xb;
        out.grad_v_xl = dv_xb2;
    }
    out.dv_vl_sign = (l % 2 == 0) ? 1.0 : -1.0;
    return out;
}

// Deterministic boundary conditions only: stochastic (diffuse) trajectories
// have no pathwise Jacobian and are rejected at the type level.
enum class DeterministicBc { Specular, BounceBack };

inline BoundaryCondition to_boundary_condition(DeterministicBc bc) {
    return bc == DeterministicBc::Specular ? BoundaryCondition::specular()
                                           : BoundaryCondition::bounce_back();
}

template <std::size_t N>
struct TrajectoryJacobian {
    // rows: directions (t, x_1..x_N, v_1..v_N); columns: outputs
    // (X_1..X_N, V_1..V_N). Blocks are exposed with output-major accessors.
    Mat<1 + 2 * N, 2 * N> m{};
    std::array<double, 1 + 2 * N> h_used{};
    std::size_t l_star = 0;
    double min_bounce_margin = 0.0;  // min over stencil of |s - t^l| distances

    double dX(std::size_t dir, std::size_t out) const { return m(dir, out); }
    double dV(std::size_t dir, std::size_t out) const { return m(dir, N + out); }

    // sup-norm of the four (x,v)->(X,V) blocks
    double sup_dxX() const { return block_max(1, 0); }
    double sup_dxV() const { return block_max(1, N); }
    double sup_dvX() const { return block_max(1 + N, 0); }
    double sup_dvV() const { return block_max(1 + N, N); }

  private:
    double block_max(std::size_t r0, std::size_t c0) const {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) s = std::max(s, std::fabs(m(r0 + i, c0 + j)));
        return s;
    }
};

namespace detail {

template <std::size_t N>
struct TrajPoint {
    Vec<N> X, V;
    std::size_t l_star;
    double margin;
};

template <std::size_t N>
inline TrajPoint<N> eval_with_index(const ConvexDomain<N>& dom, const BoundaryCondition& bc,
                                    const PhaseState<N>& st, double s, std::size_t l_cap) {
    const auto cyc = build_cycle(dom, bc, st, s - 1e-9, l_cap);
    const auto xv = eval_trajectory(cyc, s);
    TrajPoint<N> p{xv.first, xv.second, cyc.segment_index(s), 1e300};
    for (std::size_t l = 1; l < cyc.entries.size(); ++l)
        p.margin = std::min(p.margin, std::fabs(s - cyc.entries[l].t));
    return p;
}

}  // namespace detail

/**
 * Central-difference Jacobian of (X_cl(s), V_cl(s)) in the 1 + 2N directions
 * (t, x, v). Steps start from a scale set by the kinetic distance (x and t
 * directions shrink like alpha^{3/2}, v directions like alpha) and are
 * reduced by 10x, up to 8 times, until both stencil points agree with the
 * base trajectory on the bounce count at s. Throws SegmentCrossing when no
 * admissible step exists (s too close to a bounce-time collision).
 */
template <std::size_t N>
inline TrajectoryJacobian<N> fd_trajectory_jacobian(const ConvexDomain<N>& dom,
                                                    DeterministicBc dbc,
                                                    const PhaseState<N>& state, double s,
                                                    std::optional<double> h_override = {},
                                                    std::size_t l_cap = 2000000) {
    const BoundaryCondition bc = to_boundary_condition(dbc);
    const auto base = detail::eval_with_index(dom, bc, state, s, l_cap);

    const double alpha = std::max(kinetic_distance(dom, state.x, state.v), 1e-14);
    const double scale = dom.scale();
    const double h_x = std::min(1e-6, 0.02 * std::pow(alpha, 1.5)) * scale;
    const double h_v = std::min(1e-6, 0.05 * alpha / std::max(1.0, state.t - s)) * scale;

    TrajectoryJacobian<N> out;
    out.l_star = base.l_star;
    out.min_bounce_margin = base.margin;

    for (std::size_t dir = 0; dir < 1 + 2 * N; ++dir) {
        double h = h_override.value_or(dir <= N ? h_x : h_v);
        bool ok = false;
        for (int attempt = 0; attempt < 8 && !ok; ++attempt, h *= 0.1) {
            PhaseState<N> plus = state, minus = state;
            if (dir == 0) {
                plus.t += h;
                minus.t -= h;
            } else if (dir <= N) {
                plus.x[dir - 1] += h;
                minus.x[dir - 1] -= h;
                if (dom.xi(plus.x) > 0.0 || dom.xi(minus.x) > 0.0) continue;
            } else {
                plus.v[dir - 1 - N] += h;
                minus.v[dir - 1 - N] -= h;
            }
            detail::TrajPoint<N> pp, pm;
            try {
                pp = detail::eval_with_index(dom, bc, plus, s, l_cap);
                pm = detail::eval_with_index(dom, bc, minus, s, l_cap);
            } catch (const AtBounceTime&) {
                continue;
            } catch (const GrazingStall&) {
                continue;
            }
            if (pp.l_star != base.l_star || pm.l_star != base.l_star) continue;
            for (std::size_t j = 0; j < N; ++j) {
                out.m(dir, j) = (pp.X[j] - pm.X[j]) / (2.0 * h);
                out.m(dir, N + j) = (pp.V[j] - pm.V[j]) / (2.0 * h);
            }
            out.h_used[dir] = h;
            out.min_bounce_margin = std::min({out.min_bounce_margin, pp.margin, pm.margin});
            ok = true;
        }
        if (!ok)
            throw SegmentCrossing(
                "fd_trajectory_jacobian: no admissible step in direction " + std::to_string(dir));
    }
    return out;
}

// Exact free-flight Jacobian [ -v | Id | -(t-s) Id ; 0 | 0 | Id ] for
// t - s < t_b: the reference block the FD path must reproduce.
template <std::size_t N>
inline TrajectoryJacobian<N> free_flight_jacobian(const PhaseState<N>& state, double s) {
    TrajectoryJacobian<N> out;
    for (std::size_t j = 0; j < N; ++j) {
        out.m(0, j) = -state.v[j];
        out.m(1 + j, j) = 1.0;
        out.m(1 + N + j, j) = -(state.t - s);
        out.m(1 + N + j, N + j) = 1.0;
    }
    return out;
}

struct ScalingFit {
    LineFit fit;
    std::vector<double> alphas;
    std::vector<double> values;
};

struct ScalingScanConfig {
    double v_mag = 1.0;
    double t_minus_s = 3.0;
    double alpha_lo = 1e-6;
    double alpha_hi = 1e-1;
    int points = 11;
    double slope_tol = 0.15;
    std::uint64_t seed = 201;
};

struct ScalingExponents {
    ScalingFit dxX, dvX, dxV, dvV;
    int skipped = 0;  // SegmentCrossing resamples
    bool pass = false;

    // one-sided: the observed growth never exceeds the theoretical rate
    bool rates_respected(double tol) const {
        return dxX.fit.slope >= -0.5 - tol && dvV.fit.slope >= -0.5 - tol &&
               dxV.fit.slope >= -1.0 - tol && dvX.fit.slope >= -tol;
    }
};

/**
 * Grazing scan of the trajectory-Jacobian sup norms on a ball-like domain:
 * states sit a controlled distance inside the boundary with near-tangent
 * velocity so that alpha sweeps [alpha_lo, alpha_hi] logarithmically; the
 * sup of each block over a few evaluation phases is fitted against alpha.
 */
template <std::size_t N>
inline ScalingExponents scaling_exponents(const ConvexDomain<N>& dom, DeterministicBc dbc,
                                          const ScalingScanConfig& cfg) {
    ScalingExponents out;
    CounterRng rng(cfg.seed, CounterRng::stream_id(0x5CA1E5u));
    const double t = cfg.t_minus_s;

    for (int k = 0; k < cfg.points; ++k) {
        const double frac = cfg.points > 1 ? static_cast<double>(k) / (cfg.points - 1) : 0.0;
        const double alpha_target =
            std::exp(std::log(cfg.alpha_hi) + frac * (std::log(cfg.alpha_lo) - std::log(cfg.alpha_hi)));

        // interior near-tangent state on the unit ball, x = (1-d) u with a
        // small generic radial velocity component: half the alpha budget from
        // the incidence |v.grad xi|^2 = 4 (v.u)^2, half from the depth term
        // 2 |xi| v.Hess.v ~ 8 d |v|^2. A purely tangential v (v.u = 0) is a
        // degenerate symmetry point where several Jacobian entries lose their
        // leading growth, so the scan must stay off it.
        const Vec<N> u = rng.template unit_vec<N>();
        const double d = alpha_target / (16.0 * cfg.v_mag * cfg.v_mag);
        const Vec<N> x = (1.0 - d) * u;
        const auto tb = tangent_basis<N>(u);
        const double w = std::sqrt(alpha_target / 8.0) / cfg.v_mag;
        const Vec<N> v = cfg.v_mag * normalized(tb[0] + w * u);

        const PhaseState<N> st{t, x, v};
        const double alpha = kinetic_distance(dom, st.x, st.v);

        double mxX = 0.0, mvX = 0.0, mxV = 0.0, mvV = 0.0;
        bool got = false;
        for (double s : {0.0, 0.011, 0.023, 0.037}) {
            try {
                const auto J = fd_trajectory_jacobian(dom, dbc, st, s);
                mxX = std::max(mxX, J.sup_dxX());
                mvX = std::max(mvX, J.sup_dvX());
                mxV = std::max(mxV, J.sup_dxV());
                mvV = std::max(mvV, J.sup_dvV());
                got = true;
            } catch (const SegmentCrossing&) {
                ++out.skipped;
            }
        }
        if (!got) continue;
        out.dxX.alphas.push_back(alpha);
        out.dxX.values.push_back(mxX);
        out.dvX.alphas.push_back(alpha);
        out.dvX.values.push_back(mvX);
        out.dxV.alphas.push_back(alpha);
        out.dxV.values.push_back(mxV);
        out.dvV.alphas.push_back(alpha);
        out.dvV.values.push_back(mvV);
    }
    if (out.dxX.alphas.size() < 6)
        throw KintraceError("scaling_exponents: fewer than 6 valid scan points");
    out.dxX.fit = fit_loglog(out.dxX.alphas, out.dxX.values);
    out.dvX.fit = fit_loglog(out.dvX.alphas, out.dvX.values);
    out.dxV.fit = fit_loglog(out.dxV.alphas, out.dxV.values);
    out.dvV.fit = fit_loglog(out.dvV.alphas, out.dvV.values);
    out.pass = out.rates_respected(cfg.slope_tol);
    return out;
}

}  // namespace kintrace
