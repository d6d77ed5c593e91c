#pragma once

/**
 * Backward characteristic cycles in a convex domain.
 *
 * From (t, x, v) the backward trajectory is traced through its boundary
 * bounces (t^l, x^l, v^l): each step solves the backward exit time from the
 * previous bounce point, then applies the boundary condition to the velocity:
 *
 *   specular     v -> v - 2 n (n.v)          (|v| preserved exactly)
 *   bounce-back  v -> -v                     (closed-form cycle: after the
 *                                             first bounce the chord repeats)
 *   diffuse      v -> draw from the Maxwellian flux law on {n.u > 0}
 *
 * The evaluator X_cl(s), V_cl(s) is piecewise linear between bounce times.
 * Diffuse draws are counter-based per (seed, trajectory id, bounce index), so
 * a cycle is a pure function of its inputs regardless of thread count.
 */

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "kintrace/error.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

enum class BcKind { Specular, BounceBack, Diffuse };

inline const char* to_string(BcKind k) {
    switch (k) {
        case BcKind::Specular: return "specular";
        case BcKind::BounceBack: return "bounce_back";
        case BcKind::Diffuse: return "diffuse";
    }
    return "?";
}

struct BoundaryCondition {
    BcKind kind = BcKind::Specular;
    // diffuse resampling stream: velocity draws come from
    // (seed, trajectory_id, bounce index)
    std::uint64_t seed = 0;
    std::uint64_t trajectory_id = 0;

    static BoundaryCondition specular() { return {BcKind::Specular, 0, 0}; }
    static BoundaryCondition bounce_back() { return {BcKind::BounceBack, 0, 0}; }
    static BoundaryCondition diffuse(std::uint64_t seed, std::uint64_t trajectory_id = 0) {
        return {BcKind::Diffuse, seed, trajectory_id};
    }
    bool deterministic() const { return kind != BcKind::Diffuse; }
};

template <std::size_t N>
inline Vec<N> specular_reflect(const Vec<N>& v, const Vec<N>& n) {
    return v - (2.0 * dot(n, v)) * n;
}

// Orthonormal tangent frame at a unit normal (deterministic construction).
template <std::size_t N>
inline std::array<Vec<N>, N - 1> tangent_basis(const Vec<N>& n);

template <>
inline std::array<Vec2, 1> tangent_basis<2>(const Vec2& n) {
    return {Vec2{-n[1], n[0]}};
}

template <>
inline std::array<Vec3, 2> tangent_basis<3>(const Vec3& n) {
    // pick the coordinate axis least aligned with n
    std::size_t k = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (std::fabs(n[i]) < std::fabs(n[k])) k = i;
    Vec3 e{};
    e[k] = 1.0;
    Vec3 t1 = e - dot(e, n) * n;
    t1 = t1 / norm(t1);
    const Vec3 t2{n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2],
                  n[0] * t1[1] - n[1] * t1[0]};
    return {t1, t2};
}

// Maxwellian flux law on the outgoing half space:
//   d sigma(u) = c_mu e^{-|u|^2/2} (n.u) du  on  { n.u > 0 },
// normalized so the total mass is 1; c_mu = (2 pi)^{-(N-1)/2}.
template <std::size_t N>
struct DiffuseLaw {
    static double maxwellian(const Vec<N>& u) { return std::exp(-0.5 * norm2(u)); }
    static double c_mu() {
        double c = 1.0;
        for (std::size_t i = 0; i + 1 < N; ++i) c /= std::sqrt(6.283185307179586);
        return c;
    }
    static double flux_density(const Vec<N>& n, const Vec<N>& u) {
        const double nu = dot(n, u);
        return nu > 0.0 ? c_mu() * maxwellian(u) * nu : 0.0;
    }
};

// Draw from the flux law: tangential components are standard normal, the
// outgoing normal component has density u_n e^{-u_n^2/2} (inverse CDF
// u_n = sqrt(-2 log(1-U))).
template <std::size_t N>
inline Vec<N> sample_diffuse_velocity(const DiffuseLaw<N>&, const Vec<N>& n, CounterRng& rng) {
    const double un = std::sqrt(-2.0 * std::log(rng.uniform01_open_below()));
    const auto tb = tangent_basis<N>(n);
    Vec<N> v = un * n;
    for (const auto& t : tb) v += rng.normal() * t;
    return v;
}

template <std::size_t N>
struct CycleEntry {
    double t = 0.0;
    Vec<N> x{};
    Vec<N> v{};
    double r = 0.0;  // grazing ratio |v.n(x)| / |v| at the bounce; 0 for l = 0
};

template <std::size_t N>
struct Cycle {
    BoundaryCondition bc;
    std::vector<CycleEntry<N>> entries;  // l = 0 .. L, strictly decreasing t
    double s_min = 0.0;

    double start_time() const { return entries.front().t; }
    const CycleEntry<N>& initial() const { return entries.front(); }
    std::size_t bounces() const { return entries.size() - 1; }

    // Largest l with s < t^l; equivalently the segment [t^{l+1}, t^l)
    // containing s (the last segment is closed below at s_min).
    std::size_t segment_index(double s) const {
        std::size_t lo = 0, hi = entries.size() - 1;
        // invariant: t^{hi} <= s is possible only at hi itself
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (entries[mid].t > s) lo = mid; else hi = mid - 1;
        }
        return lo;
    }
};

template <std::size_t N>
struct BounceCapExceeded : KintraceError {
    explicit BounceCapExceeded(Cycle<N> partial_cycle)
        : KintraceError("build_cycle: bounce cap exceeded (near-grazing accumulation)"),
          partial(std::move(partial_cycle)) {}
    Cycle<N> partial;
};

/**
 * Trace the cycle from `state` down to time s_min (at most l_cap bounces).
 * Throws BounceCapExceeded (carrying the partial cycle) when the cap is hit,
 * and GrazingStall when two consecutive exits are shorter than 1e-13.
 */
template <std::size_t N>
inline Cycle<N> build_cycle(const ConvexDomain<N>& dom, const BoundaryCondition& bc,
                            const PhaseState<N>& state, double s_min,
                            std::size_t l_cap = 1000000) {
    if (s_min > state.t) throw ParameterViolation("build_cycle: s_min > t");
    if (dom.xi(state.x) > dom.boundary_tol())
        throw OutsideDomain("build_cycle: state.x outside the closed domain");

    Cycle<N> cyc;
    cyc.bc = bc;
    cyc.s_min = s_min;
    cyc.entries.push_back({state.t, state.x, state.v, 0.0});

    if (norm(state.v) == 0.0) return cyc;  // stationary: single segment

    double t_cur = state.t;
    Vec<N> x_cur = state.x;
    Vec<N> v_cur = state.v;
    int consecutive_tiny = 0;

    // Bounce-back: after the first bounce the chord just repeats with the
    // velocity sign alternating, so only two exit solves are ever needed.
    if (bc.kind == BcKind::BounceBack) {
        const auto e1 = backward_exit_time(dom, x_cur, v_cur);
        const double t1 = t_cur - e1.t_b;
        const Vec<N> x1 = e1.x_b;
        const Vec<N> v1 = -v_cur;
        cyc.entries.push_back({t1, x1, v1, std::fabs(dot(v1, e1.normal_at_exit)) / norm(v1)});
        if (t1 <= s_min) return cyc;

        const auto e2 = backward_exit_time(dom, x1, v1);
        if (e2.t_b <= 1e-13) throw GrazingStall("build_cycle: zero-length bounce-back chord");
        const double chord = e2.t_b;
        const Vec<N> x2 = e2.x_b;
        const double r2 = std::fabs(dot(v_cur, e2.normal_at_exit)) / norm(v_cur);
        for (std::size_t l = 2;; ++l) {
            if (l > l_cap) throw BounceCapExceeded<N>(cyc);
            const double tl = t1 - static_cast<double>(l - 1) * chord;
            const bool even = (l % 2 == 0);
            cyc.entries.push_back(
                {tl, even ? x2 : x1, even ? state.v : v1, even ? r2 : cyc.entries[1].r});
            if (tl <= s_min) break;
        }
        return cyc;
    }

    for (std::size_t l = 1;; ++l) {
        if (l > l_cap) throw BounceCapExceeded<N>(cyc);
        const auto exit = backward_exit_time(dom, x_cur, v_cur);
        if (exit.t_b <= 1e-13) {
            if (++consecutive_tiny >= 2)
                throw GrazingStall("build_cycle: consecutive zero-length exits");
        } else {
            consecutive_tiny = 0;
        }
        const double t_next = t_cur - exit.t_b;
        const Vec<N>& n = exit.normal_at_exit;
        Vec<N> v_next;
        if (bc.kind == BcKind::Specular) {
            v_next = specular_reflect(v_cur, n);
        } else {
            CounterRng rng(bc.seed, CounterRng::stream_id(bc.trajectory_id, l, 0xD1FFu));
            v_next = sample_diffuse_velocity(DiffuseLaw<N>{}, n, rng);
        }
        cyc.entries.push_back({t_next, exit.x_b, v_next, std::fabs(dot(v_next, n)) / norm(v_next)});
        if (t_next <= s_min) break;
        t_cur = t_next;
        x_cur = exit.x_b;
        v_cur = v_next;
    }
    return cyc;
}

/**
 * Piecewise-linear evaluation of the backward trajectory:
 *   X_cl(s) = x^l - (t^l - s) v^l  on  s in [t^{l+1}, t^l).
 * s must not collide with a bounce time (within 1e-13); the trajectory
 * Jacobians are undefined there.
 */
template <std::size_t N>
inline std::pair<Vec<N>, Vec<N>> eval_trajectory(const Cycle<N>& cyc, double s) {
    if (s > cyc.start_time() || s < cyc.s_min - 1e-12)
        throw ParameterViolation("eval_trajectory: s outside [s_min, t]");
    for (std::size_t l = 1; l < cyc.entries.size(); ++l)
        if (std::fabs(s - cyc.entries[l].t) < 1e-13)
            throw AtBounceTime("eval_trajectory: s collides with a bounce time");
    const std::size_t l = cyc.segment_index(s);
    const auto& e = cyc.entries[l];
    return {e.x - (e.t - s) * e.v, e.v};
}

// Segment-convention evaluation without the bounce-time guard: at s = t^l the
// pre-bounce segment value is returned (the one-sided limit from above).
// Transport solutions are continuous across bounces, so this is the right
// evaluator for solution values; Jacobians must keep using eval_trajectory.
template <std::size_t N>
inline std::pair<Vec<N>, Vec<N>> eval_trajectory_closed(const Cycle<N>& cyc, double s) {
    const std::size_t l = cyc.segment_index(s);
    const auto& e = cyc.entries[l];
    return {e.x - (e.t - s) * e.v, e.v};
}

struct BounceCountReport {
    std::size_t l_star = 0;
    double ratio = 0.0;  // l_star sqrt(alpha) / (|t-s| |v|^2 e^{C |v| (t-s)})
};

// Number of bounces down to time s, with the growth-law ratio used by the
// scan harness (C is the fitted per-domain two-sided rate constant).
template <std::size_t N>
inline BounceCountReport bounce_count(const ConvexDomain<N>& dom, const Cycle<N>& cyc, double s,
                                      double vl_rate_constant) {
    BounceCountReport rep;
    rep.l_star = cyc.segment_index(s);
    const auto& e0 = cyc.initial();
    const double dt = e0.t - s;
    const double vn = norm(e0.v);
    if (dt > 0.0 && vn > 0.0) {
        const double a = kinetic_distance(dom, e0.x, e0.v);
        rep.ratio = static_cast<double>(rep.l_star) * std::sqrt(a) /
                    (dt * vn * vn * std::exp(vl_rate_constant * vn * dt));
    }
    return rep;
}

// --- two-sided exponential control of alpha along a deterministic cycle ----

struct VelocityLemmaCertificate {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double ratio = 0.0;         // alpha(s2) / alpha(s1)
    double implied_rate = 0.0;  // |log ratio| / (|v| |s1 - s2|)
    bool pass = false;          // implied_rate <= frozen per-domain constant
};

template <std::size_t N>
inline VelocityLemmaCertificate velocity_lemma_certificate(const ConvexDomain<N>& dom,
                                                           const Cycle<N>& cyc, double s1,
                                                           double s2, double vl_constant) {
    if (!cyc.bc.deterministic())
        throw ParameterViolation("velocity_lemma_certificate: deterministic cycles only");
    const auto [x1, v1] = eval_trajectory(cyc, s1);
    const auto [x2, v2] = eval_trajectory(cyc, s2);
    VelocityLemmaCertificate cert;
    cert.alpha1 = kinetic_distance(dom, x1, v1);
    cert.alpha2 = kinetic_distance(dom, x2, v2);
    const double v4 = norm2(v1) * norm2(v1);
    if (cert.alpha1 < 1e-14 * std::max(v4, 1e-300))
        throw GrazingDegenerate("velocity_lemma_certificate: alpha(s1) below grazing floor");
    cert.ratio = cert.alpha2 / cert.alpha1;
    const double denom = norm(cyc.initial().v) * std::fabs(s1 - s2);
    cert.implied_rate = denom > 0.0 ? std::fabs(std::log(cert.ratio)) / denom : 0.0;
    cert.pass = cert.implied_rate <= vl_constant;
    return cert;
}

}  // namespace kintrace
