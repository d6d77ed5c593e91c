#pragma once

/**
 * Free transport along characteristics under the three boundary conditions,
 * and the sharpness experiments built on it.
 *
 * A solution of d_t f + v . grad_x f = 0 is constant along the backward
 * trajectory, so for specular and bounce-back the evaluation is exact:
 * f(t,x,v) = f0(X_cl(0), V_cl(0)). For the diffuse condition the velocity is
 * resampled at every bounce and the solution in the ratio representation
 * g = F / mu satisfies g|incoming = E[g outgoing] under the Maxwell flux law,
 * so g(t,x,v) = E[ g0(X(0), V(0)) ] over the stochastic cycles; the Monte
 * Carlo runs on counter-based per-trajectory streams, which also yields
 * common random numbers across finite-difference stencils for free.
 *
 * Representations: DensityF (F), RatioOverSqrtMu (f = F/sqrt(mu)),
 * RatioOverMu (g = F/mu); conversions are pointwise multiplications.
 *
 * Experiments:
 *  - boundary_lp_scan: the boundary integral I(delta) of |grad_x f|^p over
 *    the gamma-measure restricted to |n.v| > delta, |v| < 1/delta, for the
 *    diffuse condition on the unit sphere. For p = 2 it grows like
 *    log(1/delta) (the flux averages of the gradient cannot all vanish and
 *    1/(n.v) is not integrable); for p < 2 it is Cauchy in delta.
 *  - grazing_blowup_scan: the normal derivative of a specular disk solution
 *    along a grazing approach, via the chain rule through the closed-form
 *    disk derivatives: exponent -1 in alpha when f0 depends on v (the
 *    trajectory-velocity derivative dominates), -1/2 when it does not.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kintrace/disk.hpp"
#include "kintrace/error.hpp"
#include "kintrace/fit.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/parallel.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/trajectory.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

enum class Representation { DensityF, RatioOverSqrtMu, RatioOverMu };

inline const char* to_string(Representation r) {
    switch (r) {
        case Representation::DensityF: return "F";
        case Representation::RatioOverSqrtMu: return "f";
        case Representation::RatioOverMu: return "g";
    }
    return "?";
}

namespace detail {
// multiply a value in representation `from` by this to obtain RatioOverMu
template <std::size_t N>
inline double to_ratio_mu(Representation from, const Vec<N>& v) {
    switch (from) {
        case Representation::DensityF: return std::exp(0.5 * norm2(v));
        case Representation::RatioOverSqrtMu: return std::exp(0.25 * norm2(v));
        case Representation::RatioOverMu: return 1.0;
    }
    return 1.0;
}
template <std::size_t N>
inline double from_ratio_mu(Representation to, const Vec<N>& v) {
    switch (to) {
        case Representation::DensityF: return std::exp(-0.5 * norm2(v));
        case Representation::RatioOverSqrtMu: return std::exp(-0.25 * norm2(v));
        case Representation::RatioOverMu: return 1.0;
    }
    return 1.0;
}
}  // namespace detail

template <std::size_t N>
struct TransportProblem {
    const ConvexDomain<N>* domain = nullptr;
    BcKind bc = BcKind::Specular;
    std::uint64_t seed = 0;  // diffuse resampling seed
    Representation representation = Representation::RatioOverSqrtMu;
    std::function<double(const Vec<N>&, const Vec<N>&)> f0;
    // optional analytic phase-space gradients of f0 (same representation)
    std::function<Vec<N>(const Vec<N>&, const Vec<N>&)> grad_x_f0;
    std::function<Vec<N>(const Vec<N>&, const Vec<N>&)> grad_v_f0;
};

struct TransportMcConfig {
    std::size_t trajectories = 10000;
    std::uint64_t stream = 0;
};

struct TransportValue {
    double value = 0.0;
    double stderr_ = 0.0;  // 0 for deterministic boundary conditions
};

/**
 * Evaluate the transport solution at (t, x, v) in the requested
 * representation (defaults to the problem's own).
 */
template <std::size_t N>
inline TransportValue free_transport_eval(const TransportProblem<N>& pb, double t,
                                          const Vec<N>& x, const Vec<N>& v,
                                          const TransportMcConfig& mc = {},
                                          std::optional<Representation> out_repr = {}) {
    if (t < 0.0) throw ParameterViolation("free_transport_eval: t >= 0");
    const Representation out = out_repr.value_or(pb.representation);
    const ConvexDomain<N>& dom = *pb.domain;
    TransportValue res;

    if (pb.bc != BcKind::Diffuse) {
        const auto cyc = build_cycle(dom, {pb.bc, 0, 0}, PhaseState<N>{t, x, v}, 0.0);
        const auto [X0, V0] = eval_trajectory_closed(cyc, 0.0);
        const double g0 = pb.f0(X0, V0) * detail::to_ratio_mu(pb.representation, V0);
        res.value = g0 * detail::from_ratio_mu(out, v);
        return res;
    }

    // diffuse: Monte-Carlo mean of g0 over the stochastic cycles
    const std::size_t n = mc.trajectories;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto bc = BoundaryCondition::diffuse(pb.seed, CounterRng::stream_id(mc.stream, k));
        const auto cyc = build_cycle(dom, bc, PhaseState<N>{t, x, v}, 0.0);
        const auto [X0, V0] = eval_trajectory_closed(cyc, 0.0);
        const double g0 = pb.f0(X0, V0) * detail::to_ratio_mu(pb.representation, V0);
        sum += g0;
        sum2 += g0 * g0;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    res.value = mean * detail::from_ratio_mu(out, v);
    res.stderr_ = std::sqrt(var / n) * detail::from_ratio_mu(out, v);
    return res;
}

template <std::size_t N>
struct PhaseGradient {
    Vec<N> grad_x{};
    Vec<N> grad_v{};
    Vec<N> stderr_x{};  // paired-difference standard errors (diffuse only)
    Vec<N> stderr_v{};
};

/**
 * Central-difference phase-space gradient. For the diffuse condition every
 * stencil point reuses the same per-trajectory streams (common random
 * numbers), and the standard error of each paired difference is reported.
 */
template <std::size_t N>
inline PhaseGradient<N> fd_phase_gradient(const TransportProblem<N>& pb, double t,
                                          const Vec<N>& x, const Vec<N>& v, double h,
                                          const TransportMcConfig& mc = {}) {
    const ConvexDomain<N>& dom = *pb.domain;
    PhaseGradient<N> out;

    if (pb.bc != BcKind::Diffuse) {
        // a stencil straddling a bounce-count change differentiates across a
        // kink of the flow; detect via the segment index at the endpoint
        const auto base_cyc = build_cycle(dom, {pb.bc, 0, 0}, PhaseState<N>{t, x, v}, 0.0);
        const std::size_t base_l = base_cyc.segment_index(0.0);
        auto eval_checked = [&](const PhaseState<N>& q) {
            const auto cyc = build_cycle(dom, {pb.bc, 0, 0}, q, 0.0);
            if (cyc.segment_index(0.0) != base_l)
                throw SegmentCrossing("fd_phase_gradient: stencil crosses a bounce kink");
            const auto [X0, V0] = eval_trajectory_closed(cyc, 0.0);
            // |V0| = |v| for deterministic reflections, so the value needs no
            // representation conversion
            return pb.f0(X0, V0);
        };
        for (std::size_t i = 0; i < N; ++i) {
            Vec<N> xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            out.grad_x[i] = (eval_checked({t, xp, v}) - eval_checked({t, xm, v})) / (2.0 * h);
            Vec<N> vp = v, vm = v;
            vp[i] += h;
            vm[i] -= h;
            out.grad_v[i] = (eval_checked({t, x, vp}) - eval_checked({t, x, vm})) / (2.0 * h);
        }
        return out;
    }

    const std::size_t n = mc.trajectories;
    auto eval_one = [&](const Vec<N>& xe, const Vec<N>& ve, std::size_t k) {
        const auto bc = BoundaryCondition::diffuse(pb.seed, CounterRng::stream_id(mc.stream, k));
        const auto cyc = build_cycle(dom, bc, PhaseState<N>{t, xe, ve}, 0.0);
        const auto [X0, V0] = eval_trajectory_closed(cyc, 0.0);
        return pb.f0(X0, V0) * detail::to_ratio_mu(pb.representation, V0);
    };
    for (std::size_t i = 0; i < N; ++i) {
        Vec<N> xp = x, xm = x, vp = v, vm = v;
        xp[i] += h;
        xm[i] -= h;
        vp[i] += h;
        vm[i] -= h;
        double sx = 0, sx2 = 0, sv = 0, sv2 = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dx = (eval_one(xp, v, k) - eval_one(xm, v, k)) / (2.0 * h);
            sx += dx;
            sx2 += dx * dx;
            const double dv = (eval_one(x, vp, k) - eval_one(x, vm, k)) / (2.0 * h);
            sv += dv;
            sv2 += dv * dv;
        }
        const double mx = sx / n, mv = sv / n;
        // gradients of g converted to the problem representation at fixed v
        const double conv = detail::from_ratio_mu(pb.representation, v);
        out.grad_x[i] = mx * conv;
        out.grad_v[i] = mv * conv;  // conversion-factor v-derivative excluded: see below
        out.stderr_x[i] = std::sqrt(std::max(0.0, sx2 / n - mx * mx) / n) * conv;
        out.stderr_v[i] = std::sqrt(std::max(0.0, sv2 / n - mv * mv) / n) * conv;
    }
    // v-gradient correction: d/dv [ g(t,x,v) conv(v) ] needs the conv'(v)
    // term; reconstruct it from the centered value.
    if (pb.representation != Representation::RatioOverMu) {
        const double gval = free_transport_eval(pb, t, x, v, mc, Representation::RatioOverMu).value;
        const double conv = detail::from_ratio_mu(pb.representation, v);
        const double fac = pb.representation == Representation::DensityF ? -1.0 : -0.5;
        for (std::size_t i = 0; i < N; ++i) out.grad_v[i] += gval * fac * v[i] * conv;
    }
    return out;
}

// ---------------------------------------------------------------------------

// Smooth radial bump: 1 on [0, inner], 0 on [outer, inf), C^infinity bridge.
inline double smooth_bump(double r, double inner = 0.5, double outer = 0.875) {
    if (r <= inner) return 1.0;
    if (r >= outer) return 0.0;
    const double a = (r - inner) / (outer - inner);
    const double e1 = std::exp(-1.0 / (1.0 - a));
    const double e0 = std::exp(-1.0 / a);
    return e1 / (e1 + e0);
}

// The compact phase-space datum for the sharpness experiment:
// f0(x,v) = bump(|x|) bump(|v|), supported strictly inside the unit ball in
// both position and velocity.
inline TransportProblem<3> diffuse_sharpness_problem(const ConvexDomain<3>& sphere,
                                                     std::uint64_t seed) {
    TransportProblem<3> pb;
    pb.domain = &sphere;
    pb.bc = BcKind::Diffuse;
    pb.seed = seed;
    pb.representation = Representation::RatioOverSqrtMu;
    pb.f0 = [](const Vec3& x, const Vec3& v) { return smooth_bump(norm(x)) * smooth_bump(norm(v)); };
    return pb;
}

struct BoundaryLpConfig {
    double T = 1.0;
    std::size_t outer_points = 5000;     // boundary phase-space samples
    std::size_t inner_trajectories = 36; // common-random-number bundle per point
    double h = 1e-4;                     // interior FD step (outgoing side)
    double h_trace = 0.02;               // boundary-trace FD step (time/tangential)
    std::uint64_t seed = 12345;
    int batches = 20;                    // batch count for slope standard errors
    int workers = 1;
};

struct BoundaryLpPoint {
    double delta = 0.0;
    double integral = 0.0;
    double stderr_ = 0.0;
};

struct BoundaryLpResult {
    double p = 2.0;
    std::vector<BoundaryLpPoint> points;
    double slope_vs_loginvdelta = 0.0;  // fitted over the delta list
    double slope_stderr = 0.0;          // batch standard error of the slope
};

/**
 * Monte-Carlo boundary integral I(delta) = int_0^T int over the gamma
 * measure restricted to |n.v| > delta, |v| < 1/delta of |grad_x f|^p.
 * All delta values share the same samples, so differences across delta have
 * strongly correlated noise; slope errors come from batching.
 *
 * Sampling: |n.v| is drawn log-uniformly on [delta_min, B] with the density
 * divided out -- for p = 2 each octave contributes ~ equally (that is the
 * log divergence under test), so log-uniform allocation is proportional to
 * contribution. Tangential components are Gaussian.
 *
 * Evaluation: on the incoming half the gradient trace is computed through
 * the transport identity
 *     d_n f|_{gamma_-} = - ( d_t f + v_tau . d_tau f ) / (n.v),
 * whose right-hand side involves only flux-average derivatives along the
 * boundary -- smooth quantities with cheap common-random-number finite
 * differences. (A direct interior FD cannot reach the trace: on a curved
 * boundary the 1/(n.v) growth saturates once |n.v| ~ sqrt(depth) |v|.)
 * On the outgoing half the solution comes from the interior and the
 * gradient is a plain interior-point FD. Each derivative is estimated by
 * two independent trajectory half-bundles A/B so that the A.B product is an
 * unbiased estimate of the squared gradient for p = 2.
 */
inline BoundaryLpResult boundary_lp_scan(const TransportProblem<3>& pb, double p, double T,
                                         const std::vector<double>& deltas,
                                         const BoundaryLpConfig& cfg = {}) {
    if (pb.bc != BcKind::Diffuse || pb.domain->tag != DomainTag::Sphere)
        throw ParameterViolation("boundary_lp_scan: diffuse condition on the unit sphere only");
    const ConvexDomain<3>& dom = *pb.domain;
    const double delta_min = *std::min_element(deltas.begin(), deltas.end());
    const double vn_hi = 4.0;  // the Maxwellian truncates the rest
    const double L = std::log(vn_hi / delta_min);
    const double area = 4.0 * M_PI;
    const double h_trace = cfg.h_trace;
    const double s_lo = h_trace, s_hi = T - h_trace;  // keep the time stencil inside [0, T]

    struct Sample {
        double weight_base;
        double abs_nv;
        double vmag;
    };
    std::vector<Sample> samples(cfg.outer_points);

    parallel_for(cfg.outer_points, cfg.workers, [&](std::size_t j) {
        CounterRng rng(cfg.seed, CounterRng::stream_id(0xB11Du, j));
        const double s_time = rng.uniform(s_lo, s_hi);
        const Vec3 xs = rng.unit_vec<3>();
        const double vn = delta_min * std::exp(L * rng.uniform01());
        const bool incoming = rng.uniform01() < 0.5;
        const auto tb = tangent_basis<3>(xs);
        const double t1 = rng.normal(), t2 = rng.normal();
        const Vec3 v = (incoming ? -vn : vn) * xs + t1 * tb[0] + t2 * tb[1];

        const std::uint64_t grad_stream = CounterRng::stream_id(0xC4A1u, j);
        const std::size_t half = std::max<std::size_t>(1, cfg.inner_trajectories / 2);

        // one common-random-number evaluation of gtilde at a phase point,
        // split into bundles A and B
        auto eval_ab = [&](double s_eval, const Vec3& xe, const Vec3& ve) {
            double a = 0.0, b = 0.0;
            for (std::size_t k = 0; k < 2 * half; ++k) {
                const auto bck =
                    BoundaryCondition::diffuse(pb.seed, CounterRng::stream_id(grad_stream, k));
                const auto cyc = build_cycle(dom, bck, PhaseState<3>{s_eval, xe, ve}, 0.0);
                const auto [X0, V0] = eval_trajectory_closed(cyc, 0.0);
                const double g0 = pb.f0(X0, V0) * detail::to_ratio_mu(pb.representation, V0);
                (k < half ? a : b) += g0;
            }
            return std::pair<double, double>{a / half, b / half};
        };

        double grad2_unbiased = 0.0;  // unbiased |grad_x gtilde|^2 (A.B product)
        double grad_norm_biased = 0.0;

        if (incoming) {
            // trace identity: all ingredients are boundary flux-average
            // derivatives, independent of the incoming velocity itself
            auto fd = [&](double ds, const Vec3& dx) {
                const Vec3 xp = ds == 0.0 ? normalized(xs + dx) : xs;
                const Vec3 xm = ds == 0.0 ? normalized(xs - dx) : xs;
                const auto plus = eval_ab(s_time + ds, xp, -1.0 * normalized(xp));
                const auto minus = eval_ab(s_time - ds, xm, -1.0 * normalized(xm));
                const double denom = 2.0 * (ds != 0.0 ? ds : norm(dx));
                return std::pair<double, double>{(plus.first - minus.first) / denom,
                                                 (plus.second - minus.second) / denom};
            };
            const auto dt = fd(h_trace, Vec3{});
            const auto dtau1 = fd(0.0, h_trace * tb[0]);
            const auto dtau2 = fd(0.0, h_trace * tb[1]);
            const double Da = dt.first + t1 * dtau1.first + t2 * dtau2.first;
            const double Db = dt.second + t1 * dtau1.second + t2 * dtau2.second;
            grad2_unbiased = Da * Db / (vn * vn) + dtau1.first * dtau1.second +
                             dtau2.first * dtau2.second;
            const double Dm = 0.5 * (Da + Db);
            const double g1 = 0.5 * (dtau1.first + dtau1.second);
            const double g2 = 0.5 * (dtau2.first + dtau2.second);
            grad_norm_biased = std::sqrt(Dm * Dm / (vn * vn) + g1 * g1 + g2 * g2);
        } else {
            // outgoing: interior-point central differences
            const double h = cfg.h;
            const Vec3 x_eval = (1.0 - 2.0 * h) * xs;
            Vec3 ga{}, gb{};
            for (std::size_t i = 0; i < 3; ++i) {
                Vec3 xp = x_eval, xm = x_eval;
                xp[i] += h;
                xm[i] -= h;
                const auto plus = eval_ab(s_time, xp, v);
                const auto minus = eval_ab(s_time, xm, v);
                ga[i] = (plus.first - minus.first) / (2.0 * h);
                gb[i] = (plus.second - minus.second) / (2.0 * h);
            }
            grad2_unbiased = dot(ga, gb);
            grad_norm_biased = norm(0.5 * (ga + gb));
        }

        Sample s;
        const double vtau2 = t1 * t1 + t2 * t2;
        const double mu_v = std::exp(-0.5 * (vn * vn + vtau2));
        const double grad_p =
            (p == 2.0) ? grad2_unbiased : std::pow(grad_norm_biased, p);
        s.weight_base = vn * vn * std::exp(0.5 * vtau2) * std::pow(mu_v, 0.5 * p) * grad_p;
        s.abs_nv = vn;
        s.vmag = norm(v);
        samples[j] = s;
    });

    BoundaryLpResult out;
    out.p = p;
    const double scale =
        (s_hi - s_lo) * area * 2.0 * (2.0 * M_PI) * L / static_cast<double>(cfg.outer_points);
    std::vector<std::vector<double>> batch_I(deltas.size(),
                                             std::vector<double>(cfg.batches, 0.0));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const int b = static_cast<int>(j % cfg.batches);
        for (std::size_t d = 0; d < deltas.size(); ++d) {
            if (samples[j].abs_nv > deltas[d] && samples[j].vmag < 1.0 / deltas[d])
                batch_I[d][b] += samples[j].weight_base;
        }
    }
    std::vector<double> lx;
    std::vector<std::vector<double>> batch_vals(cfg.batches);
    for (std::size_t d = 0; d < deltas.size(); ++d) {
        double tot = 0.0;
        for (double b : batch_I[d]) tot += b;
        BoundaryLpPoint pt;
        pt.delta = deltas[d];
        pt.integral = tot * scale;
        double bm = 0.0, bv = 0.0;
        for (int b = 0; b < cfg.batches; ++b) {
            const double Ib = batch_I[d][b] * scale * cfg.batches;
            bm += Ib;
            batch_vals[b].push_back(Ib);
        }
        bm /= cfg.batches;
        for (int b = 0; b < cfg.batches; ++b) {
            const double Ib = batch_I[d][b] * scale * cfg.batches;
            bv += (Ib - bm) * (Ib - bm);
        }
        pt.stderr_ = std::sqrt(bv / (cfg.batches * (cfg.batches - 1.0)));
        out.points.push_back(pt);
        lx.push_back(std::log(1.0 / deltas[d]));
    }
    // slope of I vs log(1/delta), batch standard error
    std::vector<double> slopes;
    for (int b = 0; b < cfg.batches; ++b) slopes.push_back(fit_line(lx, batch_vals[b]).slope);
    double sm = 0.0, sv = 0.0;
    for (double s : slopes) sm += s;
    sm /= slopes.size();
    for (double s : slopes) sv += (s - sm) * (s - sm);
    out.slope_vs_loginvdelta = sm;
    out.slope_stderr = std::sqrt(sv / (slopes.size() * (slopes.size() - 1.0)));
    return out;
}

struct BlowupScanConfig {
    double t = 2.0;
    double alpha_lo = 1e-7;
    double alpha_hi = 1e-3;  // the crossover region above ~1e-2 contaminates fits
    int points = 9;
    double s_window = 0.2;  // sup of |d_n f| over s in [0, window]
    int s_samples = 6;
};

struct BlowupScan {
    LineFit fit;
    std::vector<double> alphas;
    std::vector<double> dnf;
};

/**
 * Exponent of |d_n f(t,x,v)| vs alpha along a grazing approach on the unit
 * disk with specular reflection, via the chain rule through the closed-form
 * disk trajectory derivatives. Requires analytic f0 gradients.
 */
inline BlowupScan grazing_blowup_scan(const TransportProblem<2>& pb,
                                      const BlowupScanConfig& cfg = {}) {
    if (pb.bc != BcKind::Specular || pb.domain->tag != DomainTag::Disk2D)
        throw ParameterViolation("grazing_blowup_scan: specular disk only");
    if (!pb.grad_x_f0)
        throw ParameterViolation("grazing_blowup_scan: analytic grad_x f0 required");
    BlowupScan out;
    const auto& dom = *pb.domain;
    for (int k = 0; k < cfg.points; ++k) {
        const double frac = cfg.points > 1 ? static_cast<double>(k) / (cfg.points - 1) : 0.0;
        const double alpha_target = std::exp(std::log(cfg.alpha_hi) +
                                             frac * (std::log(cfg.alpha_lo) - std::log(cfg.alpha_hi)));
        // coupled grazing approach: alpha = 4 (vn^2 + (1-r^2) vt^2) = 8 vn^2
        const double vn = std::sqrt(alpha_target / 8.0);
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const Vec2 n{1, 0}, tv{0, 1};
        const PhaseState<2> st{cfg.t, r * n, -vn * n + vt * tv};

        double sup = 0.0;
        for (int si = 0; si < cfg.s_samples; ++si) {
            const double s = cfg.s_window * si / std::max(1, cfg.s_samples - 1);
            const auto d = disk_normal_derivatives(st, s);
            const Vec2 gx = pb.grad_x_f0(d.X, d.V);
            double dnf = dot(gx, d.dX_dr);
            if (pb.grad_v_f0) dnf += dot(pb.grad_v_f0(d.X, d.V), d.dV_dr);
            sup = std::max(sup, std::fabs(dnf));
        }
        out.alphas.push_back(kinetic_distance(dom, st.x, st.v));
        out.dnf.push_back(sup);
    }
    std::size_t positive = 0;
    for (double d : out.dnf) positive += d > 0.0 ? 1 : 0;
    if (positive >= 2) out.fit = fit_loglog(out.alphas, out.dnf);
    return out;
}

}  // namespace kintrace
