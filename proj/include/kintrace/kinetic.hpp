#pragma once

// Kinetic distance toward the grazing set and its transport derivative.
//
//   alpha(x,v) = |v . grad xi(x)|^2 - 2 { v . Hess xi(x) . v } xi(x)
//
// alpha is nonnegative on the closure (xi <= 0 and the Hessian form is
// positive), vanishes exactly on the grazing set, and satisfies
//   v . grad_x alpha = -2 { v . D^3 xi(x) . v . v } xi(x),
// so it is conserved along free flight whenever xi is quadratic. The decay
// rate varpi is the phase-space maximum of the quotient
//   2 v{v . D^3 xi . v} xi / (alpha <v>),
// estimated by sampling; e^{-varpi <v> t} alpha is then monotone along the
// flow up to sampling error.

#include <cmath>
#include <cstdint>

#include "kintrace/error.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

template <std::size_t N>
inline double kinetic_distance(const ConvexDomain<N>& dom, const Vec<N>& x, const Vec<N>& v) {
    const double f = dom.xi(x);
    if (f > dom.boundary_tol()) throw OutsideDomain("kinetic_distance: xi(x) > tolerance");
    const double gv = dot(v, dom.grad_xi(x));
    const double a = gv * gv - 2.0 * quad_form(dom.hess_xi(x), v) * f;
    if (a < 0.0) {
        const double v2 = norm2(v);
        if (a >= -1e-14 * v2 * v2) return 0.0;  // round-off at the grazing set
        return a;  // cannot occur on a convex domain; surfaced for tests
    }
    return a;
}

// v . grad_x alpha, evaluated from the third-derivative contraction.
template <std::size_t N>
inline double kinetic_distance_transport(const ConvexDomain<N>& dom, const Vec<N>& x,
                                         const Vec<N>& v) {
    const double f = dom.xi(x);
    if (f > dom.boundary_tol()) throw OutsideDomain("kinetic_distance_transport: xi(x) > tol");
    return -2.0 * contract3(dom.third_xi(x), v) * f;
}

template <std::size_t N>
inline double weighted_kinetic_distance(const ConvexDomain<N>& dom, double varpi, double t,
                                        const Vec<N>& x, const Vec<N>& v) {
    return std::exp(-varpi * bracket(v) * t) * kinetic_distance(dom, x, v);
}

// Distance diagnostics at a phase point: the kinetic distance, the decay
// rate in force, the decayed distance e^{-varpi <v> t} alpha, and the frozen
// two-sided rate constant the certificates compare against.
struct KineticWeight {
    double alpha = 0.0;
    double varpi = 0.0;
    double weighted = 0.0;
    double vl_constant = 0.0;
};

template <std::size_t N>
inline KineticWeight kinetic_weight(const ConvexDomain<N>& dom, const PhaseState<N>& st,
                                    double varpi, double vl_constant) {
    KineticWeight w;
    w.alpha = kinetic_distance(dom, st.x, st.v);
    w.varpi = varpi;
    w.weighted = std::exp(-varpi * st.vbracket() * st.t) * w.alpha;
    w.vl_constant = vl_constant;
    return w;
}

struct VarpiEstimate {
    double varpi = 0.0;          // sample max of the quotient, x 1.1 safety, clamped at 0
    double raw_max = 0.0;        // signed sample max before safety factor
    std::size_t skipped = 0;     // samples below the alpha floor
    std::size_t used = 0;
    // where the max was attained (reported, not asserted, since the true max
    // may sit on the grazing set itself)
    std::array<double, 3> argmax_x{};
    std::array<double, 3> argmax_v{};
};

// Monte-Carlo estimate of the decay-rate threshold. Quadratic builtins have a
// vanishing quotient and return exactly 0.
template <std::size_t N>
inline VarpiEstimate varpi_threshold(const ConvexDomain<N>& dom, std::size_t sample_count,
                                     std::uint64_t seed = 11, double v_max = 5.0,
                                     double alpha_floor = 1e-8) {
    if (sample_count < 1) throw ParameterViolation("varpi_threshold: sample_count >= 1");
    VarpiEstimate est;
    if (dom.tag == DomainTag::Sphere || dom.tag == DomainTag::Ellipsoid ||
        dom.tag == DomainTag::Disk2D) {
        return est;  // quadratic xi: numerator is identically zero
    }
    CounterRng rng(seed, CounterRng::stream_id(0x7A9D1u));
    double best = -1e300;
    for (std::size_t k = 0; k < sample_count; ++k) {
        const Vec<N> x = dom.sample_interior(rng);
        const Vec<N> v = rng.template ball<N>(v_max);
        const double a = kinetic_distance(dom, x, v);
        if (a < alpha_floor) {
            ++est.skipped;
            continue;
        }
        ++est.used;
        const double q = 2.0 * contract3(dom.third_xi(x), v) * dom.xi(x) / (a * bracket(v));
        if (q > best) {
            best = q;
            for (std::size_t i = 0; i < N; ++i) {
                est.argmax_x[i] = x[i];
                est.argmax_v[i] = v[i];
            }
        }
    }
    est.raw_max = best;
    est.varpi = std::max(0.0, best) * 1.1;
    return est;
}

}  // namespace kintrace
