// Regenerates the frozen calibration constants in kintrace/calibration.hpp.
// Run after changing domain definitions or solver tolerances, then update the
// header by hand (the values are deliberately pinned, not computed at build
// time, so that regressions are visible).

#include <algorithm>
#include <cstdio>
#include <vector>

#include "kintrace/disk.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/jacobian.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/nonlocal.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/trajectory.hpp"

using namespace kintrace;

namespace {

template <std::size_t N>
void exit_bounds(const ConvexDomain<N>& dom, const char* name, int samples) {
    CounterRng rng(1001, CounterRng::stream_id(7));
    double lo = 1e300, hi = 0.0;
    int used = 0;
    for (int i = 0; i < samples; ++i) {
        // backward-entering boundary state
        Vec<N> x = dom.project_to_boundary(dom.sample_interior(rng) * 1.0);
        Vec<N> v = rng.template ball<N>(5.0);
        const Vec<N> n = outward_normal(dom, x);
        if (dot(v, n) < 0.0) v = v - 2.0 * dot(v, n) * n;
        const double nv = dot(v, n);
        if (nv < 1e-6 * norm(v) || norm(v) < 1e-3) continue;
        const auto e = backward_exit_time(dom, x, v);
        const double a = kinetic_distance(dom, x, v);
        if (a <= 0.0) continue;
        const double ratio = e.t_b * norm2(v) / std::sqrt(a);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        ++used;
    }
    std::printf("exit bounds %-10s: c1 = %.6f  c2 = %.6f  (used %d)\n", name, lo, hi, used);
}

template <std::size_t N>
void vl_rate(const ConvexDomain<N>& dom, const char* name, int trajectories) {
    CounterRng rng(2002, CounterRng::stream_id(9));
    std::vector<double> rates;
    for (int i = 0; i < trajectories; ++i) {
        PhaseState<N> st;
        st.t = 2.0;
        st.x = dom.sample_interior(rng, -1e-9);
        st.v = rng.template ball<N>(5.0);
        if (norm(st.v) < 1e-2) continue;
        if (kinetic_distance(dom, st.x, st.v) < 1e-10) continue;
        const BcKind kind = (i % 2 == 0) ? BcKind::Specular : BcKind::BounceBack;
        Cycle<N> cyc;
        try {
            cyc = build_cycle(dom, {kind, 0, 0}, st, 0.0, 200000);
        } catch (const KintraceError&) {
            continue;
        }
        const double s1 = rng.uniform(1.2, 2.0), s2 = rng.uniform(0.0, 0.8);
        try {
            const auto cert = velocity_lemma_certificate(dom, cyc, s1, s2, 1e300);
            rates.push_back(cert.implied_rate);
        } catch (const KintraceError&) {
        }
    }
    std::sort(rates.begin(), rates.end());
    const auto pct = [&](double q) { return rates[static_cast<std::size_t>(q * (rates.size() - 1))]; };
    std::printf(
        "velocity-lemma %-10s: n=%zu median=%.3e p99=%.3e p999=%.3e max=%.3e  -> freeze %.6f\n",
        name, rates.size(), pct(0.5), pct(0.99), pct(0.999), rates.back(), pct(0.999) * 1.2);
}

void bounce_gap_disk() {
    // |t^l - t^{l+1}| |v| vs the grazing ratio r^l across a grazing scan
    double lo = 1e300, hi = 0.0;
    for (double vn = 0.3; vn > 1e-6; vn *= 0.3) {
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const double gap = 2.0 * std::sqrt(2.0) * vn;  // chord gap at |v| = 1
        const PhaseState<2> st{1.0, Vec2{r, 0}, Vec2{-vn, vt}};
        const auto cyc = disk_specular_cycle(st, 1.0 - 34.0 * gap, 400);
        for (std::size_t l = 1; l + 1 < cyc.entries.size(); ++l) {
            const double gap = (cyc.entries[l].t - cyc.entries[l + 1].t) * 1.0;
            const double ratio = gap / cyc.entries[l].r;
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
    }
    std::printf("disk bounce gap / grazing ratio: [%.6f, %.6f] (chord geometry gives 2)\n", lo, hi);
}

void bounce_count_disk() {
    double lo = 1e300, hi = 0.0;
    const auto dsk = ConvexDomain<2>::disk(1.0);
    for (double vn = 0.3; vn > 1e-3; vn *= 0.3) {
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const PhaseState<2> st{3.0, Vec2{r, 0}, Vec2{-vn, vt}};
        const auto cyc = disk_specular_cycle(st, 0.0, 2000000);
        for (double s : {0.0, 0.7, 1.4}) {
            const auto rep = bounce_count(dsk, cyc, s, 0.0);
            if (rep.l_star < 2) continue;
            lo = std::min(lo, rep.ratio);
            hi = std::max(hi, rep.ratio);
        }
    }
    std::printf("disk bounce-count ratio over grazing scan: [%.6f, %.6f]\n", lo, hi);
}

void dvt_bound_disk() {
    double hi = 0.0;
    for (double vn = 0.1; vn > 0.9e-5; vn *= 0.5) {
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const PhaseState<2> st{2.0, Vec2{r, 0}, Vec2{-vn, vt}};
        for (double s = 0.0; s < 0.21; s += 0.04)
            hi = std::max(hi, norm(disk_normal_derivatives(st, s).dX_dvt));
    }
    std::printf("disk |dX/dvt| sup over grazing scan (|v| = 1): %.6f\n", hi);
}

void nonlocal_bounds() {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    const Vec3 u = normalized(Vec3{0.3, -0.5, 0.81});
    const auto tb = tangent_basis<3>(u);
    const Vec3 v = normalized(0.6 * u + 0.8 * tb[0]);
    for (double beta : {0.75, 1.0, 1.25}) {
        NonlocalParams par;
        par.beta = beta;
        par.l_rate = 20.0;
        double ulo = 1e300, uhi = 0.0, dlo = 1e300, dhi = 0.0;
        for (double depth : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
            const Vec3 X = (1.0 - depth) * u;
            const auto r = grazing_u_integral(sph, X, v, par);
            ulo = std::min(ulo, r.ratio);
            uhi = std::max(uhi, r.ratio);
        }
        for (double alpha_t : {1e-2, 1e-3, 1e-4, 1e-5}) {
            const auto state = sphere_grazing_state(alpha_t, u);
            const auto d = dynamical_nonlocal_integral(sph, DeterministicBc::Specular, state, par);
            dlo = std::min(dlo, d.ratio);
            dhi = std::max(dhi, d.ratio);
        }
        std::printf("nonlocal beta=%.2f: u-ratio [%.4f, %.4f] spread %.2f | dyn-ratio [%.4f, %.4f] spread %.2f\n",
                    beta, ulo, uhi, uhi / ulo, dlo, dhi, dhi / dlo);
    }
}

}  // namespace

int main() {
    exit_bounds(ConvexDomain<3>::sphere(1.0), "sphere", 100000);
    exit_bounds(ConvexDomain<3>::ellipsoid(2, 1, 1), "ellipsoid", 100000);
    exit_bounds(ConvexDomain<3>::quartic_ball(0.1), "quartic", 100000);
    exit_bounds(ConvexDomain<2>::disk(1.0), "disk", 100000);

    vl_rate(ConvexDomain<3>::sphere(1.0), "sphere", 4000);
    vl_rate(ConvexDomain<3>::ellipsoid(2, 1, 1), "ellipsoid", 4000);
    vl_rate(ConvexDomain<2>::disk(1.0), "disk", 4000);
    vl_rate(ConvexDomain<3>::quartic_ball(0.1), "quartic", 20000);

    bounce_gap_disk();
    bounce_count_disk();
    dvt_bound_disk();
    nonlocal_bounds();
    return 0;
}
