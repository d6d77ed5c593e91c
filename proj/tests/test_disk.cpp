#include <doctest.h>

#include <cmath>
#include <vector>

#include "kintrace/calibration.hpp"
#include "kintrace/disk.hpp"
#include "kintrace/fit.hpp"
#include "kintrace/geometry.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/trajectory.hpp"

using namespace kintrace;

TEST_CASE("disk cycle closed-form spot values") {
    const PhaseState<2> st{1.0, Vec2{0.5, 0}, Vec2{0, 1}};
    const auto cyc = disk_specular_cycle(st, -10.0, 8);

    const double tb = std::sqrt(0.75);
    CHECK(cyc.entries[1].t == doctest::Approx(1.0 - tb).epsilon(1e-12));
    // uniform bounce gap 2 sqrt((1-r^2) vt^2 + vn^2) / |v|^2
    CHECK(cyc.entries[1].t - cyc.entries[2].t == doctest::Approx(2.0 * tb).epsilon(1e-12));
    CHECK(cyc.entries[2].t - cyc.entries[3].t == doctest::Approx(2.0 * tb).epsilon(1e-12));

    // grazing limit: t - t^1 -> 0 as vn -> 0, r -> 1
    const PhaseState<2> gz{1.0, Vec2{0.99999, 0}, Vec2{1e-7, 1}};
    const auto gcyc = disk_specular_cycle(gz, 0.9999, 40000);
    CHECK(gz.t - gcyc.entries[1].t < 2e-2);

    CHECK_THROWS_AS((void)disk_specular_cycle(PhaseState<2>{1.0, Vec2{0, 0}, Vec2{1, 0}}, 0.0),
                    CenterDegenerate);
}

TEST_CASE("analytic disk cycle matches the iterative cycle") {
    const auto dsk = ConvexDomain<2>::disk(1.0);
    CounterRng rng(91, 0);
    int tested = 0;
    for (int i = 0; i < 150; ++i) {
        PhaseState<2> st;
        st.t = 1.0;
        st.x = dsk.sample_interior(rng, -1e-4);
        if (norm(st.x) < 1e-3) continue;
        st.v = rng.ball<2>(3.0);
        if (norm(st.v) < 0.1) continue;
        const double a = kinetic_distance(dsk, st.x, st.v);
        if (a < 1e-8) continue;

        // horizon deep enough for ~100 bounces
        const auto probe = detail::disk_terms(st);
        const double s_min = st.t - (probe.r * probe.vn + 201.0 * probe.Q) / probe.V2 - 0.1;

        Cycle<2> ana, itr;
        try {
            ana = disk_specular_cycle(st, s_min, 120);
        } catch (const BounceCapExceeded<2>& e) {
            ana = e.partial;
        }
        try {
            itr = build_cycle(dsk, BoundaryCondition::specular(), st, s_min, 120);
        } catch (const BounceCapExceeded<2>& e) {
            itr = e.partial;
        }
        const std::size_t L = std::min(ana.entries.size(), itr.entries.size());
        REQUIRE(L >= 2);
        for (std::size_t l = 1; l < L; ++l) {
            CHECK(std::fabs(ana.entries[l].t - itr.entries[l].t) < 1e-8);
            CHECK(norm(ana.entries[l].x - itr.entries[l].x) < 1e-8);
            CHECK(norm(ana.entries[l].v - itr.entries[l].v) < 1e-8);
        }
        ++tested;
    }
    CHECK(tested > 80);
}

namespace {

// FD of the disk trajectory in the four polar directions, via the iterative
// cycle (independent of the closed forms under test).
struct PolarFd {
    Vec2 dX[4], dV[4];
    Vec2 X, V;
};

PolarFd disk_fd(const PhaseState<2>& st, double s, double h) {
    const auto dsk = ConvexDomain<2>::disk(1.0);
    const DiskPolar p = disk_polar(st.x, st.v);
    // directions: r and theta move the position (Cartesian v held fixed);
    // vn and vt move the velocity along the frame at the base theta
    const Vec2 n{std::cos(p.theta), std::sin(p.theta)};
    const Vec2 t{-n[1], n[0]};
    auto perturbed = [&](int k, double sgn) {
        PhaseState<2> q = st;
        switch (k) {
            case 0: q.x = (p.r + sgn * h) * n; break;
            case 1: {
                const double th = p.theta + sgn * h;
                q.x = p.r * Vec2{std::cos(th), std::sin(th)};
                break;
            }
            case 2: q.v = st.v + (sgn * h) * n; break;
            case 3: q.v = st.v + (sgn * h) * t; break;
        }
        return q;
    };
    auto eval = [&](const PhaseState<2>& q) {
        const auto cyc = build_cycle(dsk, BoundaryCondition::specular(), q, s - 1.0, 100000);
        return eval_trajectory(cyc, s);
    };
    PolarFd out;
    const auto base = eval(st);
    out.X = base.first;
    out.V = base.second;
    for (int k = 0; k < 4; ++k) {
        const auto plus = eval(perturbed(k, 1.0));
        const auto minus = eval(perturbed(k, -1.0));
        out.dX[k] = (plus.first - minus.first) / (2.0 * h);
        out.dV[k] = (plus.second - minus.second) / (2.0 * h);
    }
    return out;
}

}  // namespace

TEST_CASE("disk derivative bundle matches finite differences of the iterative cycle") {
    CounterRng rng(97, 0);
    int tested = 0;
    for (int i = 0; i < 120 && tested < 25; ++i) {
        // moderate states, vt > 0 so no mirroring, away from grazing
        const double r = rng.uniform(0.2, 0.9);
        const double th = rng.uniform(-3.0, 3.0);
        const double vn = rng.uniform(-1.5, 1.5);
        const double vt = rng.uniform(0.3, 1.5);
        const Vec2 n{std::cos(th), std::sin(th)};
        const Vec2 tv{-n[1], n[0]};
        const PhaseState<2> st{2.0, r * n, vn * n + vt * tv};
        const double s = 0.3;

        DiskDerivatives an;
        PolarFd fd;
        try {
            an = disk_normal_derivatives(st, s);
            fd = disk_fd(st, s, 1e-6);
        } catch (const KintraceError&) {
            continue;
        }
        if (norm(an.X - fd.X) > 1e-9 || norm(an.V - fd.V) > 1e-9) continue;
        const Vec2* ana[4] = {&an.dX_dr, &an.dX_dtheta, &an.dX_dvn, &an.dX_dvt};
        const Vec2* anv[4] = {&an.dV_dr, &an.dV_dtheta, &an.dV_dvn, &an.dV_dvt};
        bool crossed = false;
        for (int k = 0; k < 4 && !crossed; ++k)
            if (norm(*ana[k] - fd.dX[k]) > 1e-3 * (1.0 + norm(fd.dX[k]))) crossed = true;
        if (crossed) continue;  // stencil crossed a bounce; resample
        for (int k = 0; k < 4; ++k) {
            CHECK(norm(*ana[k] - fd.dX[k]) < 2e-4 * (1.0 + norm(fd.dX[k])));
            CHECK(norm(*anv[k] - fd.dV[k]) < 2e-4 * (1.0 + norm(fd.dV[k])));
        }
        ++tested;
    }
    CHECK(tested >= 20);
}

TEST_CASE("grazing asymptotics of the disk normal derivatives") {
    // grazing approach: vn -> 0 with r -> 1 coupled so that both terms of
    // alpha = 4 (vn^2 + (1-r^2) vt^2) shrink together (a fixed r floors
    // alpha at 4 (1-r^2) vt^2 and the asymptotic regime is never reached)
    std::vector<double> alphas, dnV, dnX, dnXtan, dvtX;
    const double t = 2.0;
    const auto dsk = ConvexDomain<2>::disk(1.0);
    for (double vn_mag = 1e-1; vn_mag > 0.9e-5; vn_mag *= 0.5) {
        const double vt = std::sqrt(1.0 - vn_mag * vn_mag);
        const double r = std::sqrt(1.0 - vn_mag * vn_mag / (vt * vt));
        const Vec2 n{1, 0}, tv{0, 1};
        const PhaseState<2> st{t, r * n, -vn_mag * n + vt * tv};
        // sup over a small window of s: the prefactors oscillate with the
        // phase of s inside its bounce segment
        double mV = 0.0, mX = 0.0, mXt = 0.0, mvt = 0.0;
        for (double s = 0.0; s < 0.21; s += 0.04) {
            const auto d = disk_normal_derivatives(st, s);
            mV = std::max(mV, std::fabs(d.dnV_normal));
            mX = std::max(mX, d.dnX_norm);
            mXt = std::max(mXt, std::fabs(d.dnX_tangential));
            mvt = std::max(mvt, norm(d.dX_dvt));
        }
        alphas.push_back(kinetic_distance(dsk, st.x, st.v));
        dnV.push_back(mV);
        dnX.push_back(mX);
        dnXtan.push_back(mXt);
        dvtX.push_back(mvt);
    }
    const auto fV = fit_loglog(alphas, dnV);
    const auto fX = fit_loglog(alphas, dnX);
    CHECK(fV.slope == doctest::Approx(-1.0).epsilon(0.10));
    CHECK(fX.slope == doctest::Approx(-0.5).epsilon(0.20));
    // the tangential projection of d_n X stays bounded: the growth is carried
    // by the normal component
    for (double m : dnXtan) CHECK(m < 50.0);
    // |d X / d v_t| <= C / |v| uniformly across the scan
    for (double m : dvtX) CHECK(m < 10.0);
}

TEST_CASE("bounce-gap law: gap times speed tracks the grazing ratio") {
    // on the disk the chord time satisfies (t^l - t^{l+1}) |v| = 2 r^l
    // exactly; the frozen band brackets the geometric constant 2
    for (double vn = 0.3; vn > 1e-5; vn *= 0.2) {
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const PhaseState<2> st{1.0, Vec2{r, 0}, Vec2{-vn, vt}};
        const double gap_est = 2.0 * std::sqrt(2.0) * vn;
        const auto cyc = disk_specular_cycle(st, 1.0 - 30.0 * gap_est, 400);
        for (std::size_t l = 1; l + 1 < cyc.entries.size(); ++l) {
            const double gap = cyc.entries[l].t - cyc.entries[l + 1].t;
            const double ratio = gap * 1.0 / cyc.entries[l].r;
            CHECK(ratio >= calibration::disk_gap_ratio_lo);
            CHECK(ratio <= calibration::disk_gap_ratio_hi);
        }
    }
}

TEST_CASE("bounce-count ratio stays within the frozen band on grazing scans") {
    const auto dsk = ConvexDomain<2>::disk(1.0);
    for (double vn = 0.3; vn > 1e-3; vn *= 0.3) {
        const double vt = std::sqrt(1.0 - vn * vn);
        const double r = std::sqrt(1.0 - vn * vn / (vt * vt));
        const PhaseState<2> st{3.0, Vec2{r, 0}, Vec2{-vn, vt}};
        const auto cyc = disk_specular_cycle(st, 0.0, 2000000);
        for (double s : {0.0, 0.7, 1.4}) {
            const auto rep = bounce_count(dsk, cyc, s, 0.0);
            if (rep.l_star < 2) continue;
            CHECK(rep.ratio <= calibration::disk_bounce_count_ratio_max);
            CHECK(rep.ratio > 0.3);
        }
    }
}
