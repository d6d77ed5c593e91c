#include <doctest.h>

#include <cmath>

#include "kintrace/geometry.hpp"
#include "kintrace/kinetic.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/trajectory.hpp"

using namespace kintrace;

TEST_CASE("kinetic distance closed-form values on the unit sphere") {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    CHECK(kinetic_distance(sph, Vec3{1, 0, 0}, Vec3{0, 1, 0}) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(kinetic_distance(sph, Vec3{1, 0, 0}, Vec3{1, 0, 0}) == doctest::Approx(4.0));
    // 0 - 2 (2 |v|^2) (0.25 - 1) = 3
    CHECK(kinetic_distance(sph, Vec3{0.5, 0, 0}, Vec3{0, 1, 0}) == doctest::Approx(3.0));
    CHECK_THROWS_AS((void)kinetic_distance(sph, Vec3{2, 0, 0}, Vec3{1, 0, 0}), OutsideDomain);
}

TEST_CASE("kinetic distance is nonnegative and vanishes only at grazing") {
    const auto qrt = ConvexDomain<3>::quartic_ball(0.1);
    CounterRng rng(31, 0);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 x = qrt.sample_interior(rng);
        const Vec3 v = rng.ball<3>(5.0);
        const double a = kinetic_distance(qrt, x, v);
        CHECK(a >= 0.0);
        // interior points with |v| > 0 are never grazing
        if (qrt.xi(x) < -1e-3 && norm(v) > 1e-2) CHECK(a > 0.0);
    }
    // grazing boundary state: alpha = 0
    const Vec3 xb = qrt.project_to_boundary(Vec3{0.7, 0.3, 0.1});
    const Vec3 n = outward_normal(qrt, xb);
    const auto tb = tangent_basis<3>(n);
    CHECK(kinetic_distance(qrt, xb, tb[0]) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("alpha is bounded by a domain constant times |v|^2") {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    const auto qrt = ConvexDomain<3>::quartic_ball(0.1);
    CounterRng rng(37, 0);
    auto worst = [&](const ConvexDomain<3>& dom) {
        double w = 0.0;
        for (int i = 0; i < 5000; ++i) {
            const Vec3 x = dom.sample_interior(rng);
            const Vec3 v = rng.ball<3>(8.0);
            const double v2 = norm2(v);
            if (v2 < 1e-12) continue;
            w = std::max(w, kinetic_distance(dom, x, v) / v2);
        }
        return w;
    };
    // |v.grad xi|^2 <= |grad xi|^2 |v|^2 and 2|xi| (v.Hess.v) <= c |v|^2 on
    // bounded domains: the ratio must stay below a modest constant.
    CHECK(worst(sph) < 20.0);
    CHECK(worst(qrt) < 40.0);
}

TEST_CASE("transport derivative: zero for quadratic xi, matches FD on the quartic ball") {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    const auto ell = ConvexDomain<3>::ellipsoid(2, 1, 1);
    const auto qrt = ConvexDomain<3>::quartic_ball(0.1);

    CHECK(kinetic_distance_transport(sph, Vec3{0.3, 0.2, -0.4}, Vec3{1, 2, 0.5}) == 0.0);
    CHECK(kinetic_distance_transport(ell, Vec3{0.3, 0.2, -0.4}, Vec3{1, 2, 0.5}) == 0.0);

    CounterRng rng(41, 0);
    for (int i = 0; i < 200; ++i) {
        const Vec3 x = qrt.sample_interior(rng, -1e-3);
        const Vec3 v = rng.ball<3>(3.0);
        if (norm(v) < 0.1) continue;
        const double h = 1e-6;
        const Vec3 dv = h * v;
        const double fd =
            (kinetic_distance(qrt, x + dv, v) - kinetic_distance(qrt, x - dv, v)) / (2.0 * h);
        const double an = kinetic_distance_transport(qrt, x, v);
        const double scale = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        CHECK(std::fabs(fd - an) / scale < 1e-5);
    }
    // anchored state for regression
    const double an = kinetic_distance_transport(qrt, Vec3{0.5, 0, 0}, Vec3{1, 0, 0});
    const double h = 1e-6;
    const double fd = (kinetic_distance(qrt, Vec3{0.5 + h, 0, 0}, Vec3{1, 0, 0}) -
                       kinetic_distance(qrt, Vec3{0.5 - h, 0, 0}, Vec3{1, 0, 0})) /
                      (2.0 * h);
    CHECK(an == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("varpi threshold: zero on quadratic builtins, seed-stable on the quartic ball") {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    const auto ell = ConvexDomain<3>::ellipsoid(2, 1, 1);
    CHECK(varpi_threshold(sph, 1000).varpi == 0.0);
    CHECK(varpi_threshold(ell, 1000).varpi == 0.0);

    const auto qrt = ConvexDomain<3>::quartic_ball(0.1);
    const auto e1 = varpi_threshold(qrt, 100000, 11);
    const auto e2 = varpi_threshold(qrt, 100000, 12);
    CHECK(e1.varpi > 0.0);
    CHECK(std::fabs(e1.varpi - e2.varpi) / e1.varpi < 0.10);
    CHECK(e1.used > 0);
}

TEST_CASE("decayed distance decreases backward in time once varpi dominates") {
    // with varpi above the sampled transport-quotient threshold, the value
    // e^{-varpi <v> (t-s)} alpha(X(s), V(s)) never exceeds alpha(t) along
    // backward trajectories (up to the sampling margin of the threshold)
    const auto qrt = ConvexDomain<3>::quartic_ball(0.1);
    const double varpi = varpi_threshold(qrt, 100000, 11).varpi * 1.1;
    REQUIRE(varpi > 0.0);

    CounterRng rng(141, 0);
    double worst = 0.0;
    int tested = 0;
    for (int i = 0; i < 200 && tested < 120; ++i) {
        PhaseState<3> st;
        st.t = 2.0;
        st.x = qrt.sample_interior(rng, -1e-6);
        st.v = rng.ball<3>(5.0);
        const double a0 = kinetic_distance(qrt, st.x, st.v);
        if (a0 < 1e-6 || norm(st.v) < 0.05) continue;
        Cycle<3> cyc;
        try {
            cyc = build_cycle(qrt, BoundaryCondition::specular(), st, 0.0, 100000);
        } catch (const GrazingStall&) {
            continue;
        }
        const double vb = st.vbracket();
        for (double s : {1.7, 1.2, 0.6, 0.1}) {
            try {
                const auto [xs, vs] = eval_trajectory(cyc, s);
                const double decayed =
                    std::exp(-varpi * vb * (st.t - s)) * kinetic_distance(qrt, xs, vs);
                worst = std::max(worst, decayed / a0);
            } catch (const AtBounceTime&) {
            }
        }
        ++tested;
    }
    CHECK(tested >= 120);
    CHECK(worst <= 1.0 + 1e-3);
}

TEST_CASE("kinetic weight bundle") {
    const auto sph = ConvexDomain<3>::sphere(1.0);
    const PhaseState<3> st{2.0, Vec3{0.5, 0, 0}, Vec3{0, 1, 0}};
    const auto w = kinetic_weight(sph, st, 0.25, 1e-11);
    CHECK(w.alpha == doctest::Approx(3.0));
    CHECK(w.weighted ==
          doctest::Approx(3.0 * std::exp(-0.25 * std::sqrt(2.0) * 2.0)).epsilon(1e-12));
    CHECK(w.vl_constant == 1e-11);
}
