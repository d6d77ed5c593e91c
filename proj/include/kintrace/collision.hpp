#pragma once

/**
 * Hard-potential collision operator pieces in 3D velocity space:
 *
 *   gain      G(f1,f2)(v) = int int B(v-u,w) sqrt(mu(u)) f1(u') f2(v') dw du
 *   loss rate nu(sqrt(mu) f)(v) = int int B(v-u,w) sqrt(mu(u)) f(u) dw du
 *
 * with B(v-u,w) = |v-u|^kappa q0(cos th), cos th = (v-u)/|v-u| . w, kappa in
 * [0,1], |q0| <= C |cos th|, and u' = u + [(v-u).w]w, v' = v - [(v-u).w]w.
 *
 * The gain term is estimated by importance-sampled Monte Carlo (u from a unit
 * Gaussian matching the sqrt(mu) weight with antithetic pairs, w uniform on
 * the sphere). The loss term is deterministic: the angular integral of q0 is
 * a constant, and the u integral is done in shell coordinates centered at v,
 * where the |v-u|^kappa factor is radial and the area element removes the
 * would-be singularity.
 *
 * The Grad-type kernel envelope
 *   k(v,u) = {|v-u|^k + |v-u|^(k-2)} e^{-rho|v-u|^2 - rho (|v|^2-|u|^2)^2/|v-u|^2}
 * integrates against the weight ratio <v>^zeta e^{th|v|^2} / (<u>^zeta
 * e^{th|u|^2}) to O(<v>^{-1}) whenever -2 rho < th < 2 rho; the same shell
 * quadrature verifies that decay.
 */

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "kintrace/error.hpp"
#include "kintrace/quadrature.hpp"
#include "kintrace/rng.hpp"
#include "kintrace/vec.hpp"

namespace kintrace {

enum class AngularCutoff { AbsCos, One };

struct CollisionParams {
    double kappa = 1.0;                         // hard-potential exponent in [0, 1]
    AngularCutoff q0 = AngularCutoff::AbsCos;   // |cos th| (default) or 1 (desk tests)
    double theta_gauss = 0.1;                   // Gaussian weight exponent in (0, 1/4)

    void check() const {
        if (kappa < 0.0 || kappa > 1.0)
            throw ParameterViolation("CollisionParams: kappa must lie in [0,1]");
    }
    double q0_eval(double cos_theta) const {
        return q0 == AngularCutoff::AbsCos ? std::fabs(cos_theta) : 1.0;
    }
    // int_{S^2} q0(e.w) dw, independent of the unit vector e
    double q0_sphere_integral() const {
        return q0 == AngularCutoff::AbsCos ? 2.0 * M_PI : 4.0 * M_PI;
    }
};

inline double maxwellian(const Vec3& v) { return std::exp(-0.5 * norm2(v)); }
inline double sqrt_maxwellian(const Vec3& v) { return std::exp(-0.25 * norm2(v)); }

struct McConfig {
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
};

struct McEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
};

using VelocityFn = std::function<double(const Vec3&)>;

/**
 * Importance-sampled gain term. u is drawn from the standard Gaussian
 * (weight sqrt(mu(u)) (2 pi)^{3/2} e^{-|u|^2/4} left in the integrand),
 * antithetic in u; w is uniform on the sphere (weight 4 pi). Throws
 * NonFiniteSample on a non-finite integrand evaluation.
 */
inline McEstimate gamma_gain(const VelocityFn& f1, const VelocityFn& f2, const Vec3& v,
                             const CollisionParams& params, const McConfig& mc) {
    params.check();
    if (mc.samples < 1000) throw ParameterViolation("gamma_gain: need >= 1000 samples");
    CounterRng rng(mc.seed, CounterRng::stream_id(mc.stream, 0xC0111u));
    const double wconst = 4.0 * M_PI * 15.749609945722419;  // 4 pi (2 pi)^{3/2}

    const std::size_t pairs = mc.samples / 2;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
        const Vec3 u_raw = rng.normal_vec<3>();
        const Vec3 w = rng.unit_vec<3>();
        double pair_val = 0.0;
        for (double sign : {1.0, -1.0}) {
            const Vec3 u = sign * u_raw;
            const Vec3 rel = v - u;
            const double rn = norm(rel);
            if (rn < 1e-14) continue;
            const double ct = dot(rel, w) / rn;
            const double proj = dot(rel, w);
            const Vec3 u_post = u + proj * w;
            const Vec3 v_post = v - proj * w;
            // sqrt(mu(u)) / gaussian_density(u) = (2 pi)^{3/2} e^{+|u|^2/4}
            const double val = std::pow(rn, params.kappa) * params.q0_eval(ct) *
                               std::exp(0.25 * norm2(u)) * f1(u_post) * f2(v_post);
            if (!std::isfinite(val)) throw NonFiniteSample("gamma_gain: non-finite integrand");
            pair_val += 0.5 * val;
        }
        const double scaled = wconst * pair_val;
        sum += scaled;
        sum2 += scaled * scaled;
    }
    McEstimate out;
    const double n = static_cast<double>(pairs);
    out.estimate = sum / n;
    out.stderr_ = std::sqrt(std::max(0.0, sum2 / n - out.estimate * out.estimate) / n);
    return out;
}

struct ShellQuadConfig {
    double rel_tol = 1e-6;
    int max_level = 6;
    double radial_margin = 30.0;  // integration radius |v| + margin
};

namespace detail {

// int_{R^3} g(v - w) |w|-shell quadrature: radius rho = sigma^2 (grading
// smooths rho^{kappa} factors at 0), Gauss-Legendre in sigma and in the
// polar cosine, trapezoid in azimuth. Doubles all orders until stable.
template <class F>
inline double shell_integral(double radius, F&& g_of_w, double rel_tol, int max_level) {
    double prev = 0.0;
    for (int level = 0;; ++level) {
        if (level > max_level)
            throw QuadratureDivergence("shell_integral: refinement failed to stabilize");
        const int nr = 24 << level, np = 12 << level, na = 24 << level;
        const QuadRule& qr = gauss_legendre(nr);
        const QuadRule& qp = gauss_legendre(np);
        const double smax = std::sqrt(radius);
        double total = 0.0;
        for (int ir = 0; ir < nr; ++ir) {
            const double sg = 0.5 * smax * (qr.x[ir] + 1.0);
            const double wsg = 0.5 * smax * qr.w[ir];
            const double rho = sg * sg;
            const double jac_r = 2.0 * sg * rho * rho;  // d rho = 2 sg d sg, rho^2 area
            double sphere = 0.0;
            for (int ip = 0; ip < np; ++ip) {
                const double c = qp.x[ip];
                const double sth = std::sqrt(std::max(0.0, 1.0 - c * c));
                double az = 0.0;
                for (int ia = 0; ia < na; ++ia) {
                    const double phi = 2.0 * M_PI * ia / na;
                    const Vec3 w{rho * sth * std::cos(phi), rho * sth * std::sin(phi), rho * c};
                    az += g_of_w(w, rho);
                }
                sphere += qp.w[ip] * (2.0 * M_PI / na) * az;
            }
            total += wsg * jac_r * sphere;
        }
        if (level > 0 && std::fabs(total - prev) <= rel_tol * std::fabs(total)) return total;
        prev = total;
    }
}

}  // namespace detail

/**
 * Deterministic loss rate nu(sqrt(mu) f)(v). The angular q0 integral is the
 * constant q0_sphere_integral(); the u integral runs in shell coordinates
 * w = v - u so the |v-u|^kappa factor is exactly radial. Throws
 * QuadratureDivergence if refinement does not stabilize to rel_tol.
 */
inline double nu_loss(const VelocityFn& f, const Vec3& v, const CollisionParams& params,
                      const ShellQuadConfig& cfg = {}) {
    params.check();
    const double radius = norm(v) + cfg.radial_margin;
    const double cw = params.q0_sphere_integral();
    const double val = detail::shell_integral(
        radius,
        [&](const Vec3& w, double rho) {
            const Vec3 u = v - w;
            return std::pow(rho, params.kappa) * sqrt_maxwellian(u) * f(u);
        },
        cfg.rel_tol, cfg.max_level);
    return cw * val;
}

struct KernelBound {
    double zeta = 0.0;   // polynomial weight exponent
    double rho = 0.1;    // Gaussian rate
    double kappa = 1.0;

    // envelope dominating the linearized collision kernels
    double operator()(const Vec3& v, const Vec3& u) const {
        const double d2 = norm2(v - u);
        if (d2 == 0.0) return 0.0;
        const double dd = norm2(v) - norm2(u);
        const double e = std::exp(-rho * d2 - rho * dd * dd / d2);
        const double d = std::sqrt(d2);
        return (std::pow(d, kappa) + std::pow(d, kappa - 2.0)) * e;
    }
};

struct KernelIntegral {
    double integral = 0.0;
    double product_with_bracket_v = 0.0;  // <v> * integral; bounded uniformly
};

/**
 * int k(v,u) <v>^zeta e^{th|v|^2} / (<u>^zeta e^{th|u|^2}) du in shell
 * coordinates around u = v (the area element cancels the |v-u|^{kappa-2}
 * singularity for kappa > 0). Requires -2 rho < th < 2 rho.
 */
inline KernelIntegral kernel_integral_check(const Vec3& v, double kappa, double zeta,
                                            double theta_gauss, double rho,
                                            const ShellQuadConfig& cfg = {}) {
    if (!(theta_gauss > -2.0 * rho && theta_gauss < 2.0 * rho))
        throw ParameterViolation("kernel_integral_check: need -2 rho < theta < 2 rho");
    const double vb = bracket(v);
    const double v2 = norm2(v);
    const double radius = 6.0 * norm(v) + cfg.radial_margin;
    const double val = detail::shell_integral(
        radius,
        [&](const Vec3& w, double rho_r) {
            const Vec3 u = v - w;
            const double d2 = rho_r * rho_r;
            const double dd = v2 - norm2(u);
            const double gauss = std::exp(-rho * d2 - rho * dd * dd / d2);
            const double radial = std::pow(rho_r, kappa) + std::pow(rho_r, kappa - 2.0);
            const double weight = std::pow(vb / bracket(u), zeta) *
                                  std::exp(theta_gauss * (v2 - norm2(u)));
            return radial * gauss * weight;
        },
        cfg.rel_tol, cfg.max_level);
    KernelIntegral out;
    out.integral = val;
    out.product_with_bracket_v = vb * val;
    return out;
}

/**
 * Paired Monte-Carlo estimator of int Q(F,F) psi dv for F = mu (1 + eps p):
 * the equilibrium part cancels exactly inside the bracket
 *   (1 + eps p(u'))(1 + eps p(v')) - (1 + eps p(u))(1 + eps p(v)),
 * using mu(u') mu(v') = mu(u) mu(v), so the estimator measures only the
 * perturbation transport and conserved psi give 0 up to sampling error.
 */
inline McEstimate collision_moment(const VelocityFn& perturbation, double eps,
                                   const VelocityFn& psi, const CollisionParams& params,
                                   const McConfig& mc) {
    params.check();
    CounterRng rng(mc.seed, CounterRng::stream_id(mc.stream, 0x303D3u));
    const double wconst = 4.0 * M_PI * 248.05021344239853;  // 4 pi (2 pi)^3

    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < mc.samples; ++i) {
        const Vec3 v = rng.normal_vec<3>();
        const Vec3 u = rng.normal_vec<3>();
        const Vec3 w = rng.unit_vec<3>();
        const Vec3 rel = v - u;
        const double rn = norm(rel);
        double val = 0.0;
        if (rn >= 1e-14) {
            const double proj = dot(rel, w);
            const Vec3 u_post = u + proj * w;
            const Vec3 v_post = v - proj * w;
            const double bracket_term =
                (1.0 + eps * perturbation(u_post)) * (1.0 + eps * perturbation(v_post)) -
                (1.0 + eps * perturbation(u)) * (1.0 + eps * perturbation(v));
            // the mu(u) mu(v) factors cancel against the Gaussian sampling densities
            val = std::pow(rn, params.kappa) * params.q0_eval(proj / rn) * bracket_term * psi(v);
            if (!std::isfinite(val))
                throw NonFiniteSample("collision_moment: non-finite integrand");
        }
        const double scaled = wconst * val;
        sum += scaled;
        sum2 += scaled * scaled;
    }
    McEstimate out;
    const double n = static_cast<double>(mc.samples);
    out.estimate = sum / n;
    out.stderr_ = std::sqrt(std::max(0.0, sum2 / n - out.estimate * out.estimate) / n);
    return out;
}

}  // namespace kintrace
