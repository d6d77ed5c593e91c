#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>

namespace kintrace {

// Fixed-size dense vector over double, N = 2 or 3 throughout this library.
template <std::size_t N>
struct Vec {
    std::array<double, N> a{};

    constexpr double& operator[](std::size_t i) { return a[i]; }
    constexpr const double& operator[](std::size_t i) const { return a[i]; }
    static constexpr std::size_t size() { return N; }

    Vec& operator+=(const Vec& o) {
        for (std::size_t i = 0; i < N; ++i) a[i] += o.a[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (std::size_t i = 0; i < N; ++i) a[i] -= o.a[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (std::size_t i = 0; i < N; ++i) a[i] *= s;
        return *this;
    }
};

template <std::size_t N>
inline Vec<N> operator+(Vec<N> x, const Vec<N>& y) { return x += y; }
template <std::size_t N>
inline Vec<N> operator-(Vec<N> x, const Vec<N>& y) { return x -= y; }
template <std::size_t N>
inline Vec<N> operator*(double s, Vec<N> x) { return x *= s; }
template <std::size_t N>
inline Vec<N> operator*(Vec<N> x, double s) { return x *= s; }
template <std::size_t N>
inline Vec<N> operator/(Vec<N> x, double s) { return x *= (1.0 / s); }
template <std::size_t N>
inline Vec<N> operator-(Vec<N> x) { return x *= -1.0; }

template <std::size_t N>
inline double dot(const Vec<N>& x, const Vec<N>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += x[i] * y[i];
    return s;
}

template <std::size_t N>
inline double norm2(const Vec<N>& x) { return dot(x, x); }

template <std::size_t N>
inline double norm(const Vec<N>& x) { return std::sqrt(norm2(x)); }

template <std::size_t N>
inline Vec<N> normalized(const Vec<N>& x) { return x / norm(x); }

// <v> = sqrt(1 + |v|^2), the velocity bracket weight.
template <std::size_t N>
inline double bracket(const Vec<N>& v) { return std::sqrt(1.0 + norm2(v)); }

template <std::size_t N>
inline std::ostream& operator<<(std::ostream& os, const Vec<N>& x) {
    os << '(';
    for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << x[i];
    return os << ')';
}

// Row-major R x C matrix.
template <std::size_t R, std::size_t C>
struct Mat {
    std::array<double, R * C> a{};

    constexpr double& operator()(std::size_t i, std::size_t j) { return a[i * C + j]; }
    constexpr const double& operator()(std::size_t i, std::size_t j) const { return a[i * C + j]; }

    static Mat identity() {
        static_assert(R == C);
        Mat m;
        for (std::size_t i = 0; i < R; ++i) m(i, i) = 1.0;
        return m;
    }

    Mat& operator+=(const Mat& o) {
        for (std::size_t i = 0; i < R * C; ++i) a[i] += o.a[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (std::size_t i = 0; i < R * C; ++i) a[i] -= o.a[i];
        return *this;
    }
    Mat& operator*=(double s) {
        for (std::size_t i = 0; i < R * C; ++i) a[i] *= s;
        return *this;
    }
};

template <std::size_t R, std::size_t C>
inline Mat<R, C> operator+(Mat<R, C> x, const Mat<R, C>& y) { return x += y; }
template <std::size_t R, std::size_t C>
inline Mat<R, C> operator-(Mat<R, C> x, const Mat<R, C>& y) { return x -= y; }
template <std::size_t R, std::size_t C>
inline Mat<R, C> operator*(double s, Mat<R, C> x) { return x *= s; }

template <std::size_t R, std::size_t C>
inline Vec<R> operator*(const Mat<R, C>& m, const Vec<C>& x) {
    Vec<R> y;
    for (std::size_t i = 0; i < R; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

// outer(a, b)(i,j) = a_i * b_j
template <std::size_t R, std::size_t C>
inline Mat<R, C> outer(const Vec<R>& x, const Vec<C>& y) {
    Mat<R, C> m;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) m(i, j) = x[i] * y[j];
    return m;
}

template <std::size_t N>
inline double quad_form(const Mat<N, N>& m, const Vec<N>& x) {
    return dot(x, m * x);
}

template <std::size_t R, std::size_t C>
inline double max_abs(const Mat<R, C>& m) {
    double s = 0.0;
    for (double e : m.a) s = std::max(s, std::fabs(e));
    return s;
}

// Symmetric rank-3 tensor, stored dense; only the full contraction with one
// vector in all slots is needed in hot paths.
template <std::size_t N>
struct Ten3 {
    std::array<double, N * N * N> a{};

    constexpr double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return a[(i * N + j) * N + k];
    }
    constexpr const double& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return a[(i * N + j) * N + k];
    }
};

// sum_{ijk} T_ijk v_i v_j v_k
template <std::size_t N>
inline double contract3(const Ten3<N>& t, const Vec<N>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < N; ++k) s += t(i, j, k) * v[i] * v[j] * v[k];
    return s;
}

using Vec2 = Vec<2>;
using Vec3 = Vec<3>;

}  // namespace kintrace
