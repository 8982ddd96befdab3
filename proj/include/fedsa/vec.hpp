#pragma once

// Flat parameter vectors and the handful of BLAS-1 style helpers every
// module needs. Everything is coordinate-wise over std::vector<double>.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedsa/errors.hpp"

namespace fedsa {

using ParamVec = std::vector<double>;

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw InvalidInput(std::string(what) + ": length mismatch (" + std::to_string(a) +
                           " vs " + std::to_string(b) + ")");
    }
}

inline ParamVec zeros(std::size_t n) { return ParamVec(n, 0.0); }

inline ParamVec sub(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size(), "sub");
    ParamVec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline ParamVec add(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size(), "add");
    ParamVec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_same_size(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline ParamVec scaled(std::span<const double> a, double s) {
    ParamVec out(a.begin(), a.end());
    for (auto& v : out) v *= s;
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size(), "sq_dist");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// Coordinate-wise arithmetic mean of equally sized vectors.
inline ParamVec mean_of(const std::vector<ParamVec>& xs) {
    if (xs.empty()) throw InvalidInput("mean_of: empty input");
    ParamVec out(xs.front().size(), 0.0);
    for (const auto& x : xs) axpy(1.0, x, out);
    for (auto& v : out) v /= static_cast<double>(xs.size());
    return out;
}

// sign with sign(0) == 0.
inline double signum(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace fedsa
