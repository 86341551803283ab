// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace preditor {

using Vector = std::vector<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value lies outside its declared domain (strengths, schedule bounds, ...).
class RangeError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Timestep ordering violated (e.g. a "previous" timestep that is not smaller).
class OrderingError : public Error {
public:
    using Error::Error;
};

/// Non-finite losses or states.
class NumericError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& key, const std::string& what)
        : Error(key.empty() ? what : key + ": " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

inline void require(bool condition, const char* message) {
    if (!condition) throw RangeError(message);
}

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": dimension " + std::to_string(a) +
                             " does not match " + std::to_string(b));
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; zero when either argument has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "l2_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double relative_l2_error(std::span<const double> estimate, std::span<const double> truth) {
    const double denom = l2_norm(truth);
    const double num = l2_distance(estimate, truth);
    return denom == 0.0 ? num : num / denom;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
inline double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace preditor
