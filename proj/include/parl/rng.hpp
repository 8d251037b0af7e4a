#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace parl {

/// Engine used everywhere a seed is accepted. The raw engine output is fully
/// specified by the standard, so helpers below avoid implementation-defined
/// distributions where it is cheap to do so.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

/// Inverse-CDF draw from a probability vector. Falls back to the last
/// positive entry when rounding leaves the cumulative sum just below `u`.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

/// Standard normal via Box-Muller.
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Marsaglia-Tsang gamma(shape, 1) sampler.
inline double sample_gamma(double shape, Rng& rng) {
    if (!(shape > 0.0)) throw std::invalid_argument("sample_gamma: shape must be positive");
    if (shape < 1.0) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

/// Symmetric Dirichlet(alpha) draw of dimension n. Entries are clamped away
/// from zero so that small alpha never produces an exact zero.
inline std::vector<double> sample_dirichlet(std::size_t n, double alpha, Rng& rng) {
    if (n == 0) throw std::invalid_argument("sample_dirichlet: empty dimension");
    std::vector<double> out(n);
    double total = 0.0;
    for (auto& v : out) {
        v = std::max(sample_gamma(alpha, rng), 1e-300);
        total += v;
    }
    for (auto& v : out) v /= total;
    return out;
}

}  // namespace parl
