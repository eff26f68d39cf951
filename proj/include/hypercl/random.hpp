#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "hypercl/numeric.hpp"

namespace hypercl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// FNV-1a over the bytes, finalized with splitmix64 keyed by `key`.
inline constexpr std::uint64_t stable_hash64(std::string_view bytes, std::uint64_t key) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h ^ splitmix64(key));
}

/// The single seeded generator type used throughout.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

/// Derive an independent child stream from a parent seed and a stream tag.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL)));
}

inline void fill_gaussian(std::span<double> out, Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : out) x = dist(rng);
}

inline Vector random_gaussian(std::size_t dim, Rng& rng, double stddev = 1.0) {
    Vector v(dim);
    fill_gaussian(v.values(), rng, stddev);
    return v;
}

inline Vector random_unit(std::size_t dim, Rng& rng) {
    for (;;) {
        Vector v = random_gaussian(dim, rng);
        if (norm(v) > 1e-12) return normalized(v);
    }
}

/// Haar-distributed random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
inline Matrix random_orthogonal(std::size_t n, Rng& rng) {
    Matrix q(n, n);
    std::vector<Vector> basis;
    basis.reserve(n);
    while (basis.size() < n) {
        Vector v = random_gaussian(n, rng);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double p = dot(v, b);
                for (std::size_t i = 0; i < n; ++i) v[i] -= p * b[i];
            }
        }
        const double nv = norm(v);
        if (nv < 1e-8) continue;
        basis.push_back(scaled(v, 1.0 / nv));
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) q(r, c) = basis[c][r];
    }
    return q;
}

}  // namespace hypercl
