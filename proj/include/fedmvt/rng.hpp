#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedmvt {

// Seed derivation for independent deterministic streams (init, shuffling,
// data generation). splitmix64 keeps streams decorrelated even for small
// consecutive base seeds.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Uniform in [0,1). Hand-rolled instead of std::uniform_real_distribution so
// draws are bit-identical regardless of standard library version.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller without caching the second variate; two draws per call keeps the
// stream position independent of call history.
inline double gaussian(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Fisher-Yates with modulo draw; bias is irrelevant here, stable output is not.
template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace fedmvt
