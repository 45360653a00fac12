#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ea3d {

/// SplitMix64: tiny counter-friendly PRNG. Training-time randomness is
/// derived statelessly from (seed, iteration, lane) so that checkpoint
/// resume reproduces the exact random stream without serializing RNG state.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return n ? next() % n : 0; }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = std::max(uniform(), 0x1.0p-60);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    SplitMix64 r(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    return r.next();
}

/// Thread-count override: EA3D_THREADS, default 1 (bitwise deterministic).
inline int thread_count() {
    if (const char* env = std::getenv("EA3D_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

/// Static block partition over [0, n). Worker w handles a deterministic
/// contiguous range, so per-worker partial results can be merged in worker
/// order for reproducibility at a fixed thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& body) {
    int workers = thread_count();
    if (workers <= 1 || n < 2) {
        body(0, n, 0);
        return;
    }
    workers = int(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t lo = std::min(n, std::size_t(w) * chunk);
        std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&body, lo, hi, w] { body(lo, hi, w); });
    }
    for (auto& t : pool) t.join();
}

/// Nearest-rank percentile at index floor(p*(n-1)) of the ascending sort.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    std::size_t idx = std::size_t(p * double(values.size() - 1));
    return values[std::min(idx, values.size() - 1)];
}

// sRGB transfer (IEC 61966-2-1), on [0,1].
inline double srgb_encode(double linear) {
    linear = std::clamp(linear, 0.0, 1.0);
    return linear <= 0.0031308 ? 12.92 * linear
                               : 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double srgb) {
    srgb = std::clamp(srgb, 0.0, 1.0);
    return srgb <= 0.04045 ? srgb / 12.92 : std::pow((srgb + 0.055) / 1.055, 2.4);
}

}  // namespace ea3d
