#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace u3m {

/// Seeded generator with self-contained draw helpers. The standard
/// distributions are implementation-defined, so everything that must be
/// bit-reproducible draws through these instead.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return n ? engine_() % n : 0; }

    bool bernoulli(double p = 0.5) { return uniform() < p; }

    /// Box-Muller; draws two uniforms per call, no cached state.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
    }

    /// Normal clipped to +-2 sigma by rejection.
    double trunc_normal(double stddev) {
        for (;;) {
            double v = normal(0.0, stddev);
            if (std::fabs(v) <= 2.0 * stddev) return v;
        }
    }

    /// Derive an independent stream; mixing avoids correlated seeds.
    Rng fork(uint64_t salt) {
        uint64_t s = next_u64() ^ (salt * 0x9e3779b97f4a7c15ull + 0xbf58476d1ce4e5b9ull);
        return Rng(s);
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace u3m
