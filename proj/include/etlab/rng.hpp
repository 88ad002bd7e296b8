#pragma once

#include <cmath>
#include <cstdint>

namespace etlab {

/// SplitMix64 step; used both as a stream generator and as a seed mixer.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Mixes words into a single well-distributed 64-bit value. Used to derive
/// per-sample / per-iteration seeds from (run seed, indices) so that every
/// draw is a pure function of its coordinates.
inline uint64_t mix_seed(uint64_t a) {
    uint64_t s = a;
    return splitmix64(s);
}
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a;
    uint64_t h = splitmix64(s);
    s = h ^ (b + 0x9E3779B97F4A7C15ull);
    return splitmix64(s);
}
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix_seed(mix_seed(a, b, c), d);
}

/// Small deterministic PRNG (SplitMix64 stream). Uniform draws use only
/// integer ops and IEEE multiplies, so sequences are identical on every
/// platform. Gaussian draws go through Box-Muller (libm log/sin/cos) and are
/// only promised stable per-platform; nothing hash-pinned consumes them.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0xD1B54A32D192ED03ull) {
        // Warm up so trivially related seeds decorrelate.
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    /// Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

  private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace etlab
