#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

// Counter-based deterministic RNG.
//
// Every stream is identified by (seed, stream id). The i-th draw of a stream
// is mix64(key + i*GOLDEN) where key = mix64(seed ^ mix64(stream)) and mix64
// is the SplitMix64 finalizer. Draws depend only on (seed, stream, i), so any
// consumer can be replayed from scratch without carrying generator state.

namespace ptlab {

namespace rng_detail {
inline constexpr uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;

inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27; x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}
} // namespace rng_detail

// fnv-1a over a string, used to derive stream ids from names
inline uint64_t stream_id(std::string_view name) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

class counter_rng {
  public:
    counter_rng(uint64_t seed, uint64_t stream)
        : key_(rng_detail::mix64(seed ^ rng_detail::mix64(stream))) {}

    uint64_t next_u64() {
        return rng_detail::mix64(key_ + (counter_++) * rng_detail::GOLDEN);
    }

    // uniform in [0, 1)
    double next_double() {
        return (next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; draws two uniforms per call
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

// Fisher-Yates with a dedicated stream; identical output for identical inputs
inline std::vector<size_t> shuffled_indices(size_t n, uint64_t seed, uint64_t stream) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; i++) idx[i] = i;
    counter_rng rng(seed, stream);
    for (size_t i = n; i > 1; i--) {
        size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace ptlab
