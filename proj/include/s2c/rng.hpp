#pragma once

// Counter-based (splittable) random number stream. A draw is a pure
// function of (seed, stream_id, counter), so any draw can be reproduced
// from the stream coordinates alone and distinct stream_ids give
// statistically independent sequences. Normal variates come from
// Box-Muller over consecutive counter positions.

#include <cmath>
#include <cstdint>

#include "s2c/tensor.hpp"

namespace s2c {

struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;

    RngStream() = default;
    RngStream(std::uint64_t seed_, std::uint64_t stream_id_) : seed(seed_), stream_id(stream_id_) {}

    // splitmix64 finalizer
    static std::uint64_t mix64(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

    std::uint64_t key() const {
        std::uint64_t k = mix64(seed + 0x9e3779b97f4a7c15ULL);
        k = mix64(k ^ mix64(stream_id + 0x6a09e667f3bcc909ULL));
        return k;
    }

    std::uint64_t next_u64() {
        ++counter;
        return mix64(key() + counter * 0x9e3779b97f4a7c15ULL);
    }

    // uniform in (0,1); the +0.5 keeps log() in Box-Muller finite
    double u01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // one standard normal per call; always consumes two counter positions
    double normal() {
        const double u1 = u01();
        const double u2 = u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t below(std::uint64_t n) {
        if (n == 0) {
            return 0;
        }
        return static_cast<std::uint64_t>(u01() * static_cast<double>(n)) % n;
    }

    // independent child stream; parent state is untouched
    RngStream derived(std::uint64_t tag) const {
        RngStream child;
        child.seed = seed;
        child.stream_id = mix64(stream_id + 0x9e3779b97f4a7c15ULL * (tag + 1));
        return child;
    }

    template <class T>
    void fill_normal(TensorT<T>& t) {
        for (auto& v : t.data) {
            v = static_cast<T>(normal());
        }
    }

    template <class T>
    void fill_uniform(TensorT<T>& t, double lo, double hi) {
        for (auto& v : t.data) {
            v = static_cast<T>(lo + (hi - lo) * u01());
        }
    }
};

}  // namespace s2c
