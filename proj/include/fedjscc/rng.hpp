#pragma once

#include <cmath>
#include <cstdint>

#include "tensor.hpp"

namespace fedjscc {

// Counter-based random stream. Every draw is a pure function of
// (seed, stream id, counter), so concurrent clients can consume their own
// streams in any order and still reproduce bitwise-identical sequences.
class RngStream {
  public:
    RngStream() : RngStream(0, 0, 0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t client, std::uint64_t round,
              std::uint64_t step)
        : key_(mix(mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed, client), round), step),
                   seed)),
          counter_(0),
          cached_(false),
          cache_(0) {}

    // Derive an independent substream without disturbing this one.
    RngStream fork(std::uint64_t tag) const {
        RngStream r;
        r.key_ = mix(key_, 0xd1b54a32d192ed03ull ^ tag);
        r.counter_ = 0;
        r.cached_ = false;
        return r;
    }

    std::uint64_t next_u64() { return mix(key_, ++counter_); }

    // Uniform in (0, 1): never returns exactly 0 (safe for log()).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws are paired and the spare is cached.
    double gaussian() {
        if (cached_) {
            cached_ = false;
            return cache_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        cached_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double std) { return mean + std * gaussian(); }

    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    Tensor gaussian_tensor(std::vector<std::size_t> shape, double mean, double std) {
        Tensor t(std::move(shape));
        for (auto& v : t.data) v = gaussian(mean, std);
        return t;
    }

  private:
    // splitmix64 finalizer over a combined word
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_;
    bool cached_;
    double cache_;
};

}  // namespace fedjscc
