#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace penmcfm {

// SplitMix64: counter-based generator, output i is a pure function of
// (seed, i). Streams are split by hashing a textual label plus index into a
// child seed, so replications, folds and grid cells each own an independent
// stream that does not depend on scheduling order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64()
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform on [0,1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0,1): endpoints excluded so that log() and inverse-CDF
    // transforms stay finite
    double open_uniform()
    {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential(double rate) { return -std::log(open_uniform()) / rate; }

    // Box-Muller with a cached spare; avoids std::normal_distribution so the
    // stream is identical across standard libraries
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = open_uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // index in [0, n)
    std::uint64_t below(std::uint64_t n)
    {
        // rejection sampling removes modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Child stream for (label, index); label disambiguates call sites.
    Rng split(std::string_view label, std::uint64_t index = 0) const
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over label bytes
        for (const char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
        Rng mixer(state_ ^ h ^ (index * 0xD1B54A32D192ED03ULL));
        // burn one output so child state is a full avalanche of the inputs
        return Rng(mixer.next_u64());
    }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <typename Container>
void shuffle(Container& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace penmcfm
