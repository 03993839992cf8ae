#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mmofl {

/// Counter-based pseudo-random generator: a 64-bit key plus a draw counter,
/// passed through a SplitMix64-style finalizer. The same (seed, label path)
/// always yields the same stream, on any platform, regardless of what other
/// streams have drawn. Child streams are derived from (key, label) only,
/// never from the parent's counter, so derivation order is irrelevant.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kGolden)) {}

    /// Derive an independent child stream from a textual label and up to two
    /// indices (e.g. client and round). Labels must be unique per purpose.
    Rng child(std::string_view label, std::uint64_t a = 0, std::uint64_t b = 0) const;

    std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGolden); }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double uniform01_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n);

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

  private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    Rng(std::uint64_t key, int) : key_(key) {}  // internal: key already mixed

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

/// One standard-normal draw (Box-Muller; consumes two uniforms).
double standard_normal(Rng& rng);

/// n i.i.d. draws from N(mean, std^2). std must be >= 0 and finite.
std::vector<double> gaussian(Rng& rng, double mean, double std_dev, std::size_t n);

/// One draw from Gamma(alpha, 1), alpha > 0 (Marsaglia-Tsang).
double gamma_draw(Rng& rng, double alpha);

/// Symmetric Dirichlet(alpha) sample of dimension k: nonnegative, sums to 1.
std::vector<double> dirichlet(Rng& rng, double alpha, std::size_t k);

/// First k positions of a random permutation of [0, n) (partial Fisher-Yates).
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k);

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace mmofl
