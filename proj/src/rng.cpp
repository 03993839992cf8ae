#include "mmofl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmofl {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

Rng Rng::child(std::string_view label, std::uint64_t a, std::uint64_t b) const {
    std::uint64_t k = mix(key_ ^ fnv1a64(label));
    k = mix(k + kGolden * (a + 1));
    k = mix(k + kGolden * (b + 2));
    return Rng(k, 0);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    // multiply-shift map of a 64-bit draw onto [0, n)
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double standard_normal(Rng& rng) {
    double u1 = rng.uniform01_open();
    double u2 = rng.uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> gaussian(Rng& rng, double mean, double std_dev, std::size_t n) {
    if (!(std_dev >= 0.0) || !std::isfinite(std_dev) || !std::isfinite(mean))
        throw std::invalid_argument("gaussian: mean must be finite, std >= 0");
    std::vector<double> out(n, mean);
    if (std_dev == 0.0) return out;
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        double u1 = rng.uniform01_open();
        double u2 = rng.uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        out[i] += std_dev * r * std::cos(2.0 * std::numbers::pi * u2);
        out[i + 1] += std_dev * r * std::sin(2.0 * std::numbers::pi * u2);
    }
    if (n % 2 == 1) out[n - 1] += std_dev * standard_normal(rng);
    return out;
}

double gamma_draw(Rng& rng, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("gamma_draw: alpha must be > 0");
    if (alpha < 1.0) {
        // boost by one and correct with a uniform power
        double u = rng.uniform01_open();
        return gamma_draw(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = standard_normal(rng);
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = rng.uniform01_open();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> dirichlet(Rng& rng, double alpha, std::size_t k) {
    if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet: alpha must be > 0");
    if (k == 0) throw std::invalid_argument("dirichlet: k must be >= 1");
    std::vector<double> out(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = gamma_draw(rng, alpha);
        sum += out[i];
    }
    if (sum <= 0.0) {
        // all gammas underflowed (alpha tiny): the limit law is a random vertex
        std::fill(out.begin(), out.end(), 0.0);
        out[rng.below(k)] = 1.0;
        return out;
    }
    for (double& x : out) x /= sum;
    return out;
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("sample_indices: k must be <= n");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace mmofl
