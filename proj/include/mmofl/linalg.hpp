#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace mmofl {

using Vec = std::vector<double>;

/// Dense row-major matrix. Row-major layout is the serialization contract.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

double dot(const Vec& x, const Vec& y);
double norm2(const Vec& x);
double squared_distance(const Vec& x, const Vec& y);

/// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

/// y = M x + b  (b may be empty for no offset)
Vec affine(const Mat& m, const Vec& x, const Vec& b);

/// y = M^T x
Vec matvec_t(const Mat& m, const Vec& x);

bool all_finite(const Vec& x);

/// Probability vector exp(v_i) / sum_j exp(v_j), max-shifted for stability.
Vec softmax(const Vec& v);

/// x / ||x||. Throws ZeroNormError when ||x|| == 0.
Vec l2_normalize(const Vec& v);

/// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h);

}  // namespace mmofl
