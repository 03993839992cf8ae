#include "mmofl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmofl/errors.hpp"

namespace mmofl {

double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

double squared_distance(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw ShapeError("squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec affine(const Mat& m, const Vec& x, const Vec& b) {
    if (m.cols != x.size()) throw ShapeError("affine: matrix/vector mismatch");
    if (!b.empty() && b.size() != m.rows) throw ShapeError("affine: bias mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.a.data() + r * m.cols;
        double s = b.empty() ? 0.0 : b[r];
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

Vec matvec_t(const Mat& m, const Vec& x) {
    if (m.rows != x.size()) throw ShapeError("matvec_t: matrix/vector mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.a.data() + r * m.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

Vec softmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Vec l2_normalize(const Vec& v) {
    double n = norm2(v);
    if (n == 0.0) throw ZeroNormError("l2_normalize: zero vector");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Vec g(x.size());
    Vec p = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double xi = x[i];
        p[i] = xi + h;
        double fp = f(p);
        p[i] = xi - h;
        double fm = f(p);
        p[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace mmofl
