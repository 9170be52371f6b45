#pragma once

// Independent numerical references shared by the test binaries.

#include "flowcert/objective.hpp"
#include "flowcert/rng.hpp"

#include <cmath>
#include <cstdint>

namespace oracle {

using flowcert::Objective;
using flowcert::Vector;

inline Vector fd_gradient(const Objective& obj, const Vector& h, double eps = 1e-6) {
    Vector g(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        Vector a = h, b = h;
        a[i] += eps;
        b[i] -= eps;
        g[i] = (obj.value(a) - obj.value(b)) / (2 * eps);
    }
    return g;
}

// Trace of the Hessian from second differences of the value.
inline double fd_laplacian(const Objective& obj, const Vector& h, double eps = 1e-4) {
    const double f0 = obj.value(h);
    double tr = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        Vector a = h, b = h;
        a[i] += eps;
        b[i] -= eps;
        tr += (obj.value(a) - 2 * f0 + obj.value(b)) / (eps * eps);
    }
    return tr;
}

// Same trace from differences of the analytic gradient.
inline double fd_gradient_divergence(const Objective& obj, const Vector& h, double eps = 1e-5) {
    double tr = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        Vector a = h, b = h;
        a[i] += eps;
        b[i] -= eps;
        tr += (obj.gradient(a)[i] - obj.gradient(b)[i]) / (2 * eps);
    }
    return tr;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline double rel_err(const Vector& a, const Vector& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline Vector random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    flowcert::NormalStream rng(seed);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = scale * rng.next();
    }
    return v;
}

// Symmetric positive definite with eigenvalues in [lo, hi].
inline flowcert::Matrix random_spd(std::size_t n, std::uint64_t seed, double lo, double hi) {
    flowcert::NormalStream rng(seed);
    flowcert::Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.next();
    }
    Eigen::HouseholderQR<flowcert::Matrix> qr(a);
    const flowcert::Matrix q = qr.householderQ();
    Vector d(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        d[i] = lo + (hi - lo) * rng.uniform();
    }
    return q * d.asDiagonal() * q.transpose();
}

}  // namespace oracle
