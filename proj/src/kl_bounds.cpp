#include "flowcert/kl_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flowcert {

namespace {

constexpr int kMaxBisection = 200;

// a log(a / b) with the 0 log 0 = 0 convention.
double xlogx_over(double a, double b) {
    if (a == 0.0) {
        return 0.0;
    }
    return a * std::log(a / b);
}

}  // namespace

double default_xi_log(std::size_t m) {
    return std::log(2.0 * std::sqrt(static_cast<double>(m)));
}

double BoundInputs::effective_xi_log() const {
    return xi_log ? *xi_log : default_xi_log(m);
}

void BoundInputs::validate() const {
    if (!(empirical_loss >= 0.0 && empirical_loss <= 1.0)) {
        throw std::domain_error("empirical loss outside [0,1]: " + std::to_string(empirical_loss));
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::domain_error("delta outside (0,1): " + std::to_string(delta));
    }
    if (m < 1 || K < 1) {
        throw std::domain_error("m and K must be positive");
    }
    if (!std::isfinite(complexity)) {
        throw std::domain_error("non-finite complexity term");
    }
}

double binary_kl(double u, double v) {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw std::domain_error("binary_kl: u outside [0,1]");
    }
    if (u == v) {
        return 0.0;
    }
    if (!(v > 0.0 && v < 1.0)) {
        throw std::domain_error("binary_kl: v outside (0,1)");
    }
    const double kl = xlogx_over(u, v) + xlogx_over(1.0 - u, 1.0 - v);
    return std::max(0.0, kl);
}

double kl_inverse(double u, double c) {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw std::domain_error("kl_inverse: u outside [0,1]");
    }
    if (std::isnan(c)) {
        throw std::domain_error("kl_inverse: c is NaN");
    }
    c = std::max(0.0, c);
    if (c == 0.0 || u == 1.0) {
        return u;
    }
    // kl(u || .) is increasing on [u, 1) and diverges at 1, so the feasible
    // set is an interval [u, v*]. Bisect down to adjacent doubles.
    double lo = u;
    double hi = 1.0;
    for (int it = 0; it < kMaxBisection; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if (binary_kl(u, mid) <= c) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The supremum lies above the largest double below 1: report 1.
    if (hi == 1.0 && lo == std::nextafter(1.0, 0.0)) {
        return 1.0;
    }
    return lo;
}

double confidence_penalty(const BoundInputs& b) {
    return std::log(static_cast<double>(b.K)) + b.effective_xi_log() + std::log(1.0 / b.delta);
}

double mcallester_bound(const BoundInputs& b) {
    b.validate();
    const double bracket = std::max(0.0, b.complexity + confidence_penalty(b));
    const double value = b.empirical_loss + std::sqrt(bracket / (2.0 * static_cast<double>(b.m)));
    return std::min(1.0, value);
}

double kl_bound(const BoundInputs& b) {
    b.validate();
    const double bracket = std::max(0.0, b.complexity + confidence_penalty(b));
    return std::min(1.0, kl_inverse(b.empirical_loss, bracket / static_cast<double>(b.m)));
}

BoundCertificate make_certificate(double empirical_loss, double log_density_ratio,
                                  double laplacian_integral, std::size_t m, double delta,
                                  std::size_t K, std::optional<double> xi_log) {
    BoundCertificate cert;
    cert.inputs.empirical_loss = empirical_loss;
    cert.inputs.complexity = log_density_ratio + laplacian_integral;
    cert.inputs.m = m;
    cert.inputs.delta = delta;
    cert.inputs.K = K;
    cert.inputs.xi_log = xi_log;
    cert.log_density_ratio = log_density_ratio;
    cert.laplacian_integral = laplacian_integral;
    cert.penalty = confidence_penalty(cert.inputs);
    cert.mcallester = mcallester_bound(cert.inputs);
    cert.kl_inv = kl_bound(cert.inputs);
    return cert;
}

}  // namespace flowcert
