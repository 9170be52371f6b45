#pragma once

#include <cstddef>
#include <optional>

namespace flowcert {

// Inputs to the two disintegrated certificates. `complexity` is the
// log-density ratio plus the Laplacian integral; the confidence penalty
// log(K * xi / delta) is added inside the bound functions.
struct BoundInputs {
    double empirical_loss = 0.0;
    double complexity = 0.0;
    std::size_t m = 1;
    double delta = 0.05;
    std::size_t K = 1;
    // log(xi); when unset, log(2 sqrt(m)) (valid for [0,1]-bounded losses).
    std::optional<double> xi_log;

    double effective_xi_log() const;
    void validate() const;
};

struct BoundCertificate {
    BoundInputs inputs;
    double mcallester = 1.0;
    double kl_inv = 1.0;
    double log_density_ratio = 0.0;
    double laplacian_integral = 0.0;
    double penalty = 0.0;  // log K + log xi + log(1/delta)
};

double default_xi_log(std::size_t m);

// kl(u || v) between Bernoulli(u) and Bernoulli(v), with 0 log 0 = 0.
// Throws std::domain_error for v outside (0,1) unless u == v.
double binary_kl(double u, double v);

// sup{ v in [0,1] : kl(u || v) <= c }. Negative c is treated as 0.
double kl_inverse(double u, double c);

// log K + xi_log + log(1/delta), the union-bound horizon penalty.
double confidence_penalty(const BoundInputs& b);

double mcallester_bound(const BoundInputs& b);
double kl_bound(const BoundInputs& b);

// Evaluates both bounds from itemized components.
BoundCertificate make_certificate(double empirical_loss, double log_density_ratio,
                                  double laplacian_integral, std::size_t m, double delta,
                                  std::size_t K, std::optional<double> xi_log = std::nullopt);

}  // namespace flowcert
