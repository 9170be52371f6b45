#pragma once

#include "flowcert/types.hpp"

#include <cstddef>
#include <cstdint>

namespace flowcert {

// Isotropic centred Gaussian over R^N with per-component variance.
struct PriorSpec {
    std::size_t N = 1;
    double variance = 1.0;

    // Variance 1/N, the default initialisation scale.
    static PriorSpec standard(std::size_t N);
    void validate() const;
};

Vector sample(const PriorSpec& spec, std::uint64_t seed);

double log_density(const PriorSpec& spec, const Vector& h);

// log rho0(h0) - log rho0(hT).
double log_density_ratio(const PriorSpec& spec, const Vector& h0, const Vector& hT);

}  // namespace flowcert
