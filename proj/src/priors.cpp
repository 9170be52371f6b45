#include "flowcert/priors.hpp"

#include "flowcert/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowcert {

PriorSpec PriorSpec::standard(std::size_t N) {
    return PriorSpec{N, 1.0 / static_cast<double>(N)};
}

void PriorSpec::validate() const {
    if (N == 0) {
        throw std::invalid_argument("prior dimension must be positive");
    }
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw std::invalid_argument("prior variance must be positive and finite");
    }
}

Vector sample(const PriorSpec& spec, std::uint64_t seed) {
    spec.validate();
    NormalStream rng(seed);
    const double sd = std::sqrt(spec.variance);
    Vector h(static_cast<Eigen::Index>(spec.N));
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        h[i] = sd * rng.next();
    }
    return h;
}

double log_density(const PriorSpec& spec, const Vector& h) {
    spec.validate();
    if (static_cast<std::size_t>(h.size()) != spec.N) {
        throw std::invalid_argument("log_density: dimension mismatch");
    }
    const double n = static_cast<double>(spec.N);
    return -h.squaredNorm() / (2.0 * spec.variance) -
           0.5 * n * std::log(2.0 * std::numbers::pi * spec.variance);
}

double log_density_ratio(const PriorSpec& spec, const Vector& h0, const Vector& hT) {
    return log_density(spec, h0) - log_density(spec, hT);
}

}  // namespace flowcert
