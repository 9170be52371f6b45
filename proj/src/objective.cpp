#include "flowcert/objective.hpp"

#include <stdexcept>
#include <utility>

namespace flowcert {

QuadraticFormObjective::QuadraticFormObjective(Matrix hessian, Vector linear)
    : hessian_(std::move(hessian)), linear_(std::move(linear)) {
    if (hessian_.rows() != hessian_.cols() || hessian_.rows() != linear_.size()) {
        throw std::invalid_argument("QuadraticFormObjective: shape mismatch");
    }
}

QuadraticFormObjective::QuadraticFormObjective(Matrix hessian)
    : QuadraticFormObjective(hessian, Vector::Zero(hessian.rows())) {}

double QuadraticFormObjective::value(const Vector& h) const {
    return 0.5 * h.dot(hessian_ * h) + linear_.dot(h);
}

Vector QuadraticFormObjective::gradient(const Vector& h) const {
    return hessian_ * h + linear_;
}

double QuadraticFormObjective::laplacian(const Vector&) const {
    return hessian_.trace();
}

FunctionObjective::FunctionObjective(std::size_t dimension, ValueFn value, GradientFn gradient,
                                     LaplacianFn laplacian)
    : dimension_(dimension),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      laplacian_(std::move(laplacian)) {}

}  // namespace flowcert
