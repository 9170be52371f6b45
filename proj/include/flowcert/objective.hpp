#pragma once

#include "flowcert/types.hpp"

#include <cstddef>
#include <functional>

namespace flowcert {

struct FieldEval {
    Vector gradient;
    double laplacian = 0.0;
};

// A twice-differentiable training objective C_s over R^N. The flow engine
// needs the gradient (drift) and the Laplacian (log-density rate).
class Objective {
public:
    virtual ~Objective() = default;

    virtual std::size_t dimension() const = 0;
    virtual double value(const Vector& h) const = 0;
    virtual Vector gradient(const Vector& h) const = 0;
    virtual double laplacian(const Vector& h) const = 0;

    // Gradient and Laplacian in one call; override when they share work.
    virtual FieldEval field(const Vector& h) const { return {gradient(h), laplacian(h)}; }
};

// 0.5 h^T H h + b^T h with symmetric H: constant Laplacian Tr H.
class QuadraticFormObjective final : public Objective {
public:
    QuadraticFormObjective(Matrix hessian, Vector linear);
    explicit QuadraticFormObjective(Matrix hessian);

    std::size_t dimension() const override { return static_cast<std::size_t>(linear_.size()); }
    double value(const Vector& h) const override;
    Vector gradient(const Vector& h) const override;
    double laplacian(const Vector& h) const override;

    const Matrix& hessian() const { return hessian_; }

private:
    Matrix hessian_;
    Vector linear_;
};

// Objective assembled from callables; handy for scalar test problems.
class FunctionObjective final : public Objective {
public:
    using ValueFn = std::function<double(const Vector&)>;
    using GradientFn = std::function<Vector(const Vector&)>;
    using LaplacianFn = std::function<double(const Vector&)>;

    FunctionObjective(std::size_t dimension, ValueFn value, GradientFn gradient,
                      LaplacianFn laplacian);

    std::size_t dimension() const override { return dimension_; }
    double value(const Vector& h) const override { return value_(h); }
    Vector gradient(const Vector& h) const override { return gradient_(h); }
    double laplacian(const Vector& h) const override { return laplacian_(h); }

private:
    std::size_t dimension_;
    ValueFn value_;
    GradientFn gradient_;
    LaplacianFn laplacian_;
};

}  // namespace flowcert
