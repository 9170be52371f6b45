#pragma once

#include "flowcert/objective.hpp"
#include "flowcert/types.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace flowcert {

// Frozen random-feature map x -> ReLU(W x).
class FeatureMap {
public:
    // `weights` is width x input_dim.
    explicit FeatureMap(Matrix weights);

    // Entries of W drawn i.i.d. from N(0, 1/input_dim).
    static FeatureMap random(std::size_t input_dim, std::size_t width, std::uint64_t seed);

    std::size_t input_dim() const { return static_cast<std::size_t>(weights_.cols()); }
    std::size_t width() const { return static_cast<std::size_t>(weights_.rows()); }
    const Matrix& weights() const { return weights_; }

    Vector features(const Vector& x) const;
    // One row of features per row of `inputs`.
    Matrix features(const Matrix& inputs) const;

private:
    Matrix weights_;
};

// Shape of h viewed as an outputs x width matrix, stored row-major in a flat
// vector. outputs == 1 is the binary sign-readout model.
struct ModelShape {
    std::size_t outputs = 1;
    std::size_t width = 1;

    std::size_t N() const { return outputs * width; }
    bool binary() const { return outputs == 1; }
};

// Precomputed features and labels of a dataset or batch. Binary models use
// labels in {-1,+1}; multi-class models use class ids 0..outputs-1.
struct FeatureBatch {
    std::shared_ptr<const Matrix> phi;
    std::shared_ptr<const std::vector<int>> labels;

    static FeatureBatch make(Matrix phi, std::vector<int> labels);
    std::size_t m() const { return labels ? labels->size() : 0; }
    std::size_t width() const { return phi ? static_cast<std::size_t>(phi->cols()) : 0; }
    // Copies the selected rows into a new batch.
    FeatureBatch gather(std::span<const std::size_t> rows) const;
};

// Model outputs F = h Phi(x), one row per example.
Matrix logits(const Vector& h, const ModelShape& shape, const Matrix& phi);

// Predicted label: sign with sign(0) = +1 for binary, argmax with ties to the
// lowest index otherwise.
std::vector<int> predict(const Vector& h, const ModelShape& shape, const Matrix& phi);

struct ZeroOneResult {
    double error = 0.0;
    std::vector<std::uint8_t> wrong;
};

ZeroOneResult zero_one_losses(const Vector& h, const ModelShape& shape, const FeatureBatch& batch);

// 01-errors of several hypotheses on a dataset whose features are computed
// in chunks (never materialised in full).
std::vector<double> streamed_zero_one_errors(std::span<const Vector> hypotheses,
                                             const ModelShape& shape, const FeatureMap& map,
                                             const Matrix& inputs, std::span<const int> labels,
                                             std::size_t chunk_rows = 2048);

// gamma = mean f*(x) Phi(x); Gamma = alpha + mean |Phi(x)|^2;
// Theta = (alpha/N) Id + mean Phi Phi^T (only built on request: it is w x w).
struct SufficientStats {
    Vector gamma;
    double Gamma = 0.0;
    std::optional<Matrix> Theta;
    double alpha = 0.0;
};

SufficientStats sufficient_stats(const FeatureBatch& batch, double alpha, bool with_theta);

// -(1/m) sum F(x) f*(x) = -h . gamma; Laplacian identically 0.
class LinearSurrogate final : public Objective {
public:
    explicit LinearSurrogate(const FeatureBatch& batch);

    std::size_t dimension() const override { return static_cast<std::size_t>(gamma_.size()); }
    double value(const Vector& h) const override { return -h.dot(gamma_); }
    Vector gradient(const Vector&) const override { return -gamma_; }
    double laplacian(const Vector&) const override { return 0.0; }

    const Vector& gamma() const { return gamma_; }

private:
    Vector gamma_;
};

// alpha |h|^2 / (2N) + (1/m) sum (F - beta y)^2 / 2. Laplacian is Gamma.
class QuadraticSurrogate final : public Objective {
public:
    QuadraticSurrogate(FeatureBatch batch, double alpha, double beta);

    std::size_t dimension() const override { return batch_.width(); }
    double value(const Vector& h) const override;
    Vector gradient(const Vector& h) const override;
    double laplacian(const Vector&) const override { return Gamma_; }

    double Gamma() const { return Gamma_; }

private:
    FeatureBatch batch_;
    double alpha_;
    double beta_;
    double Gamma_;
};

// Softmax cross-entropy over `outputs` classes.
class CrossEntropySurrogate final : public Objective {
public:
    CrossEntropySurrogate(FeatureBatch batch, std::size_t outputs);

    std::size_t dimension() const override { return shape_.N(); }
    double value(const Vector& h) const override;
    Vector gradient(const Vector& h) const override { return field(h).gradient; }
    double laplacian(const Vector& h) const override;
    FieldEval field(const Vector& h) const override;

    const ModelShape& shape() const { return shape_; }

    // |Phi|^2 (1 - sum_k softmax(F)_k^2): the Laplacian of one example's
    // loss, given its logits and squared feature norm.
    static double example_laplacian(const Eigen::Ref<const Eigen::RowVectorXd>& logits,
                                    double feature_sq_norm);

private:
    FeatureBatch batch_;
    ModelShape shape_;
    Vector feature_sq_norms_;
};

Vector linear_analytic_flow(const Vector& h0, const SufficientStats& stats, double T);

// Closed-form quadratic-surrogate flow h_T = h0 + (Id - e^{-T Theta})(Theta^{-1} beta gamma - h0)
// through one symmetric eigendecomposition of Theta.
class QuadraticFlowSolver {
public:
    QuadraticFlowSolver(const Matrix& Theta, const Vector& gamma, double beta);

    Vector at(const Vector& h0, double T) const;
    const Vector& fixed_point() const { return fixed_point_; }
    const Vector& eigenvalues() const { return eigenvalues_; }

private:
    Matrix eigenvectors_;
    Vector eigenvalues_;
    Vector fixed_point_;
};

Vector quadratic_analytic_flow(const Vector& h0, const SufficientStats& stats, double beta,
                               double T);

}  // namespace flowcert
