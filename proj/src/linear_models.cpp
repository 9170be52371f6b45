#include "flowcert/linear_models.hpp"

#include "flowcert/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace flowcert {

namespace {

Eigen::Map<const RowMatrix> as_matrix(const Vector& h, const ModelShape& shape) {
    if (static_cast<std::size_t>(h.size()) != shape.N()) {
        throw std::invalid_argument("hypothesis size does not match the model shape");
    }
    return {h.data(), static_cast<Eigen::Index>(shape.outputs),
            static_cast<Eigen::Index>(shape.width)};
}

int decide(const Eigen::Ref<const Eigen::RowVectorXd>& f, bool binary) {
    if (binary) {
        return f[0] >= 0.0 ? 1 : -1;
    }
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < f.size(); ++k) {
        if (f[k] > f[best]) {
            best = k;
        }
    }
    return static_cast<int>(best);
}

void require_batch(const FeatureBatch& batch) {
    if (!batch.phi || !batch.labels || batch.m() == 0) {
        throw std::invalid_argument("empty feature batch");
    }
    if (static_cast<std::size_t>(batch.phi->rows()) != batch.m()) {
        throw std::invalid_argument("feature rows and labels disagree");
    }
}

}  // namespace

FeatureMap::FeatureMap(Matrix weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) {
        throw std::invalid_argument("empty feature map");
    }
}

FeatureMap FeatureMap::random(std::size_t input_dim, std::size_t width, std::uint64_t seed) {
    NormalStream rng(seed);
    const double sd = 1.0 / std::sqrt(static_cast<double>(input_dim));
    Matrix w(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(input_dim));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            w(r, c) = sd * rng.next();
        }
    }
    return FeatureMap(std::move(w));
}

Vector FeatureMap::features(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim()) {
        throw std::invalid_argument("input dimension mismatch in feature map");
    }
    return (weights_ * x).cwiseMax(0.0);
}

Matrix FeatureMap::features(const Matrix& inputs) const {
    if (static_cast<std::size_t>(inputs.cols()) != input_dim()) {
        throw std::invalid_argument("input dimension mismatch in feature map");
    }
    Matrix phi = inputs * weights_.transpose();
    return phi.cwiseMax(0.0);
}

FeatureBatch FeatureBatch::make(Matrix phi, std::vector<int> labels) {
    if (static_cast<std::size_t>(phi.rows()) != labels.size()) {
        throw std::invalid_argument("feature rows and labels disagree");
    }
    return FeatureBatch{std::make_shared<const Matrix>(std::move(phi)),
                        std::make_shared<const std::vector<int>>(std::move(labels))};
}

FeatureBatch FeatureBatch::gather(std::span<const std::size_t> rows) const {
    Matrix sub(static_cast<Eigen::Index>(rows.size()), phi->cols());
    std::vector<int> sub_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sub.row(static_cast<Eigen::Index>(i)) = phi->row(static_cast<Eigen::Index>(rows[i]));
        sub_labels[i] = (*labels)[rows[i]];
    }
    return make(std::move(sub), std::move(sub_labels));
}

Matrix logits(const Vector& h, const ModelShape& shape, const Matrix& phi) {
    return phi * as_matrix(h, shape).transpose();
}

std::vector<int> predict(const Vector& h, const ModelShape& shape, const Matrix& phi) {
    const Matrix f = logits(h, shape, phi);
    std::vector<int> out(static_cast<std::size_t>(f.rows()));
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = decide(f.row(r), shape.binary());
    }
    return out;
}

ZeroOneResult zero_one_losses(const Vector& h, const ModelShape& shape, const FeatureBatch& batch) {
    require_batch(batch);
    const std::vector<int> pred = predict(h, shape, *batch.phi);
    ZeroOneResult r;
    r.wrong.resize(pred.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        r.wrong[i] = pred[i] != (*batch.labels)[i] ? 1 : 0;
        count += r.wrong[i];
    }
    r.error = static_cast<double>(count) / static_cast<double>(pred.size());
    return r;
}

std::vector<double> streamed_zero_one_errors(std::span<const Vector> hypotheses,
                                             const ModelShape& shape, const FeatureMap& map,
                                             const Matrix& inputs, std::span<const int> labels,
                                             std::size_t chunk_rows) {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size() || labels.empty()) {
        throw std::invalid_argument("inputs and labels disagree or are empty");
    }
    const auto K = static_cast<Eigen::Index>(shape.outputs);
    const auto nh = static_cast<Eigen::Index>(hypotheses.size());
    Matrix stacked(nh * K, static_cast<Eigen::Index>(shape.width));
    for (Eigen::Index j = 0; j < nh; ++j) {
        stacked.middleRows(j * K, K) = as_matrix(hypotheses[static_cast<std::size_t>(j)], shape);
    }
    std::vector<std::size_t> wrong(hypotheses.size(), 0);
    const Eigen::Index total = inputs.rows();
    chunk_rows = std::max<std::size_t>(1, chunk_rows);
    for (Eigen::Index start = 0; start < total; start += static_cast<Eigen::Index>(chunk_rows)) {
        const Eigen::Index rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_rows),
                                                         total - start);
        const Matrix phi = map.features(Matrix(inputs.middleRows(start, rows)));
        const Matrix f = phi * stacked.transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
            const int truth = labels[static_cast<std::size_t>(start + r)];
            for (Eigen::Index j = 0; j < nh; ++j) {
                if (decide(f.row(r).segment(j * K, K), shape.binary()) != truth) {
                    ++wrong[static_cast<std::size_t>(j)];
                }
            }
        }
    }
    std::vector<double> errors(hypotheses.size());
    for (std::size_t j = 0; j < errors.size(); ++j) {
        errors[j] = static_cast<double>(wrong[j]) / static_cast<double>(total);
    }
    return errors;
}

SufficientStats sufficient_stats(const FeatureBatch& batch, double alpha, bool with_theta) {
    require_batch(batch);
    const Matrix& phi = *batch.phi;
    const double m = static_cast<double>(batch.m());
    Vector y(phi.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y[i] = static_cast<double>((*batch.labels)[static_cast<std::size_t>(i)]);
    }
    SufficientStats s;
    s.alpha = alpha;
    s.gamma = phi.transpose() * y / m;
    s.Gamma = alpha + phi.squaredNorm() / m;
    if (with_theta) {
        const double n = static_cast<double>(phi.cols());
        Matrix theta = phi.transpose() * phi / m;
        theta.diagonal().array() += alpha / n;
        s.Theta = std::move(theta);
    }
    return s;
}

LinearSurrogate::LinearSurrogate(const FeatureBatch& batch)
    : gamma_(sufficient_stats(batch, 0.0, false).gamma) {}

QuadraticSurrogate::QuadraticSurrogate(FeatureBatch batch, double alpha, double beta)
    : batch_(std::move(batch)), alpha_(alpha), beta_(beta) {
    require_batch(batch_);
    if (alpha_ < 0.0) {
        throw std::invalid_argument("alpha must be non-negative");
    }
    Gamma_ = alpha_ + batch_.phi->squaredNorm() / static_cast<double>(batch_.m());
}

double QuadraticSurrogate::value(const Vector& h) const {
    const Matrix& phi = *batch_.phi;
    const double n = static_cast<double>(phi.cols());
    const Vector f = phi * h;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const double r = f[i] - beta_ * (*batch_.labels)[static_cast<std::size_t>(i)];
        sum += r * r;
    }
    return alpha_ * h.squaredNorm() / (2.0 * n) + 0.5 * sum / static_cast<double>(batch_.m());
}

Vector QuadraticSurrogate::gradient(const Vector& h) const {
    const Matrix& phi = *batch_.phi;
    const double n = static_cast<double>(phi.cols());
    Vector residual = phi * h;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
        residual[i] -= beta_ * (*batch_.labels)[static_cast<std::size_t>(i)];
    }
    return (alpha_ / n) * h + phi.transpose() * residual / static_cast<double>(batch_.m());
}

CrossEntropySurrogate::CrossEntropySurrogate(FeatureBatch batch, std::size_t outputs)
    : batch_(std::move(batch)), shape_{outputs, 0} {
    require_batch(batch_);
    if (outputs < 2) {
        throw std::invalid_argument("cross-entropy needs at least two classes");
    }
    shape_.width = batch_.width();
    for (int y : *batch_.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= outputs) {
            throw std::invalid_argument("class label out of range for cross-entropy");
        }
    }
    feature_sq_norms_ = batch_.phi->rowwise().squaredNorm();
}

double CrossEntropySurrogate::example_laplacian(const Eigen::Ref<const Eigen::RowVectorXd>& f,
                                                double feature_sq_norm) {
    const double mx = f.maxCoeff();
    const Eigen::RowVectorXd e = (f.array() - mx).exp().matrix();
    const double sum = e.sum();
    return feature_sq_norm * (1.0 - e.squaredNorm() / (sum * sum));
}

double CrossEntropySurrogate::value(const Vector& h) const {
    const Matrix f = logits(h, shape_, *batch_.phi);
    double total = 0.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        const double mx = f.row(r).maxCoeff();
        const double lse = mx + std::log((f.row(r).array() - mx).exp().sum());
        total += lse - f(r, (*batch_.labels)[static_cast<std::size_t>(r)]);
    }
    return total / static_cast<double>(batch_.m());
}

double CrossEntropySurrogate::laplacian(const Vector& h) const {
    const Matrix f = logits(h, shape_, *batch_.phi);
    double total = 0.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        total += example_laplacian(f.row(r), feature_sq_norms_[r]);
    }
    return total / static_cast<double>(batch_.m());
}

FieldEval CrossEntropySurrogate::field(const Vector& h) const {
    Matrix p = logits(h, shape_, *batch_.phi);
    const double m = static_cast<double>(batch_.m());
    double lap = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp().matrix();
        const double sum = p.row(r).sum();
        p.row(r) /= sum;
        lap += feature_sq_norms_[r] * (1.0 - p.row(r).squaredNorm());
        p(r, (*batch_.labels)[static_cast<std::size_t>(r)]) -= 1.0;
    }
    FieldEval out;
    out.gradient.resize(static_cast<Eigen::Index>(shape_.N()));
    Eigen::Map<RowMatrix>(out.gradient.data(), static_cast<Eigen::Index>(shape_.outputs),
                          static_cast<Eigen::Index>(shape_.width)) =
        p.transpose() * (*batch_.phi) / m;
    out.laplacian = lap / m;
    return out;
}

Vector linear_analytic_flow(const Vector& h0, const SufficientStats& stats, double T) {
    return h0 + T * stats.gamma;
}

QuadraticFlowSolver::QuadraticFlowSolver(const Matrix& Theta, const Vector& gamma, double beta) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Theta);
    if (eig.info() != Eigen::Success) {
        throw UndefinedResult("eigendecomposition of Theta failed");
    }
    eigenvalues_ = eig.eigenvalues();
    eigenvectors_ = eig.eigenvectors();
    const double top = eigenvalues_.maxCoeff();
    const double bottom = eigenvalues_.minCoeff();
    if (!(top > 0.0) || bottom < 1e-12 * top) {
        throw UndefinedResult("Theta is near-singular (smallest eigenvalue " +
                              std::to_string(bottom) + "); use alpha > 0");
    }
    const Vector rotated = eigenvectors_.transpose() * (beta * gamma);
    fixed_point_ = eigenvectors_ * rotated.cwiseQuotient(eigenvalues_);
}

Vector QuadraticFlowSolver::at(const Vector& h0, double T) const {
    const Vector gap = eigenvectors_.transpose() * (fixed_point_ - h0);
    const Vector decay = (1.0 - (-T * eigenvalues_.array()).exp()).matrix();
    return h0 + eigenvectors_ * decay.cwiseProduct(gap);
}

Vector quadratic_analytic_flow(const Vector& h0, const SufficientStats& stats, double beta,
                               double T) {
    if (!stats.Theta) {
        throw std::invalid_argument("quadratic_analytic_flow needs Theta in the statistics");
    }
    return QuadraticFlowSolver(*stats.Theta, stats.gamma, beta).at(h0, T);
}

}  // namespace flowcert
