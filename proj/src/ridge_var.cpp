#include "spillover/ridge_var.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kNegativeEigenWarning = 1e-8;
constexpr double kMinReciprocalCondition = 1e-13;

struct LaggedDesign {
    Eigen::MatrixXd x;  // demeaned lagged rows, n_obs x N
    Eigen::MatrixXd y;  // demeaned current rows, n_obs x N
    Eigen::VectorXd w;  // pair weights rescaled to mean one
};

LaggedDesign build_design(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const double> row_weights) {
    const Eigen::Index t_rows = rows.rows();
    if (t_rows < 2) throw InsufficientDataError("VAR(1) fit needs a window of at least 2 rows");
    if (static_cast<Eigen::Index>(row_weights.size()) != t_rows) {
        throw std::invalid_argument("VAR(1) fit: one weight per row required");
    }
    if (!rows.allFinite()) throw DataError("VAR(1) fit: non-finite return in window");

    const Eigen::Index n_obs = t_rows - 1;
    LaggedDesign d;
    d.w.resize(n_obs);
    for (Eigen::Index t = 0; t < n_obs; ++t) {
        const double w = row_weights[static_cast<std::size_t>(t + 1)];
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("VAR(1) fit: weights must be positive and finite");
        d.w(t) = w;
    }
    d.w *= static_cast<double>(n_obs) / d.w.sum();

    const double total = d.w.sum();
    const Eigen::RowVectorXd x_mean = (d.w.transpose() * rows.topRows(n_obs)) / total;
    const Eigen::RowVectorXd y_mean = (d.w.transpose() * rows.bottomRows(n_obs)) / total;
    d.x = rows.topRows(n_obs).rowwise() - x_mean;
    d.y = rows.bottomRows(n_obs).rowwise() - y_mean;
    return d;
}

ResidualCovariance covariance_of(const LaggedDesign& d, const Eigen::MatrixXd& coefficients) {
    const Eigen::MatrixXd e = d.y - d.x * coefficients.transpose();
    Eigen::MatrixXd sigma = (e.transpose() * d.w.asDiagonal() * e) / d.w.sum();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();

    ResidualCovariance out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    out.min_eigenvalue = eig.eigenvalues().minCoeff();
    if (out.min_eigenvalue < 0.0) {
        const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
        sigma = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        sigma = 0.5 * (sigma + sigma.transpose()).eval();
        out.clipped_warning = out.min_eigenvalue < -kNegativeEigenWarning;
    }
    out.sigma = std::move(sigma);
    return out;
}

}  // namespace

VarModel fit_ridge_var(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const double> row_weights,
                       const RidgeOptions& options) {
    if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda)) {
        throw std::invalid_argument("VAR(1) fit: lambda must be finite and >= 0");
    }
    const LaggedDesign d = build_design(rows, row_weights);
    const Eigen::Index n = rows.cols();

    Eigen::VectorXd scale = Eigen::VectorXd::Ones(n);
    if (options.standardize) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double var = d.w.dot(d.y.col(j).cwiseAbs2()) / d.w.sum();
            if (var > 0.0) scale(j) = std::sqrt(var);
        }
    }
    const Eigen::MatrixXd xs = d.x * scale.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd ys = d.y * scale.cwiseInverse().asDiagonal();

    Eigen::MatrixXd gram = xs.transpose() * d.w.asDiagonal() * xs;
    gram.diagonal().array() += options.lambda;
    const Eigen::MatrixXd cross = xs.transpose() * d.w.asDiagonal() * ys;

    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < kMinReciprocalCondition) {
        throw SingularSystemError("VAR(1) normal equations are singular; use a positive lambda (ridge penalty)");
    }
    const Eigen::MatrixXd a_scaled = llt.solve(cross).transpose();

    VarModel model;
    model.coefficients = scale.asDiagonal() * a_scaled * scale.cwiseInverse().asDiagonal();
    if (!model.coefficients.allFinite()) throw DataError("VAR(1) fit produced non-finite coefficients");
    const auto cov = covariance_of(d, model.coefficients);
    model.sigma_eps = cov.sigma;
    model.psd_clipped = cov.clipped_warning;
    model.lambda = options.lambda;
    model.n_obs = static_cast<std::size_t>(d.w.size());
    model.standardized = options.standardize;
    return model;
}

VarModel fit_ridge_var(const WindowView& window, const RidgeOptions& options) {
    return fit_ridge_var(window.returns(), window.weights().values(), options);
}

ResidualCovariance residual_covariance(const Eigen::MatrixXd& coefficients, const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                       std::span<const double> row_weights) {
    if (coefficients.rows() != rows.cols() || coefficients.cols() != rows.cols()) {
        throw std::invalid_argument("residual_covariance: coefficient shape does not match window");
    }
    return covariance_of(build_design(rows, row_weights), coefficients);
}

ResidualCovariance residual_covariance(const VarModel& model, const WindowView& window) {
    return residual_covariance(model.coefficients, window.returns(), window.weights().values());
}

}  // namespace spillover
