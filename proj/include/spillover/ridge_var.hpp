#pragma once

// Exponentially weighted, ridge-regularized VAR(1) on one rolling window.
//
// For a window of W return rows r_0..r_{W-1} the regression pairs are
// (x_t, y_t) = (r_{t-1}, r_t), t = 1..W-1, each carrying the weight of its
// current row. Both blocks are demeaned with those weights (no intercept
// column, so the penalty never touches a mean term), rows are scaled by
// sqrt(w_t), and the coefficients solve
//
//     (X'WX + lambda I) A' = X'WY
//
// by a Cholesky solve. Pair weights are rescaled to mean one before use, so
// the fit is invariant to the overall weight scale and equal weights
// reproduce ordinary (ridge) least squares on the raw sample.

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "spillover/rolling.hpp"

namespace spillover {

struct RidgeOptions {
    double lambda = 100.0;
    /// Divide every variable by its weighted standard deviation before
    /// penalizing; coefficients are mapped back to the raw scale.
    bool standardize = false;
};

struct VarModel {
    Eigen::MatrixXd coefficients;  // A; row i is the equation of variable i
    Eigen::MatrixXd sigma_eps;     // weighted residual covariance
    double lambda = 0.0;
    std::size_t n_obs = 0;         // W - 1
    bool standardized = false;
    bool psd_clipped = false;      // a negative eigenvalue below -1e-8 was clipped
};

struct ResidualCovariance {
    Eigen::MatrixXd sigma;
    double min_eigenvalue = 0.0;   // before clipping
    bool clipped_warning = false;  // min_eigenvalue < -1e-8
};

VarModel fit_ridge_var(const WindowView& window, const RidgeOptions& options = {});

/// Same fit on raw rows (oldest first) with one positive weight per row.
VarModel fit_ridge_var(const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const double> row_weights,
                       const RidgeOptions& options = {});

/// Sigma = sum_t w_t e_t e_t' / sum_t w_t with e_t = y_t - A x_t on the
/// weighted-demeaned pairs; symmetrized, negative eigenvalues clipped to 0.
ResidualCovariance residual_covariance(const Eigen::MatrixXd& coefficients, const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                       std::span<const double> row_weights);
ResidualCovariance residual_covariance(const VarModel& model, const WindowView& window);

}  // namespace spillover
