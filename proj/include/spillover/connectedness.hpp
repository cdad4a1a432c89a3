#pragma once

// One-step forecast-error variance decomposition of a fitted VAR(1) and the
// rolling total-connectedness series built from it.
//
// The one-step forecast error of variable i is sum_j theta_ij w_j with
// orthonormal shocks w, so theta is a square root of the residual covariance.
// The lower Cholesky factor is used (ordering-dependent); c_ij is the share
// theta_ij^2 / sum_k theta_ik^2 and total connectedness averages the
// off-diagonal mass, (1/N) sum_{i != j} c_ij.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spillover/panel_io.hpp"
#include "spillover/ridge_var.hpp"
#include "spillover/rolling.hpp"

namespace spillover {

struct ShockBasis {
    Eigen::MatrixXd theta0;            // lower triangular, theta0 * theta0' = sigma
    std::vector<bool> zero_columns;    // pivots that underflowed
};

struct ConnectednessMatrix {
    Eigen::MatrixXd shares;                // c_ij, rows sum to one
    std::vector<std::size_t> ordering;     // orthogonalization order (column indices)
    std::vector<bool> degenerate_rows;     // zero forecast-error variance, set to e_i
};

/// Pivot-free Cholesky of a symmetric PSD matrix. Pivots at or below
/// 1e-12 * trace / N become zero columns. Throws DataError for asymmetric or
/// non-finite input.
ShockBasis shock_basis(const Eigen::MatrixXd& sigma);

ConnectednessMatrix fevd_shares(const ShockBasis& basis);

double total_connectedness(const ConnectednessMatrix& c);

enum class Ordering { input, reversed };

Ordering parse_ordering(std::string_view text);
std::string_view to_string(Ordering ordering);

struct ConnectednessConfig {
    std::size_t window = 300;
    double theta = 100.0;
    double lambda = 100.0;
    std::size_t stride = 1;
    bool standardize = false;
    Ordering ordering = Ordering::input;
    std::size_t workers = 1;
    bool keep_matrices = false;
    double imputation_flag_threshold = 0.25;
};

enum WindowFlag : unsigned {
    kFlagHeavyImputation = 1u << 0,
    kFlagZeroVarianceRow = 1u << 1,
    kFlagPsdClipped = 1u << 2,
};

/// `imputed|zero_variance_row|psd_clipped` subset, empty when clean.
std::string describe_flags(unsigned flags);

/// Connectedness of a single window: ridge fit, residual covariance, shock
/// basis in the configured ordering, FEVD shares (in entity order).
struct WindowConnectedness {
    ConnectednessMatrix matrix;
    double total = 0.0;
    unsigned flags = 0;
};

WindowConnectedness window_connectedness(const WindowView& window, const ConnectednessConfig& config);

struct ConnectednessSeries {
    std::string label;
    std::vector<Date> end_dates;
    std::vector<double> values;
    std::vector<double> imputation_fraction;
    std::vector<unsigned> flags;
    std::vector<Eigen::MatrixXd> matrices;   // only with keep_matrices
    std::vector<Entity> entities;
    ConnectednessConfig config;

    std::size_t size() const { return values.size(); }

    /// Parameter record (window, theta, lambda, stride, ordering, ...).
    std::vector<std::pair<std::string, std::string>> parameters() const;
};

/// Rolling total connectedness. Windows are computed on `config.workers`
/// threads and merged in date order; the result does not depend on the
/// worker count. Errors are rethrown tagged with the window end date.
ConnectednessSeries connectedness_series(const ReturnPanel& panel, const ConnectednessConfig& config,
                                         std::string label = {});

/// max |total(input order) - total(reversed order)| over all windows.
double ordering_sensitivity(const ReturnPanel& panel, const ConnectednessConfig& config);

void write_series_csv(std::ostream& out, const ConnectednessSeries& series);
/// `end_date,entity_i,entity_j,c_ij`; requires keep_matrices.
void write_matrix_dump(std::ostream& out, const ConnectednessSeries& series);
/// Reads the `end_date,total_connectedness,...` format back.
ConnectednessSeries read_series_csv(std::istream& in, std::string label);

}  // namespace spillover
