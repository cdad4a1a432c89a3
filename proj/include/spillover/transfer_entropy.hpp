#pragma once

// Directed information flow between two change series.
//
// T_{Y->X} = H(X_t | X_{t-L}) - H(X_t | X_{t-L}, Y_{t-L}), with
// H(A|B) = H(A,B) - H(B). Two estimators:
//   linear     Gaussian entropies; reduces to half the log ratio of the
//              restricted and full OLS residual variances (Granger form).
//   nonlinear  each series mapped to {-,0,+} by a band of +-delta standard
//              deviations around its mean; plug-in entropies of the joint
//              symbol frequencies.
// All values are in nats. Functions take (target, source) and return the
// flow source -> target.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spillover/connectedness.hpp"

namespace spillover {

struct ChangeSeries {
    std::vector<double> values;
    std::size_t horizon = 1;
    std::string label;
};

/// horizon 1: first differences; horizon h > 1: non-overlapping differences
/// v[k h] - v[(k-1) h], k = 1..floor((L-1)/h).
ChangeSeries difference_series(std::span<const double> levels, std::size_t horizon, std::string label = {});
ChangeSeries difference_series(const ConnectednessSeries& series, std::size_t horizon);

enum class Symbol : std::uint8_t { minus = 0, zero = 1, plus = 2 };

struct SymbolSeries {
    std::vector<Symbol> symbols;
    double delta = 1.0;
    double mu = 0.0;
    double sigma = 0.0;
    bool degenerate = false;  // sigma == 0, every symbol is zero
};

/// mu and sigma are the full-sample mean and population standard deviation.
SymbolSeries discretize_three_band(std::span<const double> values, double delta);
/// Same thresholds with caller-supplied mu and sigma.
SymbolSeries discretize_three_band(std::span<const double> values, double delta, double mu, double sigma);

/// Base-3 code of a symbol tuple, first symbol most significant.
std::uint32_t tuple_code(std::initializer_list<Symbol> tuple);

/// Plug-in entropy (nats) of the empirical distribution of tuple codes.
double plugin_entropy(std::span<const std::uint32_t> tuple_codes);

struct Estimator {
    enum class Kind { linear, nonlinear };
    Kind kind = Kind::linear;
    double delta = 0.0;  // band half-width, nonlinear only

    static Estimator linear() { return {Kind::linear, 0.0}; }
    static Estimator nonlinear(double delta) { return {Kind::nonlinear, delta}; }

    /// `linear`, `nonlinear_1sigma`, `nonlinear_2.5sigma`, ...
    std::string name() const;

    friend bool operator==(const Estimator&, const Estimator&) = default;
};

struct LinearTe {
    double te = 0.0;
    bool rank_deficient = false;  // regressors collinear; minimum-norm solution used
};

/// Regression-ratio form: 0.5 ln(SSR_restricted / SSR_full), OLS with
/// intercept. Throws DegenerateSeriesError when the restricted residual
/// variance is zero.
LinearTe linear_te(std::span<const double> target, std::span<const double> source, std::size_t lag);

/// Gaussian entropy form built from 0.5 log det(2 pi e Sigma) of the four
/// joint covariance matrices. Agrees with linear_te on non-degenerate data.
double linear_te_logdet(std::span<const double> target, std::span<const double> source, std::size_t lag);

/// Upper-tail p-value of the nested-regression F statistic for adding the
/// lagged source, with (1, T - lag - 3) degrees of freedom.
double linear_te_f_pvalue(std::span<const double> target, std::span<const double> source, std::size_t lag);

struct NonlinearTe {
    double te = 0.0;
    bool degenerate = false;  // both series constant
};

NonlinearTe nonlinear_te(std::span<const double> target, std::span<const double> source, std::size_t lag,
                         double delta);

/// Dispatches on the estimator.
double transfer_entropy(std::span<const double> target, std::span<const double> source, std::size_t lag,
                        const Estimator& estimator);

struct TeEstimate {
    double te = 0.0;
    Estimator estimator;
    std::size_t lag = 1;
};

double net_information_flow(double te_xy, double te_yx);
/// Throws std::invalid_argument unless both estimates share estimator and lag.
double net_information_flow(const TeEstimate& xy, const TeEstimate& yx);

struct PermutationTest {
    double te_observed = 0.0;
    double p_value = 1.0;
    std::size_t n_exceed = 0;
    std::size_t n_perm = 0;
    std::uint64_t seed = 0;
};

/// Shuffles the lagged source column (target and its own lag untouched),
/// recomputes the estimator per replica and returns
/// p = (1 + #{te_perm >= te_obs}) / (1 + n_perm). Replica r draws from its
/// own stream derived from (seed, r), so the result is independent of
/// `workers`.
PermutationTest permutation_pvalue(std::span<const double> target, std::span<const double> source, std::size_t lag,
                                   const Estimator& estimator, std::size_t n_perm, std::uint64_t seed,
                                   std::size_t workers = 1);

/// Per-replica generator seed; exposed for reproducibility checks.
std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica);

struct TeConfig {
    std::size_t lag = 1;
    std::size_t horizon = 1;
    std::vector<double> deltas{1.0, 2.0, 3.0};
    std::size_t n_perm = 10000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// One estimator applied to one unordered pair (x, y) in both directions.
struct TeResult {
    std::string x_label;
    std::string y_label;
    Estimator estimator;
    std::size_t lag = 1;
    double te_xy = 0.0;  // T_{X->Y}
    double te_yx = 0.0;  // T_{Y->X}
    double net_flow = 0.0;  // te_xy - te_yx
    double p_xy = 1.0;
    double p_yx = 1.0;
    std::optional<double> p_xy_f;  // linear only
    std::optional<double> p_yx_f;
    std::size_t n_perm = 0;
    std::uint64_t seed = 0;
};

struct TeTable {
    std::size_t horizon = 1;
    std::size_t lag = 1;
    std::size_t n_perm = 0;
    std::uint64_t seed = 0;
    std::vector<TeResult> rows;  // grouped by unordered pair, estimators in order
};

/// Every unordered pair (in input order) x every estimator (linear, then
/// nonlinear for each delta). Requires at least two series of equal length.
TeTable te_table(const std::vector<ChangeSeries>& changes, const TeConfig& config);

/// Differences each series at config.horizon first. Series must share the
/// same end dates (intersect them beforehand); otherwise AlignmentError.
TeTable te_table(const std::vector<ConnectednessSeries>& series, const TeConfig& config);

/// "***" p < 0.001, "**" p < 0.01, "*" p < 0.05, "" otherwise.
std::string significance_stars(double p);

/// `pair,direction,estimator,te,p_perm,p_f,net_flow,stars`, two rows per result.
void write_te_csv(std::ostream& out, const TeTable& table);

/// Human-readable table grouped by pair, 6-decimal values with stars.
void write_te_report(std::ostream& out, const TeTable& table);

}  // namespace spillover
