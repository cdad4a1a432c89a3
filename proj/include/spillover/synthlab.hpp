#pragma once

// Synthetic panels and coupled series with known ground truth. Gaussian
// innovations only; every generator is a pure function of its spec and seed.

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "spillover/panel_io.hpp"
#include "spillover/transfer_entropy.hpp"

namespace spillover::synth {

inline constexpr std::size_t kBurnIn = 500;

struct Var1Spec {
    Eigen::MatrixXd coefficients;  // A, spectral radius < 1
    Eigen::MatrixXd innovation_covariance;  // PSD
    std::size_t length = 0;
    std::uint64_t seed = 0;
    Date start{2005, 1, 3};
    std::string region;
};

/// Y_t = A Y_{t-1} + eps_t, eps ~ N(0, Sigma), after a 500-step burn-in.
/// Entities are S001, S002, ... tagged with spec.region; dates are weekdays
/// from spec.start. Throws SpecError for an unstable A or a non-PSD Sigma.
ReturnPanel generate_var1(const Var1Spec& spec);

/// Random N x N coefficient matrix rescaled to the given spectral radius.
Eigen::MatrixXd random_stable_matrix(std::size_t n, double spectral_radius, std::uint64_t seed);

struct CoupledPair {
    ChangeSeries x;  // driven
    ChangeSeries y;  // driver, iid N(0, 1)
};

/// y iid N(0,1); x_t = beta * y_{t-lag} + noise * eta_t.
CoupledPair generate_coupled_pair(double beta, double noise, std::size_t length, std::uint64_t seed,
                                  std::size_t lag = 1);

/// Adds `magnitude` to every entity on one row.
ReturnPanel inject_shock(const ReturnPanel& panel, std::size_t row, double magnitude);
ReturnPanel inject_shock(const ReturnPanel& panel, const Date& date, double magnitude);

/// Prices from returns: close_0 = start, close_t = close_{t-1} exp(r_t). The
/// first date is the day before the first return date.
PricePanel to_prices(const ReturnPanel& panel, double start = 100.0);

/// Consecutive weekdays beginning at (or after) `start`.
std::vector<Date> weekdays(Date start, std::size_t count);

}  // namespace spillover::synth
