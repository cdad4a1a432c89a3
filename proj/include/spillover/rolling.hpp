#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "spillover/panel_io.hpp"

namespace spillover {

inline constexpr double kEqualWeights = std::numeric_limits<double>::infinity();

/// Exponential age weights exp(-age/theta) for one window, stored oldest
/// first so that `values()[k]` lines up with row k of the window. Weights are
/// raw: the most recent observation has weight 1.
class WeightVector {
public:
    WeightVector(std::vector<double> values, double theta) : values_(std::move(values)), theta_(theta) {}

    const std::vector<double>& values() const { return values_; }
    double theta() const { return theta_; }
    std::size_t size() const { return values_.size(); }

    /// Weight of the observation `age` rows before the most recent one.
    double by_age(std::size_t age) const { return values_[values_.size() - 1 - age]; }

private:
    std::vector<double> values_;
    double theta_;
};

/// theta = kEqualWeights gives the classical equal-weight window.
WeightVector exponential_weights(std::size_t window, double theta);

/// Read-only slice of W consecutive rows of a ReturnPanel. The panel must
/// outlive every view taken from it.
class WindowView {
public:
    WindowView(const ReturnPanel& panel, std::size_t first_row, std::shared_ptr<const WeightVector> weights);

    std::size_t first_row() const { return first_row_; }
    std::size_t size() const { return weights_->size(); }
    std::size_t last_row() const { return first_row_ + size() - 1; }
    const Date& end_date() const { return panel_->dates()[last_row()]; }
    const WeightVector& weights() const { return *weights_; }
    const ReturnPanel& panel() const { return *panel_; }

    Eigen::Block<const Eigen::MatrixXd> returns() const;
    double imputation_fraction() const { return panel_->imputation_fraction(first_row_, size()); }

private:
    const ReturnPanel* panel_;
    std::size_t first_row_;
    std::shared_ptr<const WeightVector> weights_;
};

/// Windows end at rows W-1, W-1+S, ...; all share one WeightVector.
std::vector<WindowView> rolling_windows(const ReturnPanel& panel, std::size_t window, std::size_t stride,
                                        double theta);

}  // namespace spillover
