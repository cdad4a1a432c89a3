#include "spillover/rolling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spillover/errors.hpp"

namespace spillover {

WeightVector exponential_weights(std::size_t window, double theta) {
    if (window < 1) throw std::invalid_argument("exponential_weights: window must be >= 1");
    if (std::isnan(theta) || theta <= 0.0) throw std::invalid_argument("exponential_weights: theta must be > 0");
    std::vector<double> values(window, 1.0);
    if (std::isfinite(theta)) {
        for (std::size_t age = 0; age < window; ++age) {
            values[window - 1 - age] = std::exp(-static_cast<double>(age) / theta);
        }
    }
    return WeightVector(std::move(values), theta);
}

WindowView::WindowView(const ReturnPanel& panel, std::size_t first_row, std::shared_ptr<const WeightVector> weights)
    : panel_(&panel), first_row_(first_row), weights_(std::move(weights)) {
    if (!weights_ || weights_->size() == 0) throw std::invalid_argument("WindowView: empty weights");
    if (first_row_ + weights_->size() > panel.n_dates()) throw std::invalid_argument("WindowView: slice out of range");
}

Eigen::Block<const Eigen::MatrixXd> WindowView::returns() const {
    return panel_->returns().block(static_cast<Eigen::Index>(first_row_), 0, static_cast<Eigen::Index>(size()),
                                   panel_->returns().cols());
}

std::vector<WindowView> rolling_windows(const ReturnPanel& panel, std::size_t window, std::size_t stride,
                                        double theta) {
    if (window < 1) throw std::invalid_argument("rolling_windows: window must be >= 1");
    if (stride < 1) throw std::invalid_argument("rolling_windows: stride must be >= 1");
    const auto rows = panel.n_dates();
    if (rows < window) {
        throw InsufficientDataError("rolling_windows: panel has " + std::to_string(rows) + " rows, window needs " +
                                    std::to_string(window));
    }
    auto weights = std::make_shared<const WeightVector>(exponential_weights(window, theta));
    std::vector<WindowView> out;
    out.reserve((rows - window) / stride + 1);
    for (std::size_t first = 0; first + window <= rows; first += stride) {
        out.emplace_back(panel, first, weights);
    }
    return out;
}

}  // namespace spillover
