#include "spillover/synthlab.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "spillover/errors.hpp"

namespace spillover::synth {

namespace {

bool is_weekend(std::chrono::sys_days d) {
    const std::chrono::weekday wd{d};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

}  // namespace

std::vector<Date> weekdays(Date start, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    auto d = start.days();
    while (out.size() < count) {
        if (!is_weekend(d)) out.emplace_back(d);
        d += std::chrono::days{1};
    }
    return out;
}

ReturnPanel generate_var1(const Var1Spec& spec) {
    const auto& a = spec.coefficients;
    const auto n = a.rows();
    if (n == 0 || a.cols() != n || spec.innovation_covariance.rows() != n || spec.innovation_covariance.cols() != n) {
        throw SpecError("var1 spec: A and Sigma must be square and of equal size");
    }
    if (spec.length == 0) throw SpecError("var1 spec: length must be positive");
    const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
    if (!(radius < 1.0)) throw SpecError("var1 spec: spectral radius " + std::to_string(radius) + " is not below 1");

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(spec.innovation_covariance);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
        throw SpecError("var1 spec: innovation covariance is not PSD");
    }
    const Eigen::MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    std::mt19937_64 engine(spec.seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(n), state = Eigen::VectorXd::Zero(n);
    const auto total = static_cast<Eigen::Index>(kBurnIn + spec.length);
    Eigen::MatrixXd returns(static_cast<Eigen::Index>(spec.length), n);
    for (Eigen::Index t = 0; t < total; ++t) {
        for (Eigen::Index j = 0; j < n; ++j) z(j) = normal(engine);
        state = a * state + root * z;
        if (t >= static_cast<Eigen::Index>(kBurnIn)) returns.row(t - static_cast<Eigen::Index>(kBurnIn)) = state.transpose();
    }

    std::vector<Entity> entities;
    for (Eigen::Index j = 0; j < n; ++j) {
        char id[16];
        std::snprintf(id, sizeof id, "S%03d", static_cast<int>(j + 1));
        entities.push_back(Entity{id, spec.region});
    }
    return ReturnPanel(weekdays(spec.start, spec.length), std::move(entities), std::move(returns),
                       MissingMask::Constant(static_cast<Eigen::Index>(spec.length), n, false));
}

Eigen::MatrixXd random_stable_matrix(std::size_t n, double spectral_radius, std::uint64_t seed) {
    if (n == 0 || !(spectral_radius >= 0.0 && spectral_radius < 1.0)) {
        throw SpecError("random_stable_matrix: need n > 0 and spectral radius in [0, 1)");
    }
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    const auto size = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd a(size, size);
    for (Eigen::Index j = 0; j < size; ++j) {
        for (Eigen::Index i = 0; i < size; ++i) a(i, j) = normal(engine);
    }
    const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
    return radius > 0.0 ? Eigen::MatrixXd(a * (spectral_radius / radius)) : Eigen::MatrixXd::Zero(size, size);
}

CoupledPair generate_coupled_pair(double beta, double noise, std::size_t length, std::uint64_t seed, std::size_t lag) {
    if (length < 20) throw SpecError("coupled pair: length must be >= 20");
    if (lag < 1) throw SpecError("coupled pair: lag must be >= 1");
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    // y carries `lag` pre-sample values so every x_t has a driver.
    std::vector<double> driver(length + lag);
    for (auto& v : driver) v = normal(engine);
    CoupledPair out;
    out.x.label = "x";
    out.y.label = "y";
    out.x.values.resize(length);
    out.y.values.assign(driver.begin() + static_cast<std::ptrdiff_t>(lag), driver.end());
    for (std::size_t t = 0; t < length; ++t) out.x.values[t] = beta * driver[t] + noise * normal(engine);
    return out;
}

ReturnPanel inject_shock(const ReturnPanel& panel, std::size_t row, double magnitude) {
    if (row >= panel.n_dates()) throw std::out_of_range("inject_shock: row outside panel");
    Eigen::MatrixXd returns = panel.returns();
    returns.row(static_cast<Eigen::Index>(row)).array() += magnitude;
    return ReturnPanel(panel.dates(), panel.entities(), std::move(returns), panel.missing());
}

ReturnPanel inject_shock(const ReturnPanel& panel, const Date& date, double magnitude) {
    const auto& dates = panel.dates();
    const auto it = std::lower_bound(dates.begin(), dates.end(), date);
    if (it == dates.end() || *it != date) throw std::out_of_range("inject_shock: date " + date.to_string() + " not in panel");
    return inject_shock(panel, static_cast<std::size_t>(it - dates.begin()), magnitude);
}

PricePanel to_prices(const ReturnPanel& panel, double start) {
    const auto t = panel.returns().rows();
    const auto n = panel.returns().cols();
    if (t == 0) throw InsufficientDataError("to_prices: empty panel");
    Eigen::MatrixXd closes(t + 1, n);
    closes.row(0).setConstant(start);
    for (Eigen::Index i = 0; i < t; ++i) {
        closes.row(i + 1) = closes.row(i).array() * panel.returns().row(i).array().exp();
    }
    std::vector<Date> dates;
    dates.reserve(static_cast<std::size_t>(t + 1));
    auto first = panel.dates().front().days() - std::chrono::days{1};
    while (is_weekend(first)) first -= std::chrono::days{1};
    dates.emplace_back(first);
    dates.insert(dates.end(), panel.dates().begin(), panel.dates().end());
    return PricePanel(std::move(dates), panel.entities(), std::move(closes));
}

}  // namespace spillover::synth
