#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "spillover/errors.hpp"
#include "spillover/ridge_var.hpp"
#include "spillover/synthlab.hpp"

using namespace spillover;

namespace {

ReturnPanel var_panel(std::size_t n, std::size_t t, double radius, std::uint64_t seed) {
    synth::Var1Spec spec;
    spec.coefficients = synth::random_stable_matrix(n, radius, seed + 1000);
    spec.innovation_covariance = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    spec.length = t;
    spec.seed = seed;
    return synth::generate_var1(spec);
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace

TEST_CASE("scalar closed form") {
    // Pairs (1,2), (2,4); demeaned x = [-0.5, 0.5], y = [-1, 1]: a = 1 / (0.5 + lambda).
    const Eigen::MatrixXd rows{{1.0}, {2.0}, {4.0}};
    const auto w = ones(3);
    CHECK(fit_ridge_var(rows, w, {0.0, false}).coefficients(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(fit_ridge_var(rows, w, {0.5, false}).coefficients(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fit_ridge_var(rows, w, {5.0, false}).coefficients(0, 0) == doctest::Approx(1.0 / 5.5).epsilon(1e-14));
    CHECK(fit_ridge_var(rows, w, {5.0, false}).n_obs == 2);
}

TEST_CASE("lambda = 0 equals least squares") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto panel = var_panel(10, 300, 0.5, seed);
        const Eigen::MatrixXd rows = panel.returns();
        const auto fit = fit_ridge_var(rows, ones(300), {0.0, false});
        CHECK((fit.coefficients - oracle::ols_var1(rows)).cwiseAbs().maxCoeff() < 1e-8);

        const auto weights = exponential_weights(300, 100.0);
        const auto wfit = fit_ridge_var(rows, weights.values(), {0.0, false});
        CHECK((wfit.coefficients - oracle::wls_var1(rows, weights.values())).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("shrinkage toward zero is monotone") {
    const auto panel = var_panel(6, 300, 0.6, 11);
    const auto w = exponential_weights(300, 100.0);
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e6, 1e9}) {
        const double norm = fit_ridge_var(panel.returns(), w.values(), {lambda, false}).coefficients.norm();
        CHECK(norm <= previous);
        previous = norm;
    }
    CHECK(previous < 1e-6);
}

TEST_CASE("small penalty beats heavy penalty at recovering A") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        synth::Var1Spec spec;
        spec.coefficients = synth::random_stable_matrix(10, 0.5, seed + 77);
        spec.innovation_covariance = Eigen::MatrixXd::Identity(10, 10);
        spec.length = 300;
        spec.seed = seed;
        const auto panel = synth::generate_var1(spec);
        const auto eq = ones(300);
        const double e1 = (fit_ridge_var(panel.returns(), eq, {1.0, false}).coefficients - spec.coefficients).norm();
        const double e4 = (fit_ridge_var(panel.returns(), eq, {1e4, false}).coefficients - spec.coefficients).norm();
        CHECK(e1 < e4);
    }
}

TEST_CASE("weight scale invariance") {
    const auto panel = var_panel(5, 200, 0.5, 3);
    const auto w = exponential_weights(200, 50.0);
    std::vector<double> scaled = w.values();
    for (auto& v : scaled) v *= 7.3e-3;
    for (double lambda : {0.0, 100.0}) {
        const auto a = fit_ridge_var(panel.returns(), w.values(), {lambda, false});
        const auto b = fit_ridge_var(panel.returns(), scaled, {lambda, false});
        CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((a.sigma_eps - b.sigma_eps).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("standardization leaves the OLS fit unchanged") {
    const auto panel = var_panel(4, 250, 0.5, 9);
    Eigen::MatrixXd rows = panel.returns();
    rows.col(1) *= 50.0;
    rows.col(3) *= 0.01;
    const auto w = exponential_weights(250, 100.0);
    const auto raw = fit_ridge_var(rows, w.values(), {0.0, false});
    const auto std_fit = fit_ridge_var(rows, w.values(), {0.0, true});
    CHECK(std_fit.standardized);
    CHECK((raw.coefficients - std_fit.coefficients).cwiseAbs().maxCoeff() < 1e-8);
    const auto pen = fit_ridge_var(rows, w.values(), {100.0, true});
    CHECK(pen.coefficients.allFinite());
}

TEST_CASE("errors") {
    SUBCASE("singular system without penalty") {
        Eigen::MatrixXd rows(50, 2);
        for (Eigen::Index t = 0; t < 50; ++t) rows(t, 0) = rows(t, 1) = std::sin(0.3 * static_cast<double>(t));
        CHECK_THROWS_AS(fit_ridge_var(rows, ones(50), {0.0, false}), SingularSystemError);
        CHECK_NOTHROW(fit_ridge_var(rows, ones(50), {1.0, false}));
    }
    SUBCASE("non-finite input") {
        Eigen::MatrixXd rows = Eigen::MatrixXd::Random(20, 2);
        rows(5, 1) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(fit_ridge_var(rows, ones(20), {1.0, false}), DataError);
    }
    SUBCASE("contract") {
        const Eigen::MatrixXd rows = Eigen::MatrixXd::Random(20, 2);
        CHECK_THROWS_AS(fit_ridge_var(rows, ones(20), {-1.0, false}), std::invalid_argument);
        CHECK_THROWS_AS(fit_ridge_var(rows, ones(19), {1.0, false}), std::invalid_argument);
        CHECK_THROWS_AS(fit_ridge_var(rows.topRows(1), ones(1), {1.0, false}), InsufficientDataError);
    }
}

TEST_CASE("residual covariance") {
    SUBCASE("exact dynamics leave zero residuals") {
        Eigen::MatrixXd rows(30, 1);
        rows(0, 0) = 1.0;
        for (Eigen::Index t = 1; t < 30; ++t) rows(t, 0) = 0.5 * rows(t - 1, 0);
        const auto fit = fit_ridge_var(rows, ones(30), {0.0, false});
        CHECK(fit.coefficients(0, 0) == doctest::Approx(0.5));
        CHECK(std::abs(fit.sigma_eps(0, 0)) < 1e-20);
    }
    SUBCASE("residuals [1, -1] with equal weights give variance 1") {
        const Eigen::MatrixXd rows{{0.0}, {1.0}, {-1.0}};
        const auto rc = residual_covariance(Eigen::MatrixXd::Zero(1, 1), rows, ones(3));
        CHECK(rc.sigma(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK_FALSE(rc.clipped_warning);
    }
    SUBCASE("symmetric and PSD") {
        const auto panel = var_panel(8, 300, 0.5, 5);
        const auto fit = fit_ridge_var(panel.returns(), exponential_weights(300, 100.0).values(), {100.0, false});
        CHECK((fit.sigma_eps - fit.sigma_eps.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.sigma_eps);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    }
    SUBCASE("iid panel: each Sigma entry within 0.2 of identity in at least 95 of 100 seeds") {
        Eigen::MatrixXi good = Eigen::MatrixXi::Zero(5, 5);
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            synth::Var1Spec spec;
            spec.coefficients = Eigen::MatrixXd::Zero(5, 5);
            spec.innovation_covariance = Eigen::MatrixXd::Identity(5, 5);
            spec.length = 300;
            spec.seed = seed;
            const auto panel = synth::generate_var1(spec);
            const auto fit = fit_ridge_var(panel.returns(), ones(300), {100.0, false});
            good += ((fit.sigma_eps - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().array() < 0.2).cast<int>().matrix();
        }
        CHECK(good.minCoeff() >= 95);
    }
}

TEST_CASE("window overload matches the raw-row overload") {
    const auto panel = var_panel(3, 120, 0.4, 21);
    const auto windows = rolling_windows(panel, 100, 10, 30.0);
    for (const auto& w : windows) {
        const auto a = fit_ridge_var(w, {10.0, false});
        const auto b = fit_ridge_var(w.returns(), w.weights().values(), {10.0, false});
        CHECK(a.coefficients == b.coefficients);
        CHECK(a.sigma_eps == b.sigma_eps);
        CHECK((residual_covariance(a, w).sigma - a.sigma_eps).cwiseAbs().maxCoeff() < 1e-14);
    }
}
