#include <doctest.h>

#include <cmath>

#include "spillover/errors.hpp"
#include "spillover/rolling.hpp"

using namespace spillover;

namespace {

ReturnPanel ramp_panel(std::size_t t) {
    std::vector<Date> dates;
    Eigen::MatrixXd r(static_cast<Eigen::Index>(t), 1);
    for (std::size_t i = 0; i < t; ++i) {
        dates.emplace_back(Date(2005, 1, 3).days() + std::chrono::days{static_cast<int>(i)});
        r(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    }
    return ReturnPanel(dates, {Entity{"A", ""}}, r, MissingMask::Constant(r.rows(), 1, false));
}

}  // namespace

TEST_CASE("exponential weights") {
    CHECK(exponential_weights(1, 7.0).values() == std::vector<double>{1.0});

    const auto eq = exponential_weights(3, kEqualWeights);
    CHECK(eq.values() == std::vector<double>{1.0, 1.0, 1.0});

    const auto w = exponential_weights(3, 100.0);
    CHECK(w.values()[0] == doctest::Approx(0.98020).epsilon(1e-5));
    CHECK(w.values()[1] == doctest::Approx(0.99005).epsilon(1e-5));
    CHECK(w.values()[2] == 1.0);
    CHECK(w.by_age(0) == 1.0);
    CHECK(w.by_age(2) == w.values()[0]);
}

TEST_CASE("adjacent weight ratio is exp(-1/theta)") {
    for (double theta : {1.0, 33.3, 100.0, 1e4}) {
        const auto w = exponential_weights(300, theta);
        for (std::size_t a = 0; a + 1 < w.size(); ++a) {
            CHECK(std::abs(w.by_age(a + 1) / w.by_age(a) - std::exp(-1.0 / theta)) < 1e-12);
            CHECK(w.by_age(a + 1) > 0.0);
            CHECK(w.by_age(a + 1) <= w.by_age(a));
        }
    }
}

TEST_CASE("weight preconditions") {
    CHECK_THROWS_AS(exponential_weights(0, 100.0), std::invalid_argument);
    CHECK_THROWS_AS(exponential_weights(3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(exponential_weights(3, -1.0), std::invalid_argument);
}

TEST_CASE("window counting") {
    CHECK(rolling_windows(ramp_panel(300), 300, 1, 100.0).size() == 1);
    CHECK(rolling_windows(ramp_panel(302), 300, 1, 100.0).size() == 3);

    const auto panel = ramp_panel(310);
    const auto w = rolling_windows(panel, 300, 5, 100.0);
    REQUIRE(w.size() == 3);
    CHECK(w[0].last_row() == 299);
    CHECK(w[1].last_row() == 304);
    CHECK(w[2].last_row() == 309);
    CHECK(w[2].end_date() == panel.dates()[309]);
    CHECK(&w[0].weights() == &w[2].weights());

    CHECK_THROWS_AS(rolling_windows(ramp_panel(299), 300, 1, 100.0), InsufficientDataError);
}

TEST_CASE("window slices and spacing") {
    const auto panel = ramp_panel(50);
    const auto w = rolling_windows(panel, 10, 3, kEqualWeights);
    for (std::size_t k = 0; k < w.size(); ++k) {
        CHECK(w[k].size() == 10);
        CHECK(w[k].returns().rows() == 10);
        CHECK(w[k].returns()(0, 0) == static_cast<double>(w[k].first_row()));
        if (k > 0) {
            CHECK(w[k].last_row() - w[k - 1].last_row() == 3);
            CHECK(w[k - 1].end_date() < w[k].end_date());
        }
    }
}
