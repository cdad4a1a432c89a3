#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spillover/errors.hpp"
#include "spillover/synthlab.hpp"
#include "spillover/transfer_entropy.hpp"

using namespace spillover;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> v(n);
    for (auto& x : v) x = z(rng);
    return v;
}

std::vector<std::uint32_t> codes(std::initializer_list<std::uint32_t> c) { return c; }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("difference series") {
    const std::vector<double> v{1.0, 3.0, 6.0};
    CHECK(difference_series(v, 1).values == std::vector<double>{2.0, 3.0});

    std::vector<double> eleven(11);
    for (std::size_t i = 0; i < 11; ++i) eleven[i] = static_cast<double>(i * i);
    const auto weekly = difference_series(eleven, 5, "NA");
    REQUIRE(weekly.values.size() == 2);
    CHECK(weekly.values[0] == 25.0);
    CHECK(weekly.values[1] == 75.0);
    CHECK(weekly.horizon == 5);
    CHECK(weekly.label == "NA");

    CHECK(difference_series(std::vector<double>(8, 0.3), 1).values == std::vector<double>(7, 0.0));

    for (std::size_t len = 2; len < 40; ++len) {
        const std::vector<double> s(len, 1.0);
        for (std::size_t h = 1; h < len; ++h) CHECK(difference_series(s, h).values.size() == (len - 1) / h);
    }
    CHECK_THROWS_AS(difference_series(std::vector<double>{1.0, 2.0}, 2), InsufficientDataError);
}

TEST_CASE("three-band discretization") {
    const std::vector<double> inside{0.5, -0.2, 0.9};
    for (auto s : discretize_three_band(inside, 1.0, 0.0, 1.0).symbols) CHECK(s == Symbol::zero);

    const auto ends = discretize_three_band(std::vector<double>{-2.0, 0.0, 2.0}, 1.0, 0.0, 1.0);
    CHECK(ends.symbols == std::vector<Symbol>{Symbol::minus, Symbol::zero, Symbol::plus});

    const auto flat = discretize_three_band(std::vector<double>(5, 4.0), 1.0);
    CHECK(flat.degenerate);
    for (auto s : flat.symbols) CHECK(s == Symbol::zero);

    // mu = 0, population sigma = sqrt(2/3) for [-1, 0, 1].
    const auto pop = discretize_three_band(std::vector<double>{-1.0, 0.0, 1.0}, 1.0);
    CHECK(pop.mu == 0.0);
    CHECK(pop.sigma == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(pop.symbols == std::vector<Symbol>{Symbol::minus, Symbol::zero, Symbol::plus});

    // Boundary: |value - mu| == delta * sigma stays in the central band.
    CHECK(discretize_three_band(std::vector<double>{1.0, -1.0}, 1.0, 0.0, 1.0).symbols ==
          std::vector<Symbol>{Symbol::zero, Symbol::zero});

    CHECK_THROWS_AS(discretize_three_band(std::vector<double>{1.0}, 1.0), InsufficientDataError);
}

TEST_CASE("plug-in entropy") {
    CHECK(plugin_entropy(codes({4, 4, 4, 4})) == 0.0);
    CHECK(plugin_entropy(codes({0, 1, 2})) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(plugin_entropy(codes({0, 1, 0, 1})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(tuple_code({Symbol::plus, Symbol::minus, Symbol::zero}) == 2 * 9 + 0 * 3 + 1);

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::uint32_t> pick(0, 26);
    std::vector<std::uint32_t> sample(500);
    for (auto& c : sample) c = pick(rng);
    CHECK(plugin_entropy(sample) == doctest::Approx(oracle::entropy(sample)).epsilon(1e-13));
}

TEST_CASE("linear TE matches a QR regression oracle and the log-det form") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto pair = synth::generate_coupled_pair(0.1 * static_cast<double>(seed % 7), 1.0, 300 + seed * 7, seed);
        for (std::size_t lag : {1u, 2u}) {
            const double te = linear_te(pair.x.values, pair.y.values, lag).te;
            CHECK(std::abs(te - oracle::linear_te(pair.x.values, pair.y.values, lag)) < 1e-10);
            CHECK(std::abs(te - linear_te_logdet(pair.x.values, pair.y.values, lag)) < 1e-10);
            CHECK(te >= -1e-9);
            CHECK(std::abs(linear_te_f_pvalue(pair.x.values, pair.y.values, lag) -
                           oracle::f_pvalue(pair.x.values, pair.y.values, lag)) < 1e-10);
        }
    }
}

TEST_CASE("linear TE population value") {
    std::vector<double> yx, xy;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto pair = synth::generate_coupled_pair(1.0, 1.0, 20000, seed);
        yx.push_back(linear_te(pair.x.values, pair.y.values, 1).te);
        xy.push_back(linear_te(pair.y.values, pair.x.values, 1).te);
    }
    CHECK(std::abs(oracle::median(yx) - 0.5 * std::log(2.0)) < 0.02);
    CHECK(oracle::median(xy) < 0.005);
}

TEST_CASE("independent series carry no information") {
    int linear_ok = 0, nonlinear_ok = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto x = normals(5000, seed);
        const auto y = normals(5000, seed + 100000);
        if (linear_te(x, y, 1).te <= 0.002) ++linear_ok;
        if (nonlinear_te(x, y, 1, 1.0).te <= 0.003) ++nonlinear_ok;
    }
    CHECK(linear_ok >= 95);
    CHECK(nonlinear_ok >= 95);
}

TEST_CASE("nonlinear TE matches the conditional-probability oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto pair = synth::generate_coupled_pair(0.7, 1.0, 200 + 13 * seed, seed);
        for (double delta : {0.5, 1.0, 2.0, 3.0}) {
            const auto te = nonlinear_te(pair.x.values, pair.y.values, 1 + seed % 2, delta);
            CHECK(std::abs(te.te - oracle::nonlinear_te(pair.x.values, pair.y.values, 1 + seed % 2, delta)) < 1e-12);
            CHECK(te.te >= -1e-9);
        }
    }
}

TEST_CASE("deterministic coupling") {
    // x_t = y_{t-1}, wrapped so both series hold the same values and share
    // band thresholds.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const std::size_t n = 400;
    std::vector<double> y(n), x(n);
    for (auto& v : y) v = u(rng);
    x[0] = y[n - 1];
    for (std::size_t t = 1; t < n; ++t) x[t] = y[t - 1];

    const auto sx = oracle::bands(x, 1.0);
    std::vector<std::pair<int, int>> joint;
    std::vector<int> past;
    for (std::size_t t = 1; t < n; ++t) {
        joint.emplace_back(sx[t], sx[t - 1]);
        past.push_back(sx[t - 1]);
    }
    const double h_cond = oracle::entropy(joint) - oracle::entropy(past);
    CHECK(h_cond > 0.5);
    CHECK(nonlinear_te(x, y, 1, 1.0).te == doctest::Approx(h_cond).epsilon(1e-12));
    CHECK(nonlinear_te(y, x, 1, 1.0).te < 0.05);
}

TEST_CASE("wide bands on Gaussian data stay finite") {
    const auto pair = synth::generate_coupled_pair(0.5, 1.0, 3000, 4);
    const auto sym = discretize_three_band(pair.x.values, 3.0);
    const auto outer = std::count_if(sym.symbols.begin(), sym.symbols.end(), [](Symbol s) { return s != Symbol::zero; });
    CHECK(outer < 30);
    const double te = nonlinear_te(pair.x.values, pair.y.values, 1, 3.0).te;
    CHECK(std::isfinite(te));
    CHECK(te >= -1e-9);
}

TEST_CASE("degenerate inputs") {
    const std::vector<double> flat(50, 1.0);
    const auto noise = normals(50, 1);
    CHECK_THROWS_AS(linear_te(flat, noise, 1), DegenerateSeriesError);
    const auto both = nonlinear_te(flat, flat, 1, 1.0);
    CHECK(both.degenerate);
    CHECK(both.te == 0.0);
    CHECK_THROWS_AS(linear_te(noise, std::vector<double>(49, 0.0), 1), std::invalid_argument);
    CHECK_THROWS_AS(linear_te(std::vector<double>(10, 0.0), std::vector<double>(10, 0.0), 1), InsufficientDataError);
}

TEST_CASE("collinear regressors fall back to minimum norm") {
    // The source equals the target's own lag: the full model adds nothing.
    const auto x = normals(200, 5);
    const auto r = linear_te(x, x, 1);
    CHECK(r.rank_deficient);
    CHECK(std::abs(r.te) < 1e-9);
}

TEST_CASE("F test power") {
    const auto pair = synth::generate_coupled_pair(0.8, 1.0, 2400, 12);
    CHECK(linear_te_f_pvalue(pair.x.values, pair.y.values, 1) < 1e-6);
}

TEST_CASE("net information flow") {
    CHECK(net_information_flow(0.0172, 0.0089) == doctest::Approx(0.0083).epsilon(1e-12));
    CHECK(net_information_flow(0.3, 0.3) == 0.0);
    CHECK(net_information_flow(0.01, 0.04) == -net_information_flow(0.04, 0.01));

    const TeEstimate a{0.02, Estimator::linear(), 1};
    const TeEstimate b{0.01, Estimator::nonlinear(1.0), 1};
    const TeEstimate c{0.01, Estimator::linear(), 2};
    CHECK_THROWS_AS(net_information_flow(a, b), std::invalid_argument);
    CHECK_THROWS_AS(net_information_flow(a, c), std::invalid_argument);
    CHECK(net_information_flow(a, TeEstimate{0.015, Estimator::linear(), 1}) == doctest::Approx(0.005));
}

TEST_CASE("permutation test") {
    const auto strong = synth::generate_coupled_pair(0.8, 1.0, 2400, 1);
    SUBCASE("observed beats every replica") {
        const auto p = permutation_pvalue(strong.x.values, strong.y.values, 1, Estimator::linear(), 999, 5);
        CHECK(p.n_exceed == 0);
        CHECK(p.p_value == 1.0 / 1000.0);
        CHECK(p.te_observed == doctest::Approx(linear_te(strong.x.values, strong.y.values, 1).te).epsilon(1e-12));
    }
    SUBCASE("reproducible and independent of worker count") {
        const auto weak = synth::generate_coupled_pair(0.05, 1.0, 300, 2);
        for (const auto est : {Estimator::linear(), Estimator::nonlinear(1.0)}) {
            const auto a = permutation_pvalue(weak.x.values, weak.y.values, 1, est, 500, 77, 1);
            const auto b = permutation_pvalue(weak.x.values, weak.y.values, 1, est, 500, 77, 1);
            const auto c = permutation_pvalue(weak.x.values, weak.y.values, 1, est, 500, 77, 4);
            CHECK(a.p_value == b.p_value);
            CHECK(a.p_value == c.p_value);
            CHECK(a.n_exceed == c.n_exceed);
            CHECK(a.p_value >= 1.0 / 501.0);
            CHECK(a.p_value <= 1.0);
        }
        CHECK(replica_seed(1, 0) != replica_seed(1, 1));
        CHECK(replica_seed(1, 0) != replica_seed(2, 0));
    }
    SUBCASE("replicas agree with brute-force recomputation") {
        const auto pair = synth::generate_coupled_pair(0.08, 1.0, 250, 6);
        const std::size_t lag = 1, n_perm = 300;
        const std::uint64_t seed = 1234;
        const auto aligned = oracle::align(pair.x.values, pair.y.values, lag);
        const double restricted = oracle::ssr({aligned.own}, aligned.now);
        const double observed = 0.5 * std::log(restricted / oracle::ssr({aligned.own, aligned.src}, aligned.now));

        std::size_t linear_exceed = 0, nl_lo = 0, nl_hi = 0;
        const double nl_observed = oracle::nonlinear_te(pair.x.values, pair.y.values, lag, 1.0);
        for (std::size_t r = 0; r < n_perm; ++r) {
            std::vector<double> src = aligned.src;
            std::mt19937_64 engine(replica_seed(seed, r));
            std::shuffle(src.begin(), src.end(), engine);
            const double te = 0.5 * std::log(restricted / oracle::ssr({aligned.own, src}, aligned.now));
            if (te >= observed) ++linear_exceed;

            // Same shuffle applied to the lagged source, evaluated on a series rebuilt around it.
            std::vector<double> rebuilt(pair.y.values);
            for (std::size_t t = lag; t < rebuilt.size(); ++t) rebuilt[t - lag] = src[t - lag];
            const double nl = oracle::nonlinear_te(pair.x.values, rebuilt, lag, 1.0);
            if (nl >= nl_observed - 1e-12) ++nl_hi;
            if (nl > nl_observed + 1e-12) ++nl_lo;
        }
        const auto lin = permutation_pvalue(pair.x.values, pair.y.values, lag, Estimator::linear(), n_perm, seed);
        CHECK(lin.n_exceed == linear_exceed);
        const auto nl = permutation_pvalue(pair.x.values, pair.y.values, lag, Estimator::nonlinear(1.0), n_perm, seed);
        CHECK(nl.n_exceed >= nl_lo);
        CHECK(nl.n_exceed <= nl_hi);
    }
    SUBCASE("contract") {
        CHECK_THROWS_AS(permutation_pvalue(strong.x.values, strong.y.values, 1, Estimator::linear(), 0, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("permutation power grows with coupling strength") {
    const std::vector<double> betas{0.0, 0.2, 0.4, 0.8};
    std::vector<double> medians;
    for (double beta : betas) {
        std::vector<double> p;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            const auto pair = synth::generate_coupled_pair(beta, 1.0, 40, seed);
            p.push_back(permutation_pvalue(pair.x.values, pair.y.values, 1, Estimator::linear(), 999, seed).p_value);
        }
        medians.push_back(oracle::median(p));
    }
    for (std::size_t k = 1; k < medians.size(); ++k) CHECK(medians[k] < medians[k - 1]);
}

TEST_CASE("estimator names and significance stars") {
    CHECK(Estimator::linear().name() == "linear");
    CHECK(Estimator::nonlinear(2.0).name() == "nonlinear_2sigma");
    CHECK(Estimator::nonlinear(2.5).name() == "nonlinear_2.5sigma");
    CHECK(significance_stars(0.0009) == "***");
    CHECK(significance_stars(0.001) == "**");
    CHECK(significance_stars(0.0099) == "**");
    CHECK(significance_stars(0.01) == "*");
    CHECK(significance_stars(0.0499) == "*");
    CHECK(significance_stars(0.05) == "");
    CHECK(significance_stars(std::nan("")) == "");
}


TEST_CASE("te table layout") {
    TeConfig cfg;
    cfg.n_perm = 199;
    cfg.seed = 11;
    const auto table = te_table(fixture::three_regions(), cfg);
    REQUIRE(table.rows.size() == 12);
    CHECK(table.rows[0].x_label == "NA");
    CHECK(table.rows[0].y_label == "EU");
    CHECK(table.rows[0].estimator == Estimator::linear());
    CHECK(table.rows[3].estimator == Estimator::nonlinear(3.0));
    CHECK(table.rows[4].y_label == "AS");
    CHECK(table.rows[8].x_label == "EU");
    for (const auto& r : table.rows) {
        CHECK(r.net_flow == r.te_xy - r.te_yx);
        CHECK(r.p_xy_f.has_value() == (r.estimator == Estimator::linear()));
    }
    CHECK(table.rows[0].net_flow > 0.0);
    CHECK(table.rows[0].p_xy < 0.01);

    std::vector<ChangeSeries> one{fixture::three_regions()[0]};
    CHECK_THROWS_AS(te_table(one, cfg), std::invalid_argument);
    auto ragged = fixture::three_regions();
    ragged[2].values.pop_back();
    CHECK_THROWS_AS(te_table(ragged, cfg), AlignmentError);
}

TEST_CASE("te tables over connectedness series require one calendar") {
    ConnectednessSeries a, b;
    a.label = "NA";
    b.label = "EU";
    a.end_dates = synth::weekdays(Date(2006, 1, 2), 40);
    b.end_dates = synth::weekdays(Date(2006, 1, 3), 40);
    a.values = normals(40, 1);
    b.values = normals(40, 2);
    TeConfig cfg;
    cfg.n_perm = 0;
    CHECK_THROWS_AS(te_table(std::vector<ConnectednessSeries>{a, b}, cfg), AlignmentError);
    b.end_dates = a.end_dates;
    const auto t = te_table(std::vector<ConnectednessSeries>{a, b}, cfg);
    CHECK(t.rows.size() == 4);
    CHECK(std::isnan(t.rows[0].p_xy));
}

TEST_CASE("rendered table matches the golden file") {
    const auto table = te_table(fixture::three_regions(), fixture::golden_config());

    std::ostringstream report, csv;
    write_te_report(report, table);
    write_te_csv(csv, table);
    const std::string golden = std::string(SPILLOVER_TEST_DATA) + "/te_table_golden";
    if (std::getenv("SPILLOVER_UPDATE_GOLDEN") != nullptr) {
        std::ofstream(golden + ".txt", std::ios::binary) << report.str();
        std::ofstream(golden + ".csv", std::ios::binary) << csv.str();
    }
    CHECK(report.str() == read_file(golden + ".txt"));
    CHECK(csv.str() == read_file(golden + ".csv"));
}

TEST_CASE("hand-built table renders stars at the thresholds") {
    TeTable table;
    table.n_perm = 10000;
    table.seed = 1;
    TeResult r;
    r.x_label = "NA";
    r.y_label = "AS";
    r.estimator = Estimator::linear();
    r.te_xy = 0.017336;
    r.te_yx = 0.008931;
    r.net_flow = r.te_xy - r.te_yx;
    r.p_xy = 0.0009;
    r.p_yx = 0.049;
    r.p_xy_f = 0.0001;
    r.p_yx_f = 0.06;
    table.rows.push_back(r);
    r.estimator = Estimator::nonlinear(1.0);
    r.te_xy = 0.004722;
    r.te_yx = 0.0;
    r.net_flow = r.te_xy;
    r.p_xy = 0.005;
    r.p_yx = 0.5;
    r.p_xy_f.reset();
    r.p_yx_f.reset();
    table.rows.push_back(r);

    std::ostringstream report;
    write_te_report(report, table);
    const auto text = report.str();
    CHECK(text.find("TE_{NA->AS}") != std::string::npos);
    CHECK(text.find("0.017336***") != std::string::npos);
    CHECK(text.find("0.008931*") != std::string::npos);
    CHECK(text.find("0.008405") != std::string::npos);
    CHECK(text.find("0.004722**") != std::string::npos);
    CHECK(text.find("* p-value < 0.05, ** p-value < 0.01, *** p-value < 0.001.") != std::string::npos);

    std::ostringstream csv;
    write_te_csv(csv, table);
    std::istringstream lines(csv.str());
    std::string header, first, second;
    std::getline(lines, header);
    std::getline(lines, first);
    std::getline(lines, second);
    CHECK(header == "pair,direction,estimator,te,p_perm,p_f,net_flow,stars");
    CHECK(first.find(",linear,0.017336,") != std::string::npos);
    CHECK(first.substr(first.size() - 3) == "***");
    CHECK(second.find("-0.008405") != std::string::npos);
}
