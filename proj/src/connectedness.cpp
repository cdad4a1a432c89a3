#include "spillover/connectedness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "spillover/errors.hpp"
#include "spillover/parallel.hpp"

namespace spillover {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kPivotTolerance = 1e-12;

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_theta(double theta) { return std::isfinite(theta) ? format_g17(theta) : "inf"; }

}  // namespace

ShockBasis shock_basis(const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw DataError("shock_basis: covariance must be square");
    if (!sigma.allFinite()) throw DataError("shock_basis: non-finite covariance");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale) {
        throw DataError("shock_basis: covariance is not symmetric");
    }

    const Eigen::Index n = sigma.rows();
    const double tol = kPivotTolerance * sigma.trace() / static_cast<double>(n);
    ShockBasis basis{Eigen::MatrixXd::Zero(n, n), std::vector<bool>(static_cast<std::size_t>(n), false)};
    auto& p = basis.theta0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pivot = sigma(j, j) - p.row(j).head(j).squaredNorm();
        if (!(pivot > tol)) {
            basis.zero_columns[static_cast<std::size_t>(j)] = true;
            continue;
        }
        const double d = std::sqrt(pivot);
        p(j, j) = d;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            p(i, j) = (sigma(i, j) - p.row(i).head(j).dot(p.row(j).head(j))) / d;
        }
    }
    return basis;
}

ConnectednessMatrix fevd_shares(const ShockBasis& basis) {
    const Eigen::Index n = basis.theta0.rows();
    ConnectednessMatrix c;
    c.shares = basis.theta0.cwiseAbs2();
    c.ordering.resize(static_cast<std::size_t>(n));
    std::iota(c.ordering.begin(), c.ordering.end(), std::size_t{0});
    c.degenerate_rows.assign(static_cast<std::size_t>(n), false);

    bool any_nonzero = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double row_sum = c.shares.row(i).sum();
        if (row_sum > 0.0) {
            c.shares.row(i) /= row_sum;
            any_nonzero = true;
        } else {
            c.shares.row(i).setZero();
            c.shares(i, i) = 1.0;
            c.degenerate_rows[static_cast<std::size_t>(i)] = true;
        }
    }
    if (!any_nonzero) throw std::invalid_argument("fevd_shares: shock basis has no nonzero row");
    return c;
}

double total_connectedness(const ConnectednessMatrix& c) {
    const auto n = c.shares.rows();
    if (n == 0) return 0.0;
    const double off_diagonal = c.shares.sum() - c.shares.trace();
    return off_diagonal / static_cast<double>(n);
}

Ordering parse_ordering(std::string_view text) {
    if (text == "input") return Ordering::input;
    if (text == "reversed") return Ordering::reversed;
    throw std::invalid_argument("unknown ordering '" + std::string(text) + "' (expected input|reversed)");
}

std::string_view to_string(Ordering ordering) { return ordering == Ordering::input ? "input" : "reversed"; }

std::string describe_flags(unsigned flags) {
    std::string out;
    const auto add = [&](unsigned bit, const char* name) {
        if (flags & bit) {
            if (!out.empty()) out += '|';
            out += name;
        }
    };
    add(kFlagHeavyImputation, "imputed");
    add(kFlagZeroVarianceRow, "zero_variance_row");
    add(kFlagPsdClipped, "psd_clipped");
    return out;
}

WindowConnectedness window_connectedness(const WindowView& window, const ConnectednessConfig& config) {
    const auto model = fit_ridge_var(window, RidgeOptions{config.lambda, config.standardize});
    const auto n = static_cast<std::size_t>(model.sigma_eps.rows());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.ordering == Ordering::reversed) std::reverse(order.begin(), order.end());

    Eigen::MatrixXd permuted(model.sigma_eps.rows(), model.sigma_eps.cols());
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            permuted(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                model.sigma_eps(static_cast<Eigen::Index>(order[a]), static_cast<Eigen::Index>(order[b]));
        }
    }
    const auto ordered = fevd_shares(shock_basis(permuted));

    WindowConnectedness out;
    out.matrix.shares.resize(ordered.shares.rows(), ordered.shares.cols());
    out.matrix.degenerate_rows.assign(n, false);
    for (std::size_t a = 0; a < n; ++a) {
        out.matrix.degenerate_rows[order[a]] = ordered.degenerate_rows[a];
        for (std::size_t b = 0; b < n; ++b) {
            out.matrix.shares(static_cast<Eigen::Index>(order[a]), static_cast<Eigen::Index>(order[b])) =
                ordered.shares(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    out.matrix.ordering = order;
    out.total = total_connectedness(out.matrix);

    if (window.imputation_fraction() > config.imputation_flag_threshold) out.flags |= kFlagHeavyImputation;
    for (bool d : ordered.degenerate_rows) {
        if (d) out.flags |= kFlagZeroVarianceRow;
    }
    if (model.psd_clipped) out.flags |= kFlagPsdClipped;
    return out;
}

std::vector<std::pair<std::string, std::string>> ConnectednessSeries::parameters() const {
    return {
        {"window", std::to_string(config.window)},
        {"theta", format_theta(config.theta)},
        {"lambda", format_g17(config.lambda)},
        {"stride", std::to_string(config.stride)},
        {"standardize", config.standardize ? "true" : "false"},
        {"ordering", std::string(to_string(config.ordering))},
        {"demeaning", "weighted"},
        {"weight_normalization", "mean_one"},
        {"imputation_flag_threshold", format_g17(config.imputation_flag_threshold)},
    };
}

ConnectednessSeries connectedness_series(const ReturnPanel& panel, const ConnectednessConfig& config,
                                         std::string label) {
    if (config.window < 2) throw std::invalid_argument("connectedness_series: window must be >= 2");
    const auto windows = rolling_windows(panel, config.window, config.stride, config.theta);

    std::vector<WindowConnectedness> results(windows.size());
    parallel_for(windows.size(), config.workers, [&](std::size_t k) {
        const std::string tag = "window ending " + windows[k].end_date().to_string() + ": ";
        try {
            results[k] = window_connectedness(windows[k], config);
        } catch (const SingularSystemError& e) {
            throw SingularSystemError(tag + e.what());
        } catch (const Error& e) {
            throw DataError(tag + e.what());
        } catch (const std::invalid_argument& e) {
            throw DataError(tag + e.what());
        }
    });

    ConnectednessSeries series;
    series.label = std::move(label);
    series.entities = panel.entities();
    series.config = config;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        series.end_dates.push_back(windows[k].end_date());
        series.values.push_back(results[k].total);
        series.imputation_fraction.push_back(windows[k].imputation_fraction());
        series.flags.push_back(results[k].flags);
        if (config.keep_matrices) series.matrices.push_back(std::move(results[k].matrix.shares));
    }
    return series;
}

double ordering_sensitivity(const ReturnPanel& panel, const ConnectednessConfig& config) {
    auto forward = config;
    forward.ordering = Ordering::input;
    forward.keep_matrices = false;
    auto backward = forward;
    backward.ordering = Ordering::reversed;
    const auto a = connectedness_series(panel, forward);
    const auto b = connectedness_series(panel, backward);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a.values[k] - b.values[k]));
    return worst;
}

void write_series_csv(std::ostream& out, const ConnectednessSeries& series) {
    out << "end_date,total_connectedness,imputation_fraction,flags\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        char frac[32];
        std::snprintf(frac, sizeof frac, "%.6f", series.imputation_fraction[k]);
        out << series.end_dates[k].to_string() << ',' << format_g17(series.values[k]) << ',' << frac << ','
            << describe_flags(series.flags[k]) << '\n';
    }
}

void write_matrix_dump(std::ostream& out, const ConnectednessSeries& series) {
    if (series.matrices.size() != series.size()) {
        throw std::invalid_argument("write_matrix_dump: series was computed without keep_matrices");
    }
    out << "end_date,entity_i,entity_j,c_ij\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& c = series.matrices[k];
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            for (Eigen::Index j = 0; j < c.cols(); ++j) {
                out << series.end_dates[k].to_string() << ',' << series.entities[static_cast<std::size_t>(i)].label()
                    << ',' << series.entities[static_cast<std::size_t>(j)].label() << ',' << format_g17(c(i, j)) << '\n';
            }
        }
    }
}

ConnectednessSeries read_series_csv(std::istream& in, std::string label) {
    ConnectednessSeries series;
    series.label = std::move(label);
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            if (!line.starts_with("end_date,total_connectedness")) {
                throw ParseError("series file: expected header end_date,total_connectedness,...");
            }
            header = false;
            continue;
        }
        const auto c1 = line.find(',');
        if (c1 == std::string::npos) throw ParseError("row " + std::to_string(line_no) + ": expected end_date,value");
        const auto c2 = line.find(',', c1 + 1);
        const std::string_view value_text(line.data() + c1 + 1, (c2 == std::string::npos ? line.size() : c2) - c1 - 1);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (ec != std::errc{} || ptr != value_text.data() + value_text.size() || !std::isfinite(value)) {
            throw ParseError("row " + std::to_string(line_no) + ": malformed total_connectedness '" +
                             std::string(value_text) + "'");
        }
        Date date;
        try {
            date = Date::parse(std::string_view(line.data(), c1));
        } catch (const ParseError&) {
            throw ParseError("row " + std::to_string(line_no) + ": malformed date '" + line.substr(0, c1) + "'");
        }
        if (!series.end_dates.empty() && !(series.end_dates.back() < date)) {
            throw ParseError("row " + std::to_string(line_no) + ": dates must be strictly increasing");
        }
        series.end_dates.push_back(date);
        series.values.push_back(value);
        series.imputation_fraction.push_back(0.0);
        series.flags.push_back(0);
    }
    if (header) throw EmptyInputError("series file: missing header row");
    return series;
}

}  // namespace spillover
