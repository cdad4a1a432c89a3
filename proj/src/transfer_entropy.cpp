#include "spillover/transfer_entropy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>

#include "spillover/errors.hpp"
#include "spillover/parallel.hpp"

namespace spillover {

namespace {

constexpr std::size_t kMinSamplesBeyondLag = 10;
constexpr std::size_t kReplicasPerTask = 64;
constexpr double kCollinearTolerance = 1e-12;

void check_pair(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    if (lag < 1) throw std::invalid_argument("transfer entropy: lag must be >= 1");
    if (target.size() != source.size()) {
        throw std::invalid_argument("transfer entropy: target and source lengths differ (" +
                                    std::to_string(target.size()) + " vs " + std::to_string(source.size()) + ")");
    }
    if (target.size() < lag + kMinSamplesBeyondLag) {
        throw InsufficientDataError("transfer entropy: need at least lag + 10 = " +
                                    std::to_string(lag + kMinSamplesBeyondLag) + " observations, got " +
                                    std::to_string(target.size()));
    }
    for (std::size_t t = 0; t < target.size(); ++t) {
        if (!std::isfinite(target[t]) || !std::isfinite(source[t])) throw DataError("transfer entropy: non-finite value");
    }
}

// Columns (x_t, x_{t-L}, y_{t-L}) for t = L..T-1.
struct Aligned {
    Eigen::VectorXd now, own_lag, source_lag;
};

Aligned align(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    const auto n = static_cast<Eigen::Index>(target.size() - lag);
    Aligned a{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto k = static_cast<std::size_t>(t);
        a.now(t) = target[k + lag];
        a.own_lag(t) = target[k];
        a.source_lag(t) = source[k];
    }
    return a;
}

double population_variance(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().mean();
}

struct Residuals {
    double ssr = 0.0;
    bool rank_deficient = false;
};

Residuals ols_residuals(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    cod.setThreshold(kCollinearTolerance);
    const Eigen::VectorXd beta = cod.solve(y);
    return {(y - design * beta).squaredNorm(), cod.rank() < design.cols()};
}

// Restricted and full residual sums of squares by direct least squares.
struct NestedFit {
    double ssr_restricted = 0.0;
    double ssr_full = 0.0;
    bool rank_deficient = false;
    std::size_t n = 0;
};

NestedFit nested_fit(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    check_pair(target, source, lag);
    const auto a = align(target, source, lag);
    const auto n = a.now.size();
    if (population_variance(Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()))) <= 0.0 ||
        population_variance(Eigen::Map<const Eigen::VectorXd>(source.data(), static_cast<Eigen::Index>(source.size()))) <= 0.0) {
        throw DegenerateSeriesError("linear transfer entropy: both series need positive variance");
    }

    Eigen::MatrixXd restricted(n, 2);
    restricted << Eigen::VectorXd::Ones(n), a.own_lag;
    Eigen::MatrixXd full(n, 3);
    full << Eigen::VectorXd::Ones(n), a.own_lag, a.source_lag;
    const auto r = ols_residuals(restricted, a.now);
    const auto f = ols_residuals(full, a.now);
    const double total = (a.now.array() - a.now.mean()).square().sum();
    if (!(r.ssr > kCollinearTolerance * total)) {
        throw DegenerateSeriesError("linear transfer entropy: restricted residual variance is zero");
    }
    return {r.ssr, f.ssr, r.rank_deficient || f.rank_deficient, static_cast<std::size_t>(n)};
}

// Sufficient statistics of the linear estimator. Shuffling the lagged source
// leaves its mean and variance unchanged, so only the two cross products with
// the shuffled column vary between replicas.
class LinearKernel {
public:
    using Cell = double;

    LinearKernel(std::span<const double> target, std::span<const double> source, std::size_t lag) {
        nested_fit(target, source, lag);  // validates and rejects degenerate input
        const auto a = align(target, source, lag);
        now_ = a.now.array() - a.now.mean();
        own_ = a.own_lag.array() - a.own_lag.mean();
        const Eigen::VectorXd src = a.source_lag.array() - a.source_lag.mean();
        source_.assign(src.data(), src.data() + src.size());
        aa_ = now_.squaredNorm();
        ab_ = now_.dot(own_);
        bb_ = own_.squaredNorm();
        cc_ = src.squaredNorm();
        ssr_restricted_ = bb_ > 0.0 ? aa_ - ab_ * ab_ / bb_ : aa_;
    }

    const std::vector<double>& source_column() const { return source_; }

    double evaluate(std::span<const double> shuffled) const {
        const Eigen::Map<const Eigen::VectorXd> c(shuffled.data(), static_cast<Eigen::Index>(shuffled.size()));
        const double ac = now_.dot(c);
        const double bc = own_.dot(c);
        const double det = bb_ * cc_ - bc * bc;
        double ssr_full = ssr_restricted_;
        if (det > kCollinearTolerance * bb_ * cc_) {
            ssr_full = aa_ - (cc_ * ab_ * ab_ - 2.0 * bc * ab_ * ac + bb_ * ac * ac) / det;
        }
        return 0.5 * std::log(ssr_restricted_ / ssr_full);
    }

private:
    Eigen::VectorXd now_, own_;
    std::vector<double> source_;
    double aa_ = 0.0, ab_ = 0.0, bb_ = 0.0, cc_ = 0.0;
    double ssr_restricted_ = 0.0;
};

// Symbol counts of the nonlinear estimator; H(X_t, X_{t-L}) and H(X_{t-L})
// do not involve the source and are computed once.
class NonlinearKernel {
public:
    using Cell = std::uint8_t;

    NonlinearKernel(std::span<const double> target, std::span<const double> source, std::size_t lag, double delta) {
        check_pair(target, source, lag);
        if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("nonlinear TE: delta must be > 0");
        const auto sx = discretize_three_band(target, delta);
        const auto sy = discretize_three_band(source, delta);
        degenerate_ = sx.degenerate && sy.degenerate;
        n_ = target.size() - lag;
        now_.resize(n_);
        own_.resize(n_);
        source_.resize(n_);
        for (std::size_t t = 0; t < n_; ++t) {
            now_[t] = static_cast<std::uint8_t>(sx.symbols[t + lag]);
            own_[t] = static_cast<std::uint8_t>(sx.symbols[t]);
            source_[t] = static_cast<std::uint8_t>(sy.symbols[t]);
        }
        xlogx_.resize(n_ + 1);
        xlogx_[0] = 0.0;
        for (std::size_t c = 1; c <= n_; ++c) xlogx_[c] = static_cast<double>(c) * std::log(static_cast<double>(c));

        std::array<std::size_t, 9> joint{};
        std::array<std::size_t, 3> own{};
        for (std::size_t t = 0; t < n_; ++t) {
            ++joint[static_cast<std::size_t>(now_[t]) * 3 + own_[t]];
            ++own[own_[t]];
        }
        fixed_ = entropy(joint) - entropy(own);
    }

    bool degenerate() const { return degenerate_; }
    const std::vector<std::uint8_t>& source_column() const { return source_; }

    // H(X_t, X_lag) - H(X_lag) - H(X_t, X_lag, Y_lag) + H(X_lag, Y_lag)
    double evaluate(std::span<const std::uint8_t> shuffled) const {
        std::array<std::size_t, 27> triple{};
        std::array<std::size_t, 9> pair{};
        for (std::size_t t = 0; t < n_; ++t) {
            const std::size_t lagged = static_cast<std::size_t>(own_[t]) * 3 + shuffled[t];
            ++triple[static_cast<std::size_t>(now_[t]) * 9 + lagged];
            ++pair[lagged];
        }
        return fixed_ - entropy(triple) + entropy(pair);
    }

private:
    template <std::size_t K>
    double entropy(const std::array<std::size_t, K>& counts) const {
        double acc = 0.0;
        for (auto c : counts) acc += xlogx_[c];
        return std::log(static_cast<double>(n_)) - acc / static_cast<double>(n_);
    }

    std::size_t n_ = 0;
    std::vector<std::uint8_t> now_, own_, source_;
    std::vector<double> xlogx_;
    double fixed_ = 0.0;
    bool degenerate_ = false;
};

template <typename Kernel>
PermutationTest run_permutations(const Kernel& kernel, std::size_t n_perm, std::uint64_t seed, std::size_t workers) {
    using Cell = typename Kernel::Cell;
    const auto& original = kernel.source_column();
    const double observed = kernel.evaluate(std::span<const Cell>(original));

    std::vector<double> replicas(n_perm);
    const std::size_t tasks = (n_perm + kReplicasPerTask - 1) / kReplicasPerTask;
    parallel_for(tasks, workers, [&](std::size_t task) {
        std::vector<Cell> buffer(original.size());
        const std::size_t end = std::min(n_perm, (task + 1) * kReplicasPerTask);
        for (std::size_t r = task * kReplicasPerTask; r < end; ++r) {
            std::copy(original.begin(), original.end(), buffer.begin());
            std::mt19937_64 engine(replica_seed(seed, r));
            std::shuffle(buffer.begin(), buffer.end(), engine);
            replicas[r] = kernel.evaluate(std::span<const Cell>(buffer));
        }
    });

    PermutationTest out;
    out.te_observed = observed;
    out.n_exceed = static_cast<std::size_t>(
        std::count_if(replicas.begin(), replicas.end(), [&](double v) { return v >= observed; }));
    out.p_value = static_cast<double>(1 + out.n_exceed) / static_cast<double>(1 + n_perm);
    out.n_perm = n_perm;
    out.seed = seed;
    return out;
}

std::string fixed6(double v) {
    if (std::abs(v) < 5e-7) v = 0.0;  // no "-0.000000"
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string general6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string method_label(const Estimator& e) {
    if (e.kind == Estimator::Kind::linear) return "linear";
    return "nonlinear " + e.name().substr(std::string("nonlinear_").size());
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

ChangeSeries difference_series(std::span<const double> levels, std::size_t horizon, std::string label) {
    if (horizon < 1) throw std::invalid_argument("difference_series: horizon must be >= 1");
    if (levels.size() < horizon + 1) {
        throw InsufficientDataError("difference_series: need at least " + std::to_string(horizon + 1) +
                                    " values, got " + std::to_string(levels.size()));
    }
    ChangeSeries out;
    out.horizon = horizon;
    out.label = std::move(label);
    const std::size_t count = (levels.size() - 1) / horizon;
    out.values.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) out.values.push_back(levels[k * horizon] - levels[(k - 1) * horizon]);
    return out;
}

ChangeSeries difference_series(const ConnectednessSeries& series, std::size_t horizon) {
    return difference_series(series.values, horizon, series.label);
}

SymbolSeries discretize_three_band(std::span<const double> values, double delta, double mu, double sigma) {
    if (!(delta > 0.0)) throw std::invalid_argument("discretize_three_band: delta must be > 0");
    SymbolSeries out;
    out.delta = delta;
    out.mu = mu;
    out.sigma = sigma;
    out.degenerate = !(sigma > 0.0);
    out.symbols.reserve(values.size());
    const double half_width = delta * sigma;
    for (double v : values) {
        if (out.degenerate || std::abs(v - mu) <= half_width) {
            out.symbols.push_back(Symbol::zero);
        } else if (v < mu - half_width) {
            out.symbols.push_back(Symbol::minus);
        } else {
            out.symbols.push_back(Symbol::plus);
        }
    }
    return out;
}

SymbolSeries discretize_three_band(std::span<const double> values, double delta) {
    if (values.size() < 2) throw InsufficientDataError("discretize_three_band: need at least 2 values");
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
    const double mu = v.mean();
    const double sigma = std::sqrt((v.array() - mu).square().mean());
    return discretize_three_band(values, delta, mu, sigma);
}

std::uint32_t tuple_code(std::initializer_list<Symbol> tuple) {
    std::uint32_t code = 0;
    for (auto s : tuple) code = code * 3 + static_cast<std::uint32_t>(s);
    return code;
}

double plugin_entropy(std::span<const std::uint32_t> tuple_codes) {
    if (tuple_codes.empty()) throw std::invalid_argument("plugin_entropy: empty sample");
    std::vector<std::uint32_t> sorted(tuple_codes.begin(), tuple_codes.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double h = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double p = static_cast<double>(j - i) / n;
        h -= p * std::log(p);
        i = j;
    }
    return h;
}

std::string Estimator::name() const {
    if (kind == Kind::linear) return "linear";
    char buf[48];
    std::snprintf(buf, sizeof buf, "nonlinear_%gsigma", delta);
    return buf;
}

LinearTe linear_te(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    const auto fit = nested_fit(target, source, lag);
    return {0.5 * std::log(fit.ssr_restricted / fit.ssr_full), fit.rank_deficient};
}

double linear_te_logdet(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    check_pair(target, source, lag);
    const auto a = align(target, source, lag);
    const auto n = a.now.size();
    Eigen::MatrixXd z(n, 3);
    z << a.now, a.own_lag, a.source_lag;
    const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
    const Eigen::Matrix3d cov = (centered.transpose() * centered) / static_cast<double>(n);

    // H(Z) = 0.5 log det(2 pi e Sigma(Z)); indices into (x_t, x_lag, y_lag).
    const auto entropy = [&](std::initializer_list<int> idx) {
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd sub(k, k);
        Eigen::Index r = 0;
        for (int i : idx) {
            Eigen::Index c = 0;
            for (int j : idx) sub(r, c++) = cov(i, j);
            ++r;
        }
        const Eigen::LLT<Eigen::MatrixXd> llt(2.0 * std::numbers::pi * std::numbers::e * sub);
        if (llt.info() != Eigen::Success) {
            throw DegenerateSeriesError("linear transfer entropy: singular joint covariance");
        }
        return llt.matrixLLT().diagonal().array().log().sum();  // 0.5 * log det
    };
    return entropy({0, 1}) - entropy({1}) - entropy({0, 1, 2}) + entropy({1, 2});
}

double linear_te_f_pvalue(std::span<const double> target, std::span<const double> source, std::size_t lag) {
    const auto fit = nested_fit(target, source, lag);
    const double df2 = static_cast<double>(fit.n) - 3.0;
    if (df2 < 1.0) throw InsufficientDataError("F test: not enough observations");
    const double f = (fit.ssr_restricted - fit.ssr_full) / (fit.ssr_full / df2);
    if (!(f > 0.0)) return 1.0;
    if (!std::isfinite(f)) return 0.0;
    const boost::math::fisher_f_distribution<double> dist(1.0, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

NonlinearTe nonlinear_te(std::span<const double> target, std::span<const double> source, std::size_t lag,
                         double delta) {
    const NonlinearKernel kernel(target, source, lag, delta);
    if (kernel.degenerate()) return {0.0, true};
    return {kernel.evaluate(kernel.source_column()), false};
}

double transfer_entropy(std::span<const double> target, std::span<const double> source, std::size_t lag,
                        const Estimator& estimator) {
    if (estimator.kind == Estimator::Kind::linear) return linear_te(target, source, lag).te;
    return nonlinear_te(target, source, lag, estimator.delta).te;
}

double net_information_flow(double te_xy, double te_yx) { return te_xy - te_yx; }

double net_information_flow(const TeEstimate& xy, const TeEstimate& yx) {
    if (!(xy.estimator == yx.estimator) || xy.lag != yx.lag) {
        throw std::invalid_argument("net_information_flow: estimates come from different estimators or lags (" +
                                    xy.estimator.name() + " vs " + yx.estimator.name() + ")");
    }
    return net_information_flow(xy.te, yx.te);
}

std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) {
    // splitmix64 finalizer over a Weyl-sequence offset
    std::uint64_t z = seed + (replica + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PermutationTest permutation_pvalue(std::span<const double> target, std::span<const double> source, std::size_t lag,
                                   const Estimator& estimator, std::size_t n_perm, std::uint64_t seed,
                                   std::size_t workers) {
    if (n_perm < 1) throw std::invalid_argument("permutation_pvalue: n_perm must be >= 1");
    if (estimator.kind == Estimator::Kind::linear) {
        return run_permutations(LinearKernel(target, source, lag), n_perm, seed, workers);
    }
    return run_permutations(NonlinearKernel(target, source, lag, estimator.delta), n_perm, seed, workers);
}

TeTable te_table(const std::vector<ChangeSeries>& changes, const TeConfig& config) {
    if (changes.size() < 2) throw std::invalid_argument("te_table: need at least 2 series");
    for (const auto& c : changes) {
        if (c.values.size() != changes.front().values.size()) {
            throw AlignmentError("te_table: change series '" + c.label + "' has a different length; intersect calendars first");
        }
    }
    std::vector<Estimator> estimators{Estimator::linear()};
    for (double d : config.deltas) estimators.push_back(Estimator::nonlinear(d));

    TeTable table;
    table.horizon = config.horizon;
    table.lag = config.lag;
    table.n_perm = config.n_perm;
    table.seed = config.seed;
    for (std::size_t i = 0; i < changes.size(); ++i) {
        for (std::size_t j = i + 1; j < changes.size(); ++j) {
            const auto& x = changes[i].values;
            const auto& y = changes[j].values;
            for (const auto& est : estimators) {
                TeResult r;
                r.x_label = changes[i].label;
                r.y_label = changes[j].label;
                r.estimator = est;
                r.lag = config.lag;
                r.n_perm = config.n_perm;
                r.seed = config.seed;
                r.te_xy = transfer_entropy(y, x, config.lag, est);
                r.te_yx = transfer_entropy(x, y, config.lag, est);
                r.net_flow = net_information_flow(TeEstimate{r.te_xy, est, config.lag}, TeEstimate{r.te_yx, est, config.lag});
                if (config.n_perm > 0) {
                    r.p_xy = permutation_pvalue(y, x, config.lag, est, config.n_perm, config.seed, config.workers).p_value;
                    r.p_yx = permutation_pvalue(x, y, config.lag, est, config.n_perm, config.seed, config.workers).p_value;
                } else {
                    r.p_xy = r.p_yx = std::numeric_limits<double>::quiet_NaN();
                }
                if (est.kind == Estimator::Kind::linear) {
                    r.p_xy_f = linear_te_f_pvalue(y, x, config.lag);
                    r.p_yx_f = linear_te_f_pvalue(x, y, config.lag);
                }
                table.rows.push_back(std::move(r));
            }
        }
    }
    return table;
}

TeTable te_table(const std::vector<ConnectednessSeries>& series, const TeConfig& config) {
    if (series.size() < 2) throw std::invalid_argument("te_table: need at least 2 series");
    for (const auto& s : series) {
        if (s.end_dates != series.front().end_dates) {
            throw AlignmentError("te_table: series '" + s.label + "' is on a different calendar than '" +
                                 series.front().label + "'; intersect end dates first");
        }
    }
    std::vector<ChangeSeries> changes;
    for (const auto& s : series) changes.push_back(difference_series(s, config.horizon));
    return te_table(changes, config);
}

std::string significance_stars(double p) {
    if (std::isnan(p)) return "";
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

void write_te_csv(std::ostream& out, const TeTable& table) {
    out << "pair,direction,estimator,te,p_perm,p_f,net_flow,stars\n";
    for (const auto& r : table.rows) {
        const std::string pair = r.x_label + "-" + r.y_label;
        const auto row = [&](const std::string& from, const std::string& to, double te, double p,
                             const std::optional<double>& pf, double net) {
            out << pair << ',' << from << "->" << to << ',' << r.estimator.name() << ',' << fixed6(te) << ','
                << (std::isnan(p) ? "" : general6(p)) << ',' << (pf ? general6(*pf) : "") << ',' << fixed6(net) << ','
                << significance_stars(p) << '\n';
        };
        row(r.x_label, r.y_label, r.te_xy, r.p_xy, r.p_xy_f, r.net_flow);
        row(r.y_label, r.x_label, r.te_yx, r.p_yx, r.p_yx_f, -r.net_flow);
    }
}

void write_te_report(std::ostream& out, const TeTable& table) {
    constexpr std::size_t kMethodWidth = 20;
    constexpr std::size_t kValueWidth = 16;
    out << "Transfer entropy (nats): horizon " << table.horizon << ", lag " << table.lag << ", " << table.n_perm
        << " permutations, seed " << table.seed << "\n";
    std::string current;
    for (const auto& r : table.rows) {
        const std::string pair = r.x_label + "-" + r.y_label;
        if (pair != current) {
            current = pair;
            const std::string te_xy = "TE_{" + r.x_label + "->" + r.y_label + "}";
            const std::string te_yx = "TE_{" + r.y_label + "->" + r.x_label + "}";
            const std::string header =
                pad("method", kMethodWidth) + pad(te_xy, kValueWidth) + pad(te_yx, kValueWidth) + "Net Information Flow";
            out << '\n' << header << '\n' << std::string(header.size(), '-') << '\n';
        }
        out << pad(method_label(r.estimator), kMethodWidth) << pad(fixed6(r.te_xy) + significance_stars(r.p_xy), kValueWidth)
            << pad(fixed6(r.te_yx) + significance_stars(r.p_yx), kValueWidth) << fixed6(r.net_flow) << '\n';
    }
    out << "\n* p-value < 0.05, ** p-value < 0.01, *** p-value < 0.001.\n";
}

}  // namespace spillover
