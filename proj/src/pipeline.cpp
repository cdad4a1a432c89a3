#include "spillover/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "spillover/errors.hpp"
#include "spillover/parallel.hpp"

namespace spillover {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::optional<T> parse_integer(const std::string& text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::optional<double> parse_real(const std::string& text, bool allow_inf = false) {
    if (allow_inf && (text == "inf" || text == "Inf" || text == "infinity")) {
        return std::numeric_limits<double>::infinity();
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::optional<bool> parse_bool(const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    return std::nullopt;
}

std::string format_real(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += format_real(v);
        } else {
            out += std::to_string(v);
        }
    }
    return out;
}

std::string delimiter_name(char d) { return d == '\t' ? "tab" : std::string(1, d); }

// Files written by one run; removed again unless the run is committed.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;
    ~OutputSet() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& name : written_) fs::remove(dir_ / name, ec);
    }

    void write(const std::string& name, const std::string& content) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        written_.push_back(name);
        out << content;
        if (!out) throw DataError("failed writing " + path.string());
    }

    void commit() { committed_ = true; }
    const std::vector<std::string>& written() const { return written_; }

private:
    fs::path dir_;
    std::vector<std::string> written_;
    bool committed_ = false;
};

struct RegionPanel {
    std::string region;
    ReturnPanel returns;
    std::size_t price_dates = 0;
    std::size_t warnings = 0;
};

std::vector<RegionPanel> load_regions(const RunConfig& config, std::vector<std::pair<std::string, std::string>>& digests) {
    std::map<std::string, std::string> region_map;
    if (!config.region_map.empty()) {
        std::ifstream in(config.region_map);
        if (!in) throw DataError("cannot open " + config.region_map);
        try {
            region_map = load_region_map(in, config.delimiter);
        } catch (const Error& e) {
            throw DataError(config.region_map + ": " + e.what());
        }
        digests.emplace_back("region_map", file_digest(config.region_map));
    }

    std::vector<std::pair<std::string, PricePanel>> prices;
    if (!config.panel.empty()) {
        LoadOptions options{config.schema, config.delimiter, region_map};
        const auto panel = load_price_panel_file(config.panel, options);
        digests.emplace_back("panel", file_digest(config.panel));
        for (auto& [region, p] : split_by_region(panel)) prices.emplace_back(region.empty() ? "panel" : region, std::move(p));
    } else {
        for (const auto& input : config.inputs) {
            LoadOptions options{config.schema, config.delimiter, region_map};
            if (const auto it = config.region_schema.find(input.name); it != config.region_schema.end()) {
                options.schema = it->second;
            }
            auto panel = load_price_panel_file(input.path, options);
            digests.emplace_back("input." + input.name, file_digest(input.path));
            prices.emplace_back(input.name, std::move(panel));
        }
    }

    std::vector<RegionPanel> out;
    for (auto& [region, panel] : prices) {
        try {
            auto returns = align_calendar(compute_log_returns(panel, config.missing), config.calendar);
            out.push_back(RegionPanel{region, std::move(returns), panel.n_dates(), panel.warnings().size()});
        } catch (const Error& e) {
            throw DataError("region " + region + ": " + e.what());
        }
    }
    return out;
}

std::vector<ConnectednessSeries> load_series(const RunConfig& config,
                                             std::vector<std::pair<std::string, std::string>>& digests) {
    std::vector<ConnectednessSeries> out;
    for (const auto& s : config.series) {
        std::ifstream in(s.path);
        if (!in) throw DataError("cannot open " + s.path);
        try {
            out.push_back(read_series_csv(in, s.name));
        } catch (const Error& e) {
            throw DataError(s.path + ": " + e.what());
        }
        digests.emplace_back("series." + s.name, file_digest(s.path));
    }
    return out;
}

ConnectednessConfig connectedness_config(const RunConfig& config, std::size_t workers) {
    ConnectednessConfig c;
    c.window = config.window;
    c.theta = config.theta;
    c.lambda = config.lambda;
    c.stride = config.stride;
    c.standardize = config.standardize;
    c.ordering = config.ordering;
    c.workers = workers;
    c.keep_matrices = config.dump_matrices;
    return c;
}

std::vector<ConfigViolation> mode_violations(const RunConfig& config, Mode mode) {
    std::vector<ConfigViolation> v;
    if (mode == Mode::te) {
        if (config.series.size() < 2) {
            v.push_back({"series", std::to_string(config.series.size()) + " series", "at least 2 series.<LABEL> files"});
        }
        return v;
    }
    if (config.panel.empty() && config.inputs.empty()) {
        v.push_back({"input", "(none)", "input.<REGION> files or a tagged panel"});
    }
    if (!config.panel.empty() && !config.inputs.empty()) {
        v.push_back({"panel", config.panel, "either panel or input.<REGION>, not both"});
    }
    if (mode == Mode::run && config.panel.empty() && config.inputs.size() == 1) {
        v.push_back({"input", "1 region", "at least 2 regions for transfer entropy"});
    }
    return v;
}

}  // namespace

std::string ConfigViolation::message() const { return key + "=" + value + ": expected " + allowed; }

ConfigMap parse_config_text(std::istream& in) {
    ConfigMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        auto key = trim(std::string_view(text).substr(0, eq));
        if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        std::replace(key.begin(), key.end(), '-', '_');
        out[key] = trim(std::string_view(text).substr(eq + 1));
    }
    return out;
}

ConfigMap env_overrides(char** environ_block) {
    ConfigMap out;
    if (environ_block == nullptr) return out;
    const std::size_t prefix_len = std::strlen(kEnvPrefix);
    for (char** e = environ_block; *e != nullptr; ++e) {
        const std::string_view entry(*e);
        if (!entry.starts_with(kEnvPrefix)) continue;
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos || eq <= prefix_len) continue;
        std::string key(entry.substr(prefix_len, eq - prefix_len));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out[key] = std::string(entry.substr(eq + 1));
    }
    return out;
}

ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides) {
    for (const auto& [k, v] : overrides) base[k] = v;
    return base;
}

ParsedConfig build_config(const ConfigMap& values) {
    ParsedConfig parsed;
    auto& c = parsed.config;
    auto& bad = parsed.violations;

    const auto size_key = [&](const std::string& key, const std::string& value, std::size_t& target, const char* allowed) {
        if (const auto v = parse_integer<std::size_t>(value)) {
            target = *v;
        } else {
            bad.push_back({key, value, allowed});
        }
    };

    for (const auto& [key, value] : values) {
        if (key.starts_with("input.")) {
            c.inputs.push_back({key.substr(6), value});
        } else if (key.starts_with("series.")) {
            c.series.push_back({key.substr(7), value});
        } else if (key.starts_with("schema.")) {
            try {
                c.region_schema[key.substr(7)] = parse_schema(value);
            } catch (const std::invalid_argument&) {
                bad.push_back({key, value, "long|wide"});
            }
        } else if (key == "panel") {
            c.panel = value;
        } else if (key == "region_map") {
            c.region_map = value;
        } else if (key == "schema") {
            try {
                c.schema = parse_schema(value);
            } catch (const std::invalid_argument&) {
                bad.push_back({key, value, "long|wide"});
            }
        } else if (key == "delimiter") {
            if (value == "tab" || value == "\\t") {
                c.delimiter = '\t';
            } else if (value.size() == 1) {
                c.delimiter = value[0];
            } else {
                bad.push_back({key, value, "a single character or 'tab'"});
            }
        } else if (key == "missing") {
            try {
                c.missing = parse_missing_policy(value);
            } catch (const std::invalid_argument&) {
                bad.push_back({key, value, "zero|drop"});
            }
        } else if (key == "calendar") {
            try {
                c.calendar = parse_calendar_policy(value);
            } catch (const std::invalid_argument&) {
                bad.push_back({key, value, "intersect|union_zero_fill"});
            }
        } else if (key == "window") {
            size_key(key, value, c.window, "integer >= 2");
        } else if (key == "theta") {
            if (const auto v = parse_real(value, true)) {
                c.theta = *v;
            } else {
                bad.push_back({key, value, "real > 0 or inf"});
            }
        } else if (key == "lambda") {
            if (const auto v = parse_real(value)) {
                c.lambda = *v;
            } else {
                bad.push_back({key, value, "real >= 0"});
            }
        } else if (key == "stride") {
            size_key(key, value, c.stride, "integer >= 1");
        } else if (key == "standardize" || key == "ordering_check" || key == "dump_matrices") {
            const auto v = parse_bool(value);
            if (!v) {
                bad.push_back({key, value, "true|false"});
            } else if (key == "standardize") {
                c.standardize = *v;
            } else if (key == "ordering_check") {
                c.ordering_check = *v;
            } else {
                c.dump_matrices = *v;
            }
        } else if (key == "ordering") {
            try {
                c.ordering = parse_ordering(value);
            } catch (const std::invalid_argument&) {
                bad.push_back({key, value, "input|reversed"});
            }
        } else if (key == "horizons") {
            c.horizons.clear();
            for (const auto& item : split_list(value)) {
                if (const auto v = parse_integer<std::size_t>(item)) {
                    c.horizons.push_back(*v);
                } else {
                    bad.push_back({key, value, "comma-separated integers >= 1"});
                    break;
                }
            }
        } else if (key == "lag") {
            size_key(key, value, c.lag, "integer >= 1");
        } else if (key == "deltas") {
            c.deltas.clear();
            for (const auto& item : split_list(value)) {
                if (const auto v = parse_real(item)) {
                    c.deltas.push_back(*v);
                } else {
                    bad.push_back({key, value, "comma-separated reals > 0"});
                    break;
                }
            }
        } else if (key == "n_perm") {
            size_key(key, value, c.n_perm, "integer >= 0");
        } else if (key == "seed") {
            if (const auto v = parse_integer<std::uint64_t>(value)) {
                c.seed = *v;
            } else {
                bad.push_back({key, value, "unsigned 64-bit integer"});
            }
        } else if (key == "workers") {
            size_key(key, value, c.workers, "integer in [1, 1024]");
        } else if (key == "output_dir") {
            c.output_dir = value;
        } else {
            bad.push_back({key, value, "a known configuration key"});
        }
    }
    for (auto& v : validate_config(c)) parsed.violations.push_back(std::move(v));
    return parsed;
}

std::vector<ConfigViolation> validate_config(const RunConfig& c) {
    std::vector<ConfigViolation> v;
    if (c.window < 2) v.push_back({"window", std::to_string(c.window), "integer >= 2"});
    if (!(c.theta > 0.0)) v.push_back({"theta", format_real(c.theta), "real > 0 or inf"});
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) v.push_back({"lambda", format_real(c.lambda), "real >= 0"});
    if (c.stride < 1) v.push_back({"stride", std::to_string(c.stride), "integer >= 1"});
    if (c.lag < 1) v.push_back({"lag", std::to_string(c.lag), "integer >= 1"});
    if (c.horizons.empty() || std::any_of(c.horizons.begin(), c.horizons.end(), [](std::size_t h) { return h < 1; })) {
        v.push_back({"horizons", join(c.horizons), "non-empty list of integers >= 1"});
    }
    if (c.deltas.empty() ||
        std::any_of(c.deltas.begin(), c.deltas.end(), [](double d) { return !(d > 0.0) || !std::isfinite(d); })) {
        v.push_back({"deltas", join(c.deltas), "non-empty list of reals > 0"});
    }
    if (c.n_perm > 0 && !c.seed) v.push_back({"seed", "(unset)", "a seed whenever n_perm > 0"});
    if (c.workers < 1 || c.workers > 1024) v.push_back({"workers", std::to_string(c.workers), "integer in [1, 1024]"});
    if (c.output_dir.empty()) v.push_back({"output_dir", "(empty)", "a directory path"});
    for (const auto& in : c.inputs) {
        if (in.name.empty()) v.push_back({"input.", in.path, "input.<REGION> with a region name"});
    }
    for (const auto& s : c.series) {
        if (s.name.empty()) v.push_back({"series.", s.path, "series.<LABEL> with a label"});
    }
    return v;
}

std::vector<std::pair<std::string, std::string>> describe_config(const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& in : c.inputs) out.emplace_back("input." + in.name, in.path);
    for (const auto& [region, schema] : c.region_schema) out.emplace_back("schema." + region, std::string(to_string(schema)));
    for (const auto& s : c.series) out.emplace_back("series." + s.name, s.path);
    out.emplace_back("panel", c.panel);
    out.emplace_back("region_map", c.region_map);
    out.emplace_back("schema", std::string(to_string(c.schema)));
    out.emplace_back("delimiter", delimiter_name(c.delimiter));
    out.emplace_back("missing", std::string(to_string(c.missing)));
    out.emplace_back("calendar", std::string(to_string(c.calendar)));
    out.emplace_back("window", std::to_string(c.window));
    out.emplace_back("theta", format_real(c.theta));
    out.emplace_back("lambda", format_real(c.lambda));
    out.emplace_back("stride", std::to_string(c.stride));
    out.emplace_back("standardize", c.standardize ? "true" : "false");
    out.emplace_back("ordering", std::string(to_string(c.ordering)));
    out.emplace_back("ordering_check", c.ordering_check ? "true" : "false");
    out.emplace_back("dump_matrices", c.dump_matrices ? "true" : "false");
    out.emplace_back("demeaning", "weighted");
    out.emplace_back("weight_normalization", "mean_one");
    out.emplace_back("imputation_flag_threshold", "0.25");
    out.emplace_back("horizons", join(c.horizons));
    out.emplace_back("lag", std::to_string(c.lag));
    out.emplace_back("deltas", join(c.deltas));
    out.emplace_back("n_perm", std::to_string(c.n_perm));
    out.emplace_back("seed", c.seed ? std::to_string(*c.seed) : "");
    out.emplace_back("permutation_scheme", "shuffle_lagged_source");
    out.emplace_back("pvalue_convention", "add_one");
    out.emplace_back("discretization", "marginal_full_sample");
    out.emplace_back("output_dir", c.output_dir);
    return out;
}

std::vector<ConnectednessSeries> intersect_calendars(const std::vector<ConnectednessSeries>& series) {
    if (series.empty()) return {};
    std::set<Date> common(series.front().end_dates.begin(), series.front().end_dates.end());
    for (std::size_t s = 1; s < series.size(); ++s) {
        const std::set<Date> dates(series[s].end_dates.begin(), series[s].end_dates.end());
        std::set<Date> next;
        std::set_intersection(common.begin(), common.end(), dates.begin(), dates.end(), std::inserter(next, next.end()));
        common = std::move(next);
    }
    std::vector<ConnectednessSeries> out;
    for (const auto& s : series) {
        ConnectednessSeries t;
        t.label = s.label;
        t.entities = s.entities;
        t.config = s.config;
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (!common.contains(s.end_dates[k])) continue;
            t.end_dates.push_back(s.end_dates[k]);
            t.values.push_back(s.values[k]);
            t.imputation_fraction.push_back(s.imputation_fraction[k]);
            t.flags.push_back(s.flags[k]);
            if (!s.matrices.empty()) t.matrices.push_back(s.matrices[k]);
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("sha256 unavailable");
    }
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

RunOutcome run_pipeline(const RunConfig& config, Mode mode) {
    RunOutcome outcome;
    auto violations = validate_config(config);
    for (auto& v : mode_violations(config, mode)) violations.push_back(std::move(v));
    if (!violations.empty()) {
        outcome.exit_code = kExitConfig;
        for (const auto& v : violations) outcome.message += v.message() + "\n";
        return outcome;
    }

    OutputSet outputs{fs::path(config.output_dir)};
    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("software", std::string("spillover ") + SPILLOVER_VERSION);
    manifest.emplace_back("mode", mode == Mode::run ? "run" : mode == Mode::connect ? "connect" : "te");
    for (auto& kv : describe_config(config)) manifest.push_back(std::move(kv));

    try {
        std::vector<std::pair<std::string, std::string>> digests;
        std::vector<ConnectednessSeries> series;

        if (mode == Mode::te) {
            series = load_series(config, digests);
        } else {
            const auto regions = load_regions(config, digests);
            if (mode == Mode::run && regions.size() < 2) {
                throw DataError("transfer entropy needs at least 2 regions, found " + std::to_string(regions.size()));
            }
            const std::size_t outer = std::max<std::size_t>(1, std::min(config.workers, regions.size()));
            const std::size_t inner = std::max<std::size_t>(1, config.workers / outer);
            series.resize(regions.size());
            std::vector<double> sensitivity(regions.size(), 0.0);
            parallel_for(regions.size(), outer, [&](std::size_t r) {
                try {
                    const auto cfg = connectedness_config(config, inner);
                    series[r] = connectedness_series(regions[r].returns, cfg, regions[r].region);
                    if (config.ordering_check) sensitivity[r] = ordering_sensitivity(regions[r].returns, cfg);
                } catch (const Error& e) {
                    throw DataError("region " + regions[r].region + ": " + e.what());
                }
            });

            for (std::size_t r = 0; r < regions.size(); ++r) {
                const auto& s = series[r];
                std::ostringstream csv;
                write_series_csv(csv, s);
                outputs.write(s.label + "_connectedness.csv", csv.str());
                if (config.dump_matrices) {
                    std::ostringstream dump;
                    write_matrix_dump(dump, s);
                    outputs.write(s.label + "_matrices.csv", dump.str());
                }
                const std::string prefix = "region." + s.label + ".";
                const auto flagged = std::count_if(s.flags.begin(), s.flags.end(), [](unsigned f) { return f != 0; });
                manifest.emplace_back(prefix + "entities", std::to_string(s.entities.size()));
                manifest.emplace_back(prefix + "price_dates", std::to_string(regions[r].price_dates));
                manifest.emplace_back(prefix + "return_dates", std::to_string(regions[r].returns.n_dates()));
                manifest.emplace_back(prefix + "load_warnings", std::to_string(regions[r].warnings));
                manifest.emplace_back(prefix + "windows", std::to_string(s.size()));
                manifest.emplace_back(prefix + "flagged_windows", std::to_string(flagged));
                manifest.emplace_back(prefix + "imputation_fraction",
                                      format_real(regions[r].returns.imputation_fraction(0, regions[r].returns.n_dates())));
                if (config.ordering_check) {
                    manifest.emplace_back(prefix + "ordering_sensitivity", format_real(sensitivity[r]));
                }
            }
        }

        if (mode != Mode::connect) {
            const auto aligned = intersect_calendars(series);
            manifest.emplace_back("te.common_windows", std::to_string(aligned.front().size()));
            for (const auto horizon : config.horizons) {
                TeConfig te;
                te.lag = config.lag;
                te.horizon = horizon;
                te.deltas = config.deltas;
                te.n_perm = config.n_perm;
                te.seed = config.seed.value_or(0);
                te.workers = config.workers;
                TeTable table;
                try {
                    table = te_table(aligned, te);
                } catch (const Error& e) {
                    throw DataError("transfer entropy at horizon " + std::to_string(horizon) + ": " + e.what());
                }
                std::ostringstream csv, report;
                write_te_csv(csv, table);
                write_te_report(report, table);
                outputs.write("te_table_h" + std::to_string(horizon) + ".csv", csv.str());
                outputs.write("te_table_h" + std::to_string(horizon) + ".txt", report.str());
            }
        }

        for (auto& kv : digests) manifest.emplace_back("digest." + kv.first, kv.second);
        for (const auto& name : outputs.written()) manifest.emplace_back("output", name);
        std::ostringstream m;
        for (const auto& [k, v] : manifest) m << k << '=' << v << '\n';
        outputs.write("run_manifest.txt", m.str());
        outputs.commit();
        outcome.files = outputs.written();
    } catch (const std::exception& e) {
        outcome.exit_code = kExitData;
        outcome.message = e.what();
    }
    return outcome;
}

}  // namespace spillover
