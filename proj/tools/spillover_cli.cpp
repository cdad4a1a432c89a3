// spillover: connectedness series and transfer-entropy tables from price panels.
//
//   spillover run     --input NA=na.csv --input EU=eu.csv --seed 7 -o out
//   spillover connect --panel banks.csv --region-map regions.csv
//   spillover te      --series NA=out/NA_connectedness.csv --series EU=... --seed 7
//   spillover synth   var1|shock|coupled|regions ...
//
// Settings come from --config (key = value lines), then SPILLOVER_* environment
// variables, then flags; later sources win.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "spillover/errors.hpp"
#include "spillover/pipeline.hpp"
#include "spillover/synthlab.hpp"

extern char** environ;

namespace {

using namespace spillover;

struct PipelineArgs {
    std::string config_file;
    ConfigMap flags;
};

void add_pipeline_options(CLI::App& cmd, PipelineArgs& args) {
    cmd.add_option("-c,--config", args.config_file, "key = value configuration file")->check(CLI::ExistingFile);

    const auto keyed = [&](const std::string& flag, const std::string& prefix, const std::string& help) {
        cmd.add_option_function<std::vector<std::string>>(
               flag,
               [&args, prefix, flag](const std::vector<std::string>& items) {
                   for (const auto& item : items) {
                       const auto eq = item.find('=');
                       if (eq == std::string::npos || eq == 0) {
                           throw CLI::ValidationError(flag, "expected NAME=VALUE, got '" + item + "'");
                       }
                       args.flags[prefix + item.substr(0, eq)] = item.substr(eq + 1);
                   }
               },
               help)
            ->type_name("NAME=VALUE");
    };
    keyed("--input", "input.", "price file for one region (REGION=PATH), repeatable");
    keyed("--series", "series.", "connectedness series for te (LABEL=PATH), repeatable");
    keyed("--schema-for", "schema.", "per-region schema override (REGION=long|wide)");

    struct Opt {
        const char* flag;
        const char* key;
        const char* help;
    };
    static const Opt options[] = {
        {"--panel", "panel", "single price panel with entity@REGION labels"},
        {"--region-map", "region_map", "entity,region side file"},
        {"--schema", "schema", "long|wide"},
        {"--delimiter", "delimiter", "field delimiter (single character or 'tab')"},
        {"--missing", "missing", "zero|drop"},
        {"--calendar", "calendar", "intersect|union_zero_fill"},
        {"--window", "window", "rolling window length W (default 300)"},
        {"--theta", "theta", "exponential weight scale, or inf (default 100)"},
        {"--lambda", "lambda", "ridge penalty (default 100)"},
        {"--stride", "stride", "window stride (default 1)"},
        {"--standardize", "standardize", "fit ridge on standardized variables (true|false)"},
        {"--ordering", "ordering", "input|reversed"},
        {"--ordering-check", "ordering_check", "record reversed-ordering sensitivity (true|false)"},
        {"--dump-matrices", "dump_matrices", "write per-window connectedness matrices (true|false)"},
        {"--horizons", "horizons", "change horizons, comma-separated (default 1,5)"},
        {"--lag", "lag", "lag in steps of the change series (default 1)"},
        {"--deltas", "deltas", "band half-widths for nonlinear TE (default 1,2,3)"},
        {"--n-perm", "n_perm", "permutation replicas (default 10000)"},
        {"--seed", "seed", "permutation seed (required when n-perm > 0)"},
        {"--workers", "workers", "worker threads (default 1)"},
        {"-o,--output-dir", "output_dir", "output directory (default out)"},
    };
    for (const auto& o : options) {
        const std::string key = o.key;
        cmd.add_option_function<std::string>(
            o.flag, [&args, key](const std::string& v) { args.flags[key] = v; }, o.help);
    }
}

int run_mode(const PipelineArgs& args, Mode mode) {
    ConfigMap merged;
    if (!args.config_file.empty()) {
        std::ifstream in(args.config_file);
        try {
            merged = parse_config_text(in);
        } catch (const Error& e) {
            std::cerr << args.config_file << ": " << e.what() << '\n';
            return kExitConfig;
        }
    }
    merged = merge_config(std::move(merged), env_overrides(environ));
    merged = merge_config(std::move(merged), args.flags);

    const auto parsed = build_config(merged);
    if (!parsed.violations.empty()) {
        for (const auto& v : parsed.violations) std::cerr << "config: " << v.message() << '\n';
        return kExitConfig;
    }
    const auto outcome = run_pipeline(parsed.config, mode);
    if (outcome.exit_code != kExitOk) {
        std::cerr << (outcome.exit_code == kExitConfig ? "config: " : "error: ") << outcome.message;
        if (!outcome.message.ends_with('\n')) std::cerr << '\n';
        return outcome.exit_code;
    }
    for (const auto& f : outcome.files) std::cout << (std::filesystem::path(parsed.config.output_dir) / f).string() << '\n';
    return kExitOk;
}

struct SynthArgs {
    std::size_t entities = 10;
    std::size_t length = 600;
    double radius = 0.5;
    double correlation = 0.0;
    std::uint64_t seed = 0;
    std::string region;
    std::string output = "-";
    std::string start = "2005-01-03";

    std::string shock_date;
    std::size_t shock_row = 300;
    double magnitude = 10.0;

    double beta = 0.8;
    double noise = 1.0;
    std::size_t lag = 1;
    std::string output_x = "x_connectedness.csv";
    std::string output_y = "y_connectedness.csv";

    std::vector<std::string> regions{"NA", "EU", "AS"};
    std::string output_dir = "synth";
};

void add_var1_options(CLI::App& cmd, SynthArgs& a) {
    cmd.add_option("--entities", a.entities, "number of entities")->capture_default_str();
    cmd.add_option("--length", a.length, "number of return dates")->capture_default_str();
    cmd.add_option("--radius", a.radius, "spectral radius of the random VAR matrix")->capture_default_str();
    cmd.add_option("--correlation", a.correlation, "equicorrelation of the innovations")->capture_default_str();
    cmd.add_option("--seed", a.seed, "RNG seed")->required();
    cmd.add_option("--start", a.start, "first return date (YYYY-MM-DD)")->capture_default_str();
}

synth::Var1Spec var1_spec(const SynthArgs& a, std::uint64_t seed, const std::string& region) {
    synth::Var1Spec spec;
    const auto n = static_cast<Eigen::Index>(a.entities);
    spec.coefficients = synth::random_stable_matrix(a.entities, a.radius, seed ^ 0x5bd1e995ULL);
    spec.innovation_covariance = Eigen::MatrixXd::Constant(n, n, a.correlation);
    spec.innovation_covariance.diagonal().setOnes();
    spec.length = a.length;
    spec.seed = seed;
    spec.start = Date::parse(a.start);
    spec.region = region;
    return spec;
}

void emit(const std::string& path, const std::string& content) {
    if (path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

std::string wide_csv(const PricePanel& panel) {
    std::ostringstream s;
    write_price_panel_wide(s, panel);
    return s.str();
}

std::string level_series_csv(const ChangeSeries& changes, const std::string& start) {
    ConnectednessSeries s;
    s.label = changes.label;
    s.end_dates = synth::weekdays(Date::parse(start), changes.values.size() + 1);
    s.values.resize(changes.values.size() + 1, 0.0);
    std::partial_sum(changes.values.begin(), changes.values.end(), s.values.begin() + 1);
    s.imputation_fraction.assign(s.values.size(), 0.0);
    s.flags.assign(s.values.size(), 0U);
    std::ostringstream out;
    write_series_csv(out, s);
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Connectedness and transfer-entropy pipeline for panels of stock prices"};
    app.set_version_flag("--version", std::string("spillover ") + SPILLOVER_VERSION);
    app.require_subcommand(1);

    PipelineArgs run_args, connect_args, te_args;
    auto* run = app.add_subcommand("run", "connectedness per region, then transfer entropy across regions");
    auto* connect = app.add_subcommand("connect", "connectedness series only");
    auto* te = app.add_subcommand("te", "transfer entropy from existing connectedness series");
    add_pipeline_options(*run, run_args);
    add_pipeline_options(*connect, connect_args);
    add_pipeline_options(*te, te_args);

    auto* synth_cmd = app.add_subcommand("synth", "synthetic inputs with known structure");
    synth_cmd->require_subcommand(1);
    SynthArgs sa;

    auto* var1 = synth_cmd->add_subcommand("var1", "VAR(1) return panel, written as wide prices");
    add_var1_options(*var1, sa);
    var1->add_option("--region", sa.region, "region tag for the entity labels");
    var1->add_option("-o,--output", sa.output, "output file, - for stdout")->capture_default_str();

    auto* shock = synth_cmd->add_subcommand("shock", "VAR(1) panel with a common shock on one date");
    add_var1_options(*shock, sa);
    shock->add_option("--region", sa.region, "region tag for the entity labels");
    shock->add_option("-o,--output", sa.output, "output file, - for stdout")->capture_default_str();
    auto* shock_date = shock->add_option("--shock-date", sa.shock_date, "date of the shock");
    shock->add_option("--shock-row", sa.shock_row, "return row of the shock")->capture_default_str()->excludes(shock_date);
    shock->add_option("--magnitude", sa.magnitude, "shock added to every entity")->capture_default_str();

    auto* coupled = synth_cmd->add_subcommand("coupled", "driver y and driven x_t = beta y_{t-lag} + noise eta_t");
    coupled->add_option("--beta", sa.beta)->capture_default_str();
    coupled->add_option("--noise", sa.noise)->capture_default_str();
    coupled->add_option("--length", sa.length, "number of changes")->capture_default_str();
    coupled->add_option("--lag", sa.lag)->capture_default_str();
    coupled->add_option("--seed", sa.seed)->required();
    coupled->add_option("--start", sa.start)->capture_default_str();
    coupled->add_option("--output-x", sa.output_x, "level series of x (connectedness CSV)")->capture_default_str();
    coupled->add_option("--output-y", sa.output_y, "level series of y (connectedness CSV)")->capture_default_str();

    auto* regions = synth_cmd->add_subcommand("regions", "one VAR(1) price file per region plus a config");
    add_var1_options(*regions, sa);
    regions->add_option("--regions", sa.regions, "region names")->delimiter(',')->capture_default_str();
    regions->add_option("-o,--output-dir", sa.output_dir)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (*run) return run_mode(run_args, Mode::run);
    if (*connect) return run_mode(connect_args, Mode::connect);
    if (*te) return run_mode(te_args, Mode::te);

    try {
        if (*var1) {
            emit(sa.output, wide_csv(synth::to_prices(synth::generate_var1(var1_spec(sa, sa.seed, sa.region)))));
        } else if (*shock) {
            const auto panel = synth::generate_var1(var1_spec(sa, sa.seed, sa.region));
            const auto shocked = sa.shock_date.empty() ? synth::inject_shock(panel, sa.shock_row, sa.magnitude)
                                                       : synth::inject_shock(panel, Date::parse(sa.shock_date), sa.magnitude);
            emit(sa.output, wide_csv(synth::to_prices(shocked)));
        } else if (*coupled) {
            auto pair = synth::generate_coupled_pair(sa.beta, sa.noise, sa.length, sa.seed, sa.lag);
            emit(sa.output_x, level_series_csv(pair.x, sa.start));
            emit(sa.output_y, level_series_csv(pair.y, sa.start));
        } else if (*regions) {
            std::filesystem::create_directories(sa.output_dir);
            std::ostringstream conf;
            for (std::size_t k = 0; k < sa.regions.size(); ++k) {
                const auto& r = sa.regions[k];
                const auto path = std::filesystem::path(sa.output_dir) / (r + ".csv");
                emit(path.string(), wide_csv(synth::to_prices(synth::generate_var1(var1_spec(sa, sa.seed + k, r)))));
                conf << "input." << r << " = " << path.string() << '\n';
            }
            emit((std::filesystem::path(sa.output_dir) / "synth.conf").string(), conf.str());
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}
