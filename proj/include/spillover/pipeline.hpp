#pragma once

// End-to-end orchestration: price files -> per-region connectedness series ->
// cross-region transfer-entropy tables, plus a run manifest. Configuration is
// a flat key/value map assembled from a config file, environment overrides
// and command-line flags (later sources win).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spillover/connectedness.hpp"
#include "spillover/panel_io.hpp"
#include "spillover/transfer_entropy.hpp"

namespace spillover {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

inline constexpr const char* kEnvPrefix = "SPILLOVER_";

using ConfigMap = std::map<std::string, std::string>;

struct NamedPath {
    std::string name;
    std::string path;
};

struct RunConfig {
    // Inputs: either one file per region (input.<REGION>) or a single tagged
    // panel split by region. `te` reads series.<LABEL> connectedness files.
    std::vector<NamedPath> inputs;
    std::map<std::string, Schema> region_schema;
    std::string panel;
    std::string region_map;
    std::vector<NamedPath> series;
    Schema schema = Schema::wide;
    char delimiter = ',';

    MissingPolicy missing = MissingPolicy::zero_impute;
    CalendarPolicy calendar = CalendarPolicy::union_zero_fill;

    std::size_t window = 300;
    double theta = 100.0;
    double lambda = 100.0;
    std::size_t stride = 1;
    bool standardize = false;
    Ordering ordering = Ordering::input;
    bool ordering_check = false;
    bool dump_matrices = false;

    std::vector<std::size_t> horizons{1, 5};
    std::size_t lag = 1;
    std::vector<double> deltas{1.0, 2.0, 3.0};
    std::size_t n_perm = 10000;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;

    std::string output_dir = "out";
};

struct ConfigViolation {
    std::string key;
    std::string value;
    std::string allowed;

    std::string message() const;
};

/// `key = value` lines; `#` starts a comment. Throws ParseError naming the line.
ConfigMap parse_config_text(std::istream& in);

/// Entries of `environ` starting with SPILLOVER_, keys lower-cased
/// (SPILLOVER_N_PERM -> n_perm).
ConfigMap env_overrides(char** environ_block);

/// Applies `overrides` on top of `base`.
ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides);

struct ParsedConfig {
    RunConfig config;
    std::vector<ConfigViolation> violations;
};

/// Converts the key/value map; unknown keys and unparseable values are
/// reported as violations, together with validate_config's findings.
ParsedConfig build_config(const ConfigMap& values);

/// Empty iff every parameter lies in its module's domain. Never throws.
std::vector<ConfigViolation> validate_config(const RunConfig& config);

/// Every effective parameter as key/value pairs, in a fixed order.
std::vector<std::pair<std::string, std::string>> describe_config(const RunConfig& config);

enum class Mode { run, connect, te };

struct RunOutcome {
    int exit_code = kExitOk;
    std::string message;
    std::vector<std::string> files;  // written, relative to output_dir
};

/// Runs one subcommand. Violations give exit 2, data errors exit 3; on
/// failure every file this call wrote is removed again.
RunOutcome run_pipeline(const RunConfig& config, Mode mode);

/// Intersects the end-date calendars of several series.
std::vector<ConnectednessSeries> intersect_calendars(const std::vector<ConnectednessSeries>& series);

/// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::string& path);

}  // namespace spillover
