#pragma once

// Price ingestion, log returns and calendar alignment for per-region bank
// panels. A panel is a dense date x entity matrix; missing cells are carried
// explicitly (NaN prices, flagged returns) and never encoded as zero prices.

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace spillover {

/// Calendar date used as an opaque ordered key (ISO-8601 on the wire).
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int year, unsigned month, unsigned day);

    /// Parses `YYYY-MM-DD`; throws ParseError on anything else.
    static Date parse(std::string_view text);

    std::chrono::sys_days days() const { return days_; }
    std::string to_string() const;

    friend auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::sys_days days_{};
};

struct Entity {
    std::string id;
    std::string region;  // empty when untagged

    /// `id@REGION`, or just `id` when untagged.
    std::string label() const;

    /// Splits the `entity@REGION` suffix convention.
    static Entity from_label(std::string_view label);

    friend auto operator<=>(const Entity&, const Entity&) = default;
};

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class PricePanel {
public:
    /// Missing prices are NaN in `closes`. Throws std::invalid_argument when
    /// dates are not strictly increasing, shapes disagree or a stored price
    /// is not positive.
    PricePanel(std::vector<Date> dates, std::vector<Entity> entities, Eigen::MatrixXd closes,
               std::vector<std::string> warnings = {});

    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<Entity>& entities() const { return entities_; }
    const Eigen::MatrixXd& closes() const { return closes_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    std::size_t n_dates() const { return dates_.size(); }
    std::size_t n_entities() const { return entities_.size(); }
    bool missing(std::size_t row, std::size_t col) const;

private:
    std::vector<Date> dates_;
    std::vector<Entity> entities_;
    Eigen::MatrixXd closes_;
    std::vector<std::string> warnings_;
};

class ReturnPanel {
public:
    /// `returns` must be finite; imputed cells are flagged in `missing`.
    ReturnPanel(std::vector<Date> dates, std::vector<Entity> entities, Eigen::MatrixXd returns,
                MissingMask missing);

    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<Entity>& entities() const { return entities_; }
    const Eigen::MatrixXd& returns() const { return returns_; }
    const MissingMask& missing() const { return missing_; }

    std::size_t n_dates() const { return dates_.size(); }
    std::size_t n_entities() const { return entities_.size(); }

    /// Fraction of flagged cells in rows [first, first + count).
    double imputation_fraction(std::size_t first, std::size_t count) const;

    /// Copy with the columns reordered; `order[k]` is the source column of column k.
    ReturnPanel reorder(const std::vector<std::size_t>& order) const;

private:
    std::vector<Date> dates_;
    std::vector<Entity> entities_;
    Eigen::MatrixXd returns_;
    MissingMask missing_;
};

enum class Schema { long_format, wide };
enum class MissingPolicy { zero_impute, drop };
enum class CalendarPolicy { intersect, union_zero_fill };

Schema parse_schema(std::string_view text);
MissingPolicy parse_missing_policy(std::string_view text);
CalendarPolicy parse_calendar_policy(std::string_view text);
std::string_view to_string(Schema schema);
std::string_view to_string(MissingPolicy policy);
std::string_view to_string(CalendarPolicy policy);

struct LoadOptions {
    Schema schema = Schema::wide;
    char delimiter = ',';
    /// Entity id -> region, applied to entities that carry no `@REGION` tag.
    std::map<std::string, std::string> region_map;
};

/// Reads a delimited price table (header row required). Rows are sorted by
/// date and entities by identifier. Unparseable or non-positive prices become
/// missing cells and add a warning.
PricePanel load_price_panel(std::istream& in, const LoadOptions& options = {});
PricePanel load_price_panel_file(const std::string& path, const LoadOptions& options = {});

/// Reads an `entity,region` side file (header row required).
std::map<std::string, std::string> load_region_map(std::istream& in, char delimiter = ',');

/// Splits a tagged panel into one panel per region. Dates where a region has
/// no price at all are dropped from that region.
std::map<std::string, PricePanel> split_by_region(const PricePanel& panel);

ReturnPanel compute_log_returns(const PricePanel& panel,
                                MissingPolicy policy = MissingPolicy::zero_impute);

ReturnPanel align_calendar(const ReturnPanel& panel, CalendarPolicy policy);

/// Wide schema: `date,<entity labels...>`, prices at full precision, missing
/// cells left empty.
void write_price_panel_wide(std::ostream& out, const PricePanel& panel, char delimiter = ',');

}  // namespace spillover
