#include "spillover/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        const auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        fields.emplace_back(trim(field));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Yields the header and the data lines of a delimited stream; blank lines are
// skipped but still counted so error messages name the physical row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

Table read_table(std::istream& in, char delimiter) {
    Table table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
        if (trim(view).empty()) continue;
        auto fields = split_fields(view, delimiter);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            table.rows.emplace_back(line_no, std::move(fields));
        }
    }
    if (!have_header) throw EmptyInputError("price table: missing header row");
    return table;
}

// Returns NaN (and records a warning) for anything that is not a positive number.
double parse_price(std::string_view text, std::size_t line_no, const std::string& entity,
                   std::vector<std::string>& warnings) {
    if (text.empty() || text == "NA" || text == "NaN" || text == "nan") {
        return kMissing;
    }
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        warnings.push_back("row " + std::to_string(line_no) + ": unparseable close '" + std::string(text) +
                           "' for " + entity + " treated as missing");
        return kMissing;
    }
    if (value <= 0.0) {
        warnings.push_back("row " + std::to_string(line_no) + ": non-positive close " + std::string(text) +
                           " for " + entity + " treated as missing");
        return kMissing;
    }
    return value;
}

Date parse_row_date(std::string_view text, std::size_t line_no) {
    try {
        return Date::parse(text);
    } catch (const ParseError&) {
        throw ParseError("row " + std::to_string(line_no) + ": malformed date '" + std::string(text) + "'");
    }
}

Entity tag_entity(Entity entity, const std::map<std::string, std::string>& region_map) {
    if (entity.region.empty()) {
        if (const auto it = region_map.find(entity.id); it != region_map.end()) entity.region = it->second;
    }
    return entity;
}

// Cells keyed by (date, entity) -> price; assembled into a sorted dense panel.
PricePanel assemble(const std::map<Date, std::map<Entity, double>>& cells, const std::set<Entity>& entity_set,
                    std::vector<std::string> warnings) {
    std::vector<Date> dates;
    std::vector<Entity> entities(entity_set.begin(), entity_set.end());
    std::map<Entity, std::size_t> col_of;
    for (std::size_t j = 0; j < entities.size(); ++j) col_of[entities[j]] = j;

    bool any_usable = false;
    for (const auto& [date, row] : cells) {
        for (const auto& [entity, price] : row) {
            if (!std::isnan(price)) any_usable = true;
        }
        dates.push_back(date);
    }
    if (dates.empty() || entities.empty() || !any_usable) {
        throw EmptyInputError("price table: zero usable rows");
    }

    Eigen::MatrixXd closes = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(dates.size()),
                                                       static_cast<Eigen::Index>(entities.size()), kMissing);
    Eigen::Index r = 0;
    for (const auto& [date, row] : cells) {
        for (const auto& [entity, price] : row) {
            closes(r, static_cast<Eigen::Index>(col_of.at(entity))) = price;
        }
        ++r;
    }
    return PricePanel(std::move(dates), std::move(entities), std::move(closes), std::move(warnings));
}

PricePanel load_long(const Table& table, const LoadOptions& options) {
    std::ptrdiff_t date_col = -1, entity_col = -1, close_col = -1;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const auto name = lower(table.header[j]);
        if (name == "date") date_col = static_cast<std::ptrdiff_t>(j);
        if (name == "entity") entity_col = static_cast<std::ptrdiff_t>(j);
        if (name == "close") close_col = static_cast<std::ptrdiff_t>(j);
    }
    if (date_col < 0 || entity_col < 0 || close_col < 0) {
        throw ParseError("long schema requires columns date, entity, close");
    }
    const auto width = static_cast<std::size_t>(std::max({date_col, entity_col, close_col})) + 1;

    std::map<Date, std::map<Entity, double>> cells;
    std::set<Entity> entity_set;
    std::vector<std::string> warnings;
    for (const auto& [line_no, fields] : table.rows) {
        if (fields.size() < width) {
            throw ParseError("row " + std::to_string(line_no) + ": expected at least " + std::to_string(width) +
                             " fields, got " + std::to_string(fields.size()));
        }
        const Date date = parse_row_date(fields[static_cast<std::size_t>(date_col)], line_no);
        const auto& label = fields[static_cast<std::size_t>(entity_col)];
        if (label.empty()) throw ParseError("row " + std::to_string(line_no) + ": empty entity");
        const Entity entity = tag_entity(Entity::from_label(label), options.region_map);
        const double price = parse_price(fields[static_cast<std::size_t>(close_col)], line_no, entity.label(), warnings);
        auto& row = cells[date];
        if (!row.emplace(entity, price).second) {
            throw DuplicateKeyError("row " + std::to_string(line_no) + ": duplicate (date, entity) pair (" +
                                    date.to_string() + ", " + entity.label() + ")");
        }
        entity_set.insert(entity);
    }
    return assemble(cells, entity_set, std::move(warnings));
}

PricePanel load_wide(const Table& table, const LoadOptions& options) {
    if (table.header.size() < 2) throw ParseError("wide schema requires a date column and at least one entity column");
    std::vector<Entity> columns;
    std::set<Entity> entity_set;
    for (std::size_t j = 1; j < table.header.size(); ++j) {
        if (table.header[j].empty()) throw ParseError("wide schema: empty entity name in header column " + std::to_string(j + 1));
        auto entity = tag_entity(Entity::from_label(table.header[j]), options.region_map);
        if (!entity_set.insert(entity).second) throw DuplicateKeyError("wide schema: duplicate entity column " + entity.label());
        columns.push_back(std::move(entity));
    }

    std::map<Date, std::map<Entity, double>> cells;
    std::vector<std::string> warnings;
    for (const auto& [line_no, fields] : table.rows) {
        const Date date = parse_row_date(fields[0], line_no);
        if (fields.size() != table.header.size()) {
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        if (cells.contains(date)) {
            throw DuplicateKeyError("row " + std::to_string(line_no) + ": duplicate date " + date.to_string());
        }
        auto& row = cells[date];
        for (std::size_t j = 1; j < fields.size(); ++j) {
            row.emplace(columns[j - 1], parse_price(fields[j], line_no, columns[j - 1].label(), warnings));
        }
    }
    return assemble(cells, entity_set, std::move(warnings));
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    days_ = std::chrono::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
    text = trim(text);
    const auto bad = [&] { return ParseError("malformed date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    const auto number = [&](std::size_t pos, std::size_t len) {
        int value = 0;
        const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
        if (ec != std::errc{} || ptr != text.data() + pos + len) throw bad();
        return value;
    };
    const int y = number(0, 4);
    const int m = number(5, 2);
    const int d = number(8, 2);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw bad();
    return Date(std::chrono::sys_days{ymd});
}

std::string Date::to_string() const {
    const std::chrono::year_month_day ymd{days_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string Entity::label() const { return region.empty() ? id : id + "@" + region; }

Entity Entity::from_label(std::string_view label) {
    const auto at = label.rfind('@');
    if (at == std::string_view::npos) return Entity{std::string(label), {}};
    return Entity{std::string(label.substr(0, at)), std::string(label.substr(at + 1))};
}

PricePanel::PricePanel(std::vector<Date> dates, std::vector<Entity> entities, Eigen::MatrixXd closes,
                       std::vector<std::string> warnings)
    : dates_(std::move(dates)), entities_(std::move(entities)), closes_(std::move(closes)), warnings_(std::move(warnings)) {
    if (static_cast<std::size_t>(closes_.rows()) != dates_.size() ||
        static_cast<std::size_t>(closes_.cols()) != entities_.size()) {
        throw std::invalid_argument("PricePanel: closes shape does not match dates x entities");
    }
    for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (!(dates_[i - 1] < dates_[i])) throw std::invalid_argument("PricePanel: dates must be strictly increasing");
    }
    for (Eigen::Index j = 0; j < closes_.cols(); ++j) {
        for (Eigen::Index i = 0; i < closes_.rows(); ++i) {
            const double c = closes_(i, j);
            if (!std::isnan(c) && !(c > 0.0 && std::isfinite(c))) {
                throw std::invalid_argument("PricePanel: stored prices must be positive and finite");
            }
        }
    }
}

bool PricePanel::missing(std::size_t row, std::size_t col) const {
    return std::isnan(closes_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)));
}

ReturnPanel::ReturnPanel(std::vector<Date> dates, std::vector<Entity> entities, Eigen::MatrixXd returns,
                         MissingMask missing)
    : dates_(std::move(dates)), entities_(std::move(entities)), returns_(std::move(returns)), missing_(std::move(missing)) {
    if (static_cast<std::size_t>(returns_.rows()) != dates_.size() ||
        static_cast<std::size_t>(returns_.cols()) != entities_.size() || missing_.rows() != returns_.rows() ||
        missing_.cols() != returns_.cols()) {
        throw std::invalid_argument("ReturnPanel: shape mismatch");
    }
    for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (!(dates_[i - 1] < dates_[i])) throw std::invalid_argument("ReturnPanel: dates must be strictly increasing");
    }
    if (!returns_.allFinite()) throw DataError("ReturnPanel: non-finite return");
}

double ReturnPanel::imputation_fraction(std::size_t first, std::size_t count) const {
    if (count == 0 || missing_.cols() == 0) return 0.0;
    const auto block = missing_.block(static_cast<Eigen::Index>(first), 0, static_cast<Eigen::Index>(count), missing_.cols());
    return static_cast<double>(block.count()) / static_cast<double>(block.size());
}

ReturnPanel ReturnPanel::reorder(const std::vector<std::size_t>& order) const {
    if (order.size() != entities_.size()) throw std::invalid_argument("reorder: order length mismatch");
    std::vector<Entity> entities;
    Eigen::MatrixXd returns(returns_.rows(), returns_.cols());
    MissingMask missing(missing_.rows(), missing_.cols());
    std::vector<bool> seen(order.size(), false);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto src = order[k];
        if (src >= order.size() || seen[src]) throw std::invalid_argument("reorder: not a permutation");
        seen[src] = true;
        entities.push_back(entities_[src]);
        returns.col(static_cast<Eigen::Index>(k)) = returns_.col(static_cast<Eigen::Index>(src));
        missing.col(static_cast<Eigen::Index>(k)) = missing_.col(static_cast<Eigen::Index>(src));
    }
    return ReturnPanel(dates_, std::move(entities), std::move(returns), std::move(missing));
}

Schema parse_schema(std::string_view text) {
    if (text == "long") return Schema::long_format;
    if (text == "wide") return Schema::wide;
    throw std::invalid_argument("unknown schema '" + std::string(text) + "' (expected long|wide)");
}

MissingPolicy parse_missing_policy(std::string_view text) {
    if (text == "zero" || text == "zero_impute") return MissingPolicy::zero_impute;
    if (text == "drop") return MissingPolicy::drop;
    throw std::invalid_argument("unknown missing policy '" + std::string(text) + "' (expected zero|drop)");
}

CalendarPolicy parse_calendar_policy(std::string_view text) {
    if (text == "intersect") return CalendarPolicy::intersect;
    if (text == "union_zero_fill") return CalendarPolicy::union_zero_fill;
    throw std::invalid_argument("unknown calendar policy '" + std::string(text) + "' (expected intersect|union_zero_fill)");
}

std::string_view to_string(Schema schema) { return schema == Schema::wide ? "wide" : "long"; }
std::string_view to_string(MissingPolicy policy) { return policy == MissingPolicy::drop ? "drop" : "zero"; }
std::string_view to_string(CalendarPolicy policy) {
    return policy == CalendarPolicy::intersect ? "intersect" : "union_zero_fill";
}

PricePanel load_price_panel(std::istream& in, const LoadOptions& options) {
    const auto table = read_table(in, options.delimiter);
    return options.schema == Schema::wide ? load_wide(table, options) : load_long(table, options);
}

PricePanel load_price_panel_file(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
        return load_price_panel(in, options);
    } catch (const Error& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::map<std::string, std::string> load_region_map(std::istream& in, char delimiter) {
    const auto table = read_table(in, delimiter);
    std::map<std::string, std::string> out;
    for (const auto& [line_no, fields] : table.rows) {
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw ParseError("row " + std::to_string(line_no) + ": expected entity,region");
        }
        if (!out.emplace(fields[0], fields[1]).second) {
            throw DuplicateKeyError("row " + std::to_string(line_no) + ": duplicate entity " + fields[0]);
        }
    }
    return out;
}

std::map<std::string, PricePanel> split_by_region(const PricePanel& panel) {
    std::map<std::string, std::vector<std::size_t>> columns;
    for (std::size_t j = 0; j < panel.n_entities(); ++j) columns[panel.entities()[j].region].push_back(j);

    std::map<std::string, PricePanel> out;
    for (const auto& [region, cols] : columns) {
        std::vector<Date> dates;
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < panel.n_dates(); ++i) {
            const bool any = std::any_of(cols.begin(), cols.end(), [&](std::size_t j) { return !panel.missing(i, j); });
            if (any) {
                dates.push_back(panel.dates()[i]);
                rows.push_back(static_cast<Eigen::Index>(i));
            }
        }
        if (dates.empty()) throw EmptyInputError("region '" + region + "' has zero usable rows");
        std::vector<Entity> entities;
        Eigen::MatrixXd closes(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            entities.push_back(panel.entities()[cols[k]]);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                closes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                    panel.closes()(rows[r], static_cast<Eigen::Index>(cols[k]));
            }
        }
        out.emplace(region, PricePanel(std::move(dates), std::move(entities), std::move(closes), panel.warnings()));
    }
    return out;
}

ReturnPanel compute_log_returns(const PricePanel& panel, MissingPolicy policy) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < panel.n_dates(); ++i) {
        if (policy == MissingPolicy::drop && panel.closes().row(static_cast<Eigen::Index>(i)).hasNaN()) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.size() < 2) {
        throw InsufficientDataError("log returns need at least 2 dates, got " + std::to_string(rows.size()));
    }

    const auto n = static_cast<Eigen::Index>(panel.n_entities());
    const auto t = static_cast<Eigen::Index>(rows.size()) - 1;
    Eigen::MatrixXd returns(t, n);
    MissingMask missing(t, n);
    std::vector<Date> dates;
    dates.reserve(static_cast<std::size_t>(t));
    for (Eigen::Index r = 0; r < t; ++r) {
        dates.push_back(panel.dates()[static_cast<std::size_t>(rows[static_cast<std::size_t>(r) + 1])]);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double prev = panel.closes()(rows[static_cast<std::size_t>(r)], j);
            const double curr = panel.closes()(rows[static_cast<std::size_t>(r) + 1], j);
            if (std::isnan(prev) || std::isnan(curr)) {
                returns(r, j) = 0.0;
                missing(r, j) = true;
            } else {
                returns(r, j) = std::log(curr) - std::log(prev);
                missing(r, j) = false;
            }
        }
    }
    return ReturnPanel(std::move(dates), panel.entities(), std::move(returns), std::move(missing));
}

ReturnPanel align_calendar(const ReturnPanel& panel, CalendarPolicy policy) {
    if (panel.n_dates() == 0) throw InsufficientDataError("align_calendar: empty panel");
    if (policy == CalendarPolicy::union_zero_fill) {
        // Holes are already zero-filled and flagged by construction.
        return panel;
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < panel.missing().rows(); ++i) {
        if (!panel.missing().row(i).any()) keep.push_back(i);
    }
    if (keep.size() < 2) {
        throw InsufficientDataError("align_calendar: intersect leaves " + std::to_string(keep.size()) +
                                    " common dates (insufficient overlap)");
    }
    std::vector<Date> dates;
    Eigen::MatrixXd returns(static_cast<Eigen::Index>(keep.size()), panel.returns().cols());
    MissingMask missing = MissingMask::Constant(returns.rows(), returns.cols(), false);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        dates.push_back(panel.dates()[static_cast<std::size_t>(keep[r])]);
        returns.row(static_cast<Eigen::Index>(r)) = panel.returns().row(keep[r]);
    }
    return ReturnPanel(std::move(dates), panel.entities(), std::move(returns), std::move(missing));
}

void write_price_panel_wide(std::ostream& out, const PricePanel& panel, char delimiter) {
    out << "date";
    for (const auto& e : panel.entities()) out << delimiter << e.label();
    out << '\n';
    char buf[40];
    for (std::size_t r = 0; r < panel.n_dates(); ++r) {
        out << panel.dates()[r].to_string();
        for (std::size_t c = 0; c < panel.n_entities(); ++c) {
            out << delimiter;
            if (panel.missing(r, c)) continue;
            std::snprintf(buf, sizeof buf, "%.17g",
                          panel.closes()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace spillover
