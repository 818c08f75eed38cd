#pragma once

#include "icse/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace icse::cli {

/// Bad or missing configuration; exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed input data; exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Setting {
    std::string value;
    std::filesystem::path base;  // directory relative paths resolve against
};

/// Key-value settings of one subcommand section.
class Section {
public:
    explicit Section(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }
    void set(const std::string& key, std::string value, std::filesystem::path base);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    /// Throws ConfigError naming the first key outside `allowed`.
    void reject_unknown(const std::set<std::string>& allowed) const;

    std::string text(const std::string& key) const;
    std::string text_or(const std::string& key, const std::string& fallback) const;
    std::filesystem::path path(const std::string& key) const;
    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    std::uint64_t count(const std::string& key) const;
    std::uint64_t count_or(const std::string& key, std::uint64_t fallback) const;
    bool flag_or(const std::string& key, bool fallback) const;
    Vector vector(const std::string& key) const;
    Matrix matrix(const std::string& key) const;
    /// 1-based index list such as "1..5" or "1,3,7..9", returned 0-based.
    std::vector<Index> indices(const std::string& key, Index upper) const;
    /// Mandatory for stochastic commands.
    std::uint64_t seed() const;

private:
    const Setting& get(const std::string& key) const;

    std::string name_;
    std::map<std::string, Setting> values_;
};

/// Reads the `[section]` block of a flat key = value file. Lines starting with
/// '#' or ';' are comments. Keys outside a section, unknown section names and
/// duplicate keys are errors; other sections are skipped after a syntax check.
Section load_section(const std::filesystem::path& file, const std::string& section);

/// Applies "key=value" overrides on top of the file contents.
void apply_overrides(Section& section, const std::vector<std::string>& overrides);

double parse_number(const std::string& key, const std::string& text);
std::uint64_t parse_count(const std::string& key, const std::string& text);
std::vector<double> parse_list(const std::string& key, const std::string& text);

struct DataSet {
    std::vector<std::string> names;  // regressor column names
    Vector response;
    Matrix design;
};

/// CSV with a header row; first column is the response, the rest regressors.
/// Throws DataError with the offending line number.
DataSet read_data_csv(const std::filesystem::path& file);

struct ConstraintTable {
    Matrix jacobian;
    Vector intercept;
    std::vector<bool> equality_mask;
};

/// CSV with header "intercept,equality,<one column per regressor>": each row
/// is intercept + R theta with equality 1 for "= 0" and 0 for ">= 0".
ConstraintTable read_constraints_csv(const std::filesystem::path& file, Index m);

}  // namespace icse::cli
