#include "cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace icse::cli {

namespace {

const std::set<std::string> kSections = {"fit", "mc-study", "limit-sim", "orthant", "eb"};

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

bool try_number(const std::string& text, double& out)
{
    const std::string t = trim(text);
    if (t.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && errno != ERANGE && std::isfinite(out);
}

}  // namespace

void Section::set(const std::string& key, std::string value, std::filesystem::path base)
{
    values_[key] = Setting{std::move(value), std::move(base)};
}

void Section::reject_unknown(const std::set<std::string>& allowed) const
{
    for (const auto& [key, setting] : values_) {
        if (!allowed.count(key)) throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
    }
}

const Setting& Section::get(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
    return it->second;
}

std::string Section::text(const std::string& key) const { return get(key).value; }

std::string Section::text_or(const std::string& key, const std::string& fallback) const
{
    return has(key) ? text(key) : fallback;
}

std::filesystem::path Section::path(const std::string& key) const
{
    const Setting& s = get(key);
    const std::filesystem::path p(s.value);
    return p.is_absolute() || s.base.empty() ? p : s.base / p;
}

double Section::number(const std::string& key) const { return parse_number(key, text(key)); }

double Section::number_or(const std::string& key, double fallback) const
{
    return has(key) ? number(key) : fallback;
}

std::uint64_t Section::count(const std::string& key) const { return parse_count(key, text(key)); }

std::uint64_t Section::count_or(const std::string& key, std::uint64_t fallback) const
{
    return has(key) ? count(key) : fallback;
}

bool Section::flag_or(const std::string& key, bool fallback) const
{
    if (!has(key)) return fallback;
    const std::string v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

Vector Section::vector(const std::string& key) const
{
    const auto list = parse_list(key, text(key));
    return Eigen::Map<const Vector>(list.data(), static_cast<Index>(list.size()));
}

Matrix Section::matrix(const std::string& key) const
{
    const std::string v = trim(text(key));
    const auto rows = split(v, ';');
    Matrix out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = parse_list(key, rows[i]);
        if (i == 0) out.resize(static_cast<Index>(rows.size()), static_cast<Index>(row.size()));
        if (static_cast<Index>(row.size()) != out.cols()) {
            throw ConfigError("key '" + key + "': matrix rows have different lengths");
        }
        for (std::size_t j = 0; j < row.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = row[j];
    }
    return out;
}

std::vector<Index> Section::indices(const std::string& key, Index upper) const
{
    std::vector<Index> out;
    for (const auto& part : split(text(key), ',')) {
        const auto dots = part.find("..");
        std::uint64_t lo = 0, hi = 0;
        if (dots == std::string::npos) {
            lo = hi = parse_count(key, part);
        } else {
            lo = parse_count(key, part.substr(0, dots));
            hi = parse_count(key, part.substr(dots + 2));
        }
        if (lo < 1 || hi < lo || hi > static_cast<std::uint64_t>(upper)) {
            throw ConfigError("key '" + key + "': index range '" + part + "' outside 1.." + std::to_string(upper));
        }
        for (std::uint64_t j = lo; j <= hi; ++j) out.push_back(static_cast<Index>(j - 1));
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
        throw ConfigError("key '" + key + "': duplicate index");
    }
    return out;
}

std::uint64_t Section::seed() const
{
    if (!has("seed")) throw ConfigError("[" + name_ + "] 'seed' is required for this command");
    return count("seed");
}

double parse_number(const std::string& key, const std::string& text)
{
    double v = 0.0;
    if (!try_number(text, v)) throw ConfigError("key '" + key + "' expects a finite number, got '" + text + "'");
    return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + text + "'");
    }
    errno = 0;
    const unsigned long long v = std::strtoull(t.c_str(), nullptr, 10);
    if (errno == ERANGE) throw ConfigError("key '" + key + "' is out of range");
    return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text)
{
    std::vector<double> out;
    for (const auto& part : split(trim(text), ',')) out.push_back(parse_number(key, part));
    if (out.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list");
    return out;
}

Section load_section(const std::filesystem::path& file, const std::string& section)
{
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file '" + file.string() + "'");
    Section out(section);
    std::set<std::string> seen;
    std::string current;
    std::string line;
    int lineno = 0;
    const std::filesystem::path base = file.parent_path();
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header");
            current = trim(t.substr(1, t.size() - 2));
            if (!kSections.count(current)) throw ConfigError(where + ": unknown section [" + current + "]");
            if (!seen.insert(current).second) throw ConfigError(where + ": section [" + current + "] repeated");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (current.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
        if (current != section) continue;
        if (out.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        out.set(key, value, base);
    }
    return out;
}

void apply_overrides(Section& section, const std::vector<std::string>& overrides)
{
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
        const std::string key = trim(o.substr(0, eq));
        if (key.empty()) throw ConfigError("override '" + o + "' has an empty key");
        section.set(key, trim(o.substr(eq + 1)), {});
    }
}

DataSet read_data_csv(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw DataError("cannot open data file '" + file.string() + "'");
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) header = split(trim(line), ',');
    }
    if (header.size() < 2) {
        throw DataError(file.string() + ":" + std::to_string(std::max(lineno, 1)) +
                        ": header needs a response column and at least one regressor");
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (fields.size() != header.size()) {
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        std::vector<double> row(fields.size());
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (!try_number(fields[j], row[j])) {
                throw DataError(where + ": field " + std::to_string(j + 1) + " ('" + fields[j] +
                                "') is not a finite number");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(file.string() + ": no data rows");
    DataSet out;
    out.names.assign(header.begin() + 1, header.end());
    const Index n = static_cast<Index>(rows.size());
    const Index m = static_cast<Index>(header.size()) - 1;
    out.response.resize(n);
    out.design.resize(n, m);
    for (Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        out.response(i) = r[0];
        for (Index j = 0; j < m; ++j) out.design(i, j) = r[static_cast<std::size_t>(j) + 1];
    }
    return out;
}

ConstraintTable read_constraints_csv(const std::filesystem::path& file, Index m)
{
    std::ifstream in(file);
    if (!in) throw DataError("cannot open constraint file '" + file.string() + "'");
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) header = split(trim(line), ',');
    }
    const std::size_t width = static_cast<std::size_t>(m) + 2;
    if (header.size() != width || header[0] != "intercept" || header[1] != "equality") {
        throw DataError(file.string() + ":" + std::to_string(std::max(lineno, 1)) +
                        ": header must be intercept,equality followed by " + std::to_string(m) +
                        " coefficient columns");
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (fields.size() != width) {
            throw DataError(where + ": expected " + std::to_string(width) + " fields, found " +
                            std::to_string(fields.size()));
        }
        std::vector<double> row(width);
        for (std::size_t j = 0; j < width; ++j) {
            if (!try_number(fields[j], row[j])) {
                throw DataError(where + ": field " + std::to_string(j + 1) + " is not a finite number");
            }
        }
        if (row[1] != 0.0 && row[1] != 1.0) throw DataError(where + ": equality must be 0 or 1");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(file.string() + ": no constraint rows");
    ConstraintTable out;
    const Index p = static_cast<Index>(rows.size());
    out.jacobian.resize(p, m);
    out.intercept.resize(p);
    for (Index i = 0; i < p; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        out.intercept(i) = r[0];
        out.equality_mask.push_back(r[1] == 1.0);
        for (Index j = 0; j < m; ++j) out.jacobian(i, j) = r[static_cast<std::size_t>(j) + 2];
    }
    return out;
}

}  // namespace icse::cli
