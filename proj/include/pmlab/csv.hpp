#pragma once

#include <charconv>
#include <concepts>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pmlab/errors.hpp"

namespace pmlab {

/// Shortest round-trip decimal form, '.' separator regardless of locale.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw NumericalFailure("number formatting failed");
    return std::string(buf, end);
}

template <std::integral I>
std::string format_number(I v)
{
    return std::to_string(v);
}

/// Minimal comma-separated table builder.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    template <class... Ts>
    void row(Ts const&... values)
    {
        if (sizeof...(Ts) != header_.size()) throw std::logic_error("csv row width mismatch");
        std::string line;
        bool first = true;
        ((line += (first ? "" : ","), line += cell(values), first = false), ...);
        rows_.push_back(std::move(line));
    }

    void row_values(std::span<double const> values)
    {
        if (values.size() != header_.size()) throw std::logic_error("csv row width mismatch");
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) line += ',';
            line += format_number(values[i]);
        }
        rows_.push_back(std::move(line));
    }

    std::size_t size() const noexcept { return rows_.size(); }

    std::string str() const
    {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) out += ',';
            out += header_[i];
        }
        out += '\n';
        for (auto const& r : rows_) {
            out += r;
            out += '\n';
        }
        return out;
    }

    void write(std::filesystem::path const& path) const { write_text(path, str()); }

    static void write_text(std::filesystem::path const& path, std::string const& text)
    {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        out << text;
    }

private:
    static std::string cell(double v) { return format_number(v); }
    static std::string cell(float v) { return format_number(static_cast<double>(v)); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(long long v) { return std::to_string(v); }
    static std::string cell(unsigned v) { return std::to_string(v); }
    static std::string cell(unsigned long v) { return std::to_string(v); }
    static std::string cell(unsigned long long v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(std::string const& v) { return v; }
    static std::string cell(std::string_view v) { return std::string(v); }
    static std::string cell(char const* v) { return v; }

    std::vector<std::string> header_;
    std::vector<std::string> rows_;
};

/// Whitespace separated "x y" pairs for external plotting tools.
inline std::string plot_data(std::span<double const> x, std::span<double const> y)
{
    std::string out;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        out += format_number(x[i]);
        out += ' ';
        out += format_number(y[i]);
        out += '\n';
    }
    return out;
}

} // namespace pmlab
