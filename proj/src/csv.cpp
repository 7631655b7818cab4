#include "hdpo/csv.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "hdpo/errors.hpp"

namespace hdpo {

namespace {

std::string quote_if_needed(const std::string& s) {
    bool needs = s.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

std::string format_int(std::int64_t v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct CellRenderer {
    std::string operator()(std::int64_t v) const { return format_int(v); }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(const std::string& v) const { return quote_if_needed(v); }
};

}  // namespace

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc())
        throw std::invalid_argument("format_double: value did not render");
    return std::string(buf, res.ptr);
}

std::string render_csv(const Table& t) {
    if (t.header.empty()) throw std::invalid_argument("render_csv: empty header");
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (i) out += ',';
        out += quote_if_needed(t.header[i]);
    }
    out += '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size())
            throw std::invalid_argument("render_csv: row width does not match header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += std::visit(CellRenderer{}, row[i]);
        }
        out += '\n';
    }
    return out;
}

void emit_csv(const Table& t, const std::filesystem::path& path) {
    std::string body = render_csv(t);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("emit_csv: cannot open " + path.string());
    file.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!file) throw IoError("emit_csv: write failed for " + path.string());
}

}  // namespace hdpo
