#pragma once

// CSV emission with exact round trip formatting. Reals are rendered with
// std::to_chars shortest round-trip form (so re-parsing yields the same
// double bit for bit), line endings are LF, quoting follows RFC 4180.
// Identical tables always produce identical bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace hdpo {

using CsvCell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<CsvCell>> rows;  // every row matches header size
};

// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);

std::string render_csv(const Table& t);

// Render and write; throws IoError on failure.
void emit_csv(const Table& t, const std::filesystem::path& path);

}  // namespace hdpo
