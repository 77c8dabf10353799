#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace eanas {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// Parses a full string as a double; throws DataError on trailing junk.
double parse_double(std::string_view text, std::string_view what);

// Child seed for a named subsystem. All run randomness flows from one root.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Writes bytes verbatim (binary mode, so LF stays LF).
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace eanas
