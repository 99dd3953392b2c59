#pragma once

// Text and binary file helpers: CSV cells, raw float32 dumps, PGM images,
// SHA-256 checksums.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imumoco {

/// Error in a text input, located by 1-based row and column (0 = unknown).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t row, std::size_t column);
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

private:
  std::size_t row_;
  std::size_t column_;
};

namespace io {

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Parses a full cell as a double; returns false on any trailing garbage.
bool parse_double(std::string_view cell, double& out);

/// Shortest decimal representation that round-trips exactly.
std::string format_double(double v);

/// `key=value` lines; blank lines and lines starting with '#' are skipped.
/// Keys and values are trimmed. Throws ParseError on a line without '=' or a
/// repeated key.
std::map<std::string, std::string> parse_key_values(std::string_view text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Little-endian IEEE-754 float32 dump.
void write_raw_f32(const std::filesystem::path& path, std::span<const float> data);
void write_raw_f32(const std::filesystem::path& path, std::span<const double> data);
std::vector<float> read_raw_f32(const std::filesystem::path& path);

/// 16-bit binary PGM (P5, big-endian samples). Values are mapped linearly
/// from [lo, hi] to [0, 65535] and clamped.
void write_pgm16(const std::filesystem::path& path, std::span<const double> pixels,
                 std::size_t width, std::size_t height, double lo, double hi);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);
/// Version string of the hashing library.
std::string crypto_library_version();

}  // namespace io
}  // namespace imumoco
