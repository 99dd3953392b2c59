#include "imumoco/io.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace imumoco {

ParseError::ParseError(const std::string& what, std::size_t row, std::size_t column)
    : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                         std::to_string(column) + ")"),
      row_(row),
      column_(column) {}

namespace io {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return {buf.data(), ptr};
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++row;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", row, 0);
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", row, 0);
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ParseError("duplicate key '" + key + "'", row, 0);
    }
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

namespace {

void put_f32(std::vector<char>& buf, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_raw_f32(const std::filesystem::path& path, std::span<const float> data) {
  std::vector<char> buf;
  buf.reserve(data.size() * 4);
  for (float f : data) put_f32(buf, f);
  write_bytes(path, buf);
}

void write_raw_f32(const std::filesystem::path& path, std::span<const double> data) {
  std::vector<char> buf;
  buf.reserve(data.size() * 4);
  for (double d : data) put_f32(buf, static_cast<float>(d));
  write_bytes(path, buf);
}

std::vector<float> read_raw_f32(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % 4 != 0) throw std::runtime_error("raw file size not a multiple of 4: " + path.string());
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_pgm16(const std::filesystem::path& path, std::span<const double> pixels,
                 std::size_t width, std::size_t height, double lo, double hi) {
  if (pixels.size() != width * height) throw std::invalid_argument("write_pgm16: size mismatch");
  const double range = hi > lo ? hi - lo : 1.0;
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  std::vector<char> buf(header.begin(), header.end());
  buf.reserve(header.size() + 2 * pixels.size());
  for (double p : pixels) {
    const double s = std::clamp((p - lo) / range, 0.0, 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    buf.push_back(static_cast<char>(v >> 8));
    buf.push_back(static_cast<char>(v & 0xff));
  }
  write_bytes(path, buf);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string crypto_library_version() { return OpenSSL_version(OPENSSL_VERSION); }

}  // namespace io
}  // namespace imumoco
