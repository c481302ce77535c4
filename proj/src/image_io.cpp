#include "drtsar/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "drtsar/error.hpp"
#include "text_util.hpp"

namespace drtsar {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put_le32(std::string& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string raster_bytes(const SarImage& image) {
  char header[256];
  std::snprintf(header, sizeof header, "SARF1 %d %d %.17g %.17g %.17g\n", image.rows, image.cols,
                image.azimuth_res, image.range_res, image.range_origin);
  std::string out = header;
  out.reserve(out.size() + image.data.size() * 4);
  for (const double v : image.data) put_le32(out, static_cast<float>(v));
  return out;
}

void write_raster(const std::filesystem::path& path, const SarImage& image) {
  write_file(path, raster_bytes(image));
}

SarImage parse_raster(const std::string& bytes, const std::string& source_name) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw FormatError(source_name + ": missing raster header");
  const auto fields = detail::split_ws(std::string_view(bytes).substr(0, eol));
  if (fields.empty() || fields[0] != "SARF1") {
    throw FormatError(source_name + ": bad raster magic (expected SARF1)");
  }
  if (fields.size() != 6) throw FormatError(source_name + ": raster header needs 6 fields");
  std::optional<double> values[5];
  for (int i = 0; i < 5; ++i) values[i] = detail::parse_double(fields[i + 1]);
  for (const auto& v : values) {
    if (!v) throw FormatError(source_name + ": malformed raster header");
  }
  const double rows = *values[0];
  const double cols = *values[1];
  if (rows < 0 || cols < 0 || rows != std::floor(rows) || cols != std::floor(cols)) {
    throw FormatError(source_name + ": bad raster dimensions");
  }
  SarImage image(static_cast<int>(rows), static_cast<int>(cols));
  image.azimuth_res = *values[2];
  image.range_res = *values[3];
  image.range_origin = *values[4];

  const std::size_t expected = image.data.size() * 4;
  if (bytes.size() - eol - 1 != expected) {
    throw FormatError(source_name + ": raster payload has " + std::to_string(bytes.size() - eol - 1) +
                      " bytes, expected " + std::to_string(expected));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + eol + 1);
  for (std::size_t i = 0; i < image.data.size(); ++i) image.data[i] = get_le32(p + 4 * i);
  return image;
}

SarImage read_raster(const std::filesystem::path& path) {
  return parse_raster(read_file(path), path.string());
}

void write_pgm(const std::filesystem::path& path, const SarImage& image) {
  std::string out = "P5\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) + "\n65535\n";
  const double peak = image.max_value();
  for (const double v : image.data) {
    const double scaled = peak > 0.0 ? std::round(65535.0 * v / peak) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::clamp(scaled, 0.0, 65535.0));
    out.push_back(static_cast<char>(q >> 8));  // PGM samples are big-endian
    out.push_back(static_cast<char>(q & 0xFF));
  }
  write_file(path, out);
}

void write_image_csv(const std::filesystem::path& path, const SarImage& image) {
  std::string out;
  char buf[32];
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) {
      std::snprintf(buf, sizeof buf, c == 0 ? "%.17g" : ",%.17g", image.at(r, c));
      out += buf;
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace drtsar
