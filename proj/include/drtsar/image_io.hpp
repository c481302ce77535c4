#pragma once

#include <filesystem>
#include <string>

#include "drtsar/imaging.hpp"

namespace drtsar {

/// Raw raster: ASCII header `SARF1 <rows> <cols> <R_u> <R_r> <range_origin>\n`
/// followed by rows*cols little-endian float32 values, row-major.
void write_raster(const std::filesystem::path& path, const SarImage& image);
SarImage read_raster(const std::filesystem::path& path);
std::string raster_bytes(const SarImage& image);
SarImage parse_raster(const std::string& bytes, const std::string& source_name = "<memory>");

/// 16-bit binary PGM (P5), scaled so the image maximum maps to 65535.
void write_pgm(const std::filesystem::path& path, const SarImage& image);

/// One CSV line per azimuth row.
void write_image_csv(const std::filesystem::path& path, const SarImage& image);

}  // namespace drtsar
