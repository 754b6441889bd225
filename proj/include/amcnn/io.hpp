#pragma once

// File formats:
//   DMAP   text line "DMAP v1 <H> <W> <scale>\n", then H*W little-endian f64, row-major
//   PMAP   text line "PMAP v1 <H> <W>\n", then H*W little-endian f64, row-major
//   PGM/PPM binary (P5/P6), maxval up to 65535
//   annotations and ROI polygons: one "x,y" pair per line

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "amcnn/density.hpp"

namespace amcnn {

// Planar image, channel-major [C,H,W], values in [0,1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

void write_dmap(std::ostream& out, const DensityMap& map);
void write_dmap(const std::filesystem::path& path, const DensityMap& map);
DensityMap read_dmap(std::istream& in);
DensityMap read_dmap(const std::filesystem::path& path);

void write_pmap(const std::filesystem::path& path, const Grid& perspective);
Grid read_pmap(const std::filesystem::path& path);

// P5 (1 channel) or P6 (3 channels). Values are rescaled by maxval.
Image read_pnm(const std::filesystem::path& path);
Image read_pnm(std::istream& in);
// Writes 8-bit P5/P6, clamping values to [0,1].
void write_pnm(const std::filesystem::path& path, const Image& image);

// Points are "x,y" per line; blank lines and lines starting with '#' are
// skipped. Malformed lines throw DataError naming the file and line number.
std::vector<Point> read_points_csv(const std::filesystem::path& path);
std::vector<Point> read_points_csv(std::istream& in, const std::string& source);
void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points);

}  // namespace amcnn
