#pragma once

// Ground-truth density maps from head annotations.
//
// Coordinates are in pixels with pixel centres on integers: column j spans
// [j - 0.5, j + 0.5). A head at (x, y) requires 0 <= x < W and 0 <= y < H.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace amcnn {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct HeadAnnotations {
  std::vector<Point> points;
  std::size_t height = 0;
  std::size_t width = 0;

  // Throws DataError naming the first out-of-bounds point.
  void validate() const;
};

// Row-major 2-D grid of doubles.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, double fill = 0.0)
      : height(height), width(width), values(height * width, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double sum() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Persons per pixel at `scale` (1 = source resolution, 4 = network output).
struct DensityMap {
  Grid grid;
  int scale = 1;

  double count() const { return grid.sum(); }
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;

  bool inside(std::size_t y, std::size_t x) const { return cells[y * width + x] != 0; }
  std::size_t count_inside() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct RoiMask {
  std::vector<Point> polygon;
  BinaryMask full;     // scale 1
  BinaryMask quarter;  // scale 4

  const BinaryMask& at_scale(int scale) const;
};

enum class SigmaKind { Knn, Perspective, Fixed };

struct SigmaPolicy {
  SigmaKind kind = SigmaKind::Fixed;
  double beta = 0.3;
  double fixed_sigma = 4.0;
  std::optional<Grid> perspective;

  void validate() const;
};

// Parses "knn:<beta>", "knn", "persp", "fixed:<sigma>" or "fixed".
SigmaPolicy parse_sigma_policy(const std::string& text);
std::string to_string(const SigmaPolicy& policy);

// sigma_i = beta * mean distance to the two nearest other heads (duplicates
// count with distance zero). Throws DataError when fewer than 3 heads.
std::vector<double> knn_sigmas(const HeadAnnotations& ann, double beta);

// sigma_i = 0.2 * P at the nearest pixel of each head. Throws DataError for a
// head outside the map.
std::vector<double> perspective_sigmas(const HeadAnnotations& ann, const Grid& perspective);

struct SigmaResult {
  std::vector<double> sigmas;
  // Number of heads that used fixed_sigma instead of the policy's rule.
  std::size_t fallback_count = 0;
  std::string warning;
};

// Applies a policy. Under knn, fewer than 3 heads (or a head whose two nearest
// neighbours coincide with it) falls back to fixed_sigma and says so.
SigmaResult compute_sigmas(const HeadAnnotations& ann, const SigmaPolicy& policy);

// Sum of per-head Gaussians truncated at radius 4 sigma, each renormalised to
// unit in-bounds mass. Throws DataError for sigma <= 0 or a length mismatch.
DensityMap splat_density(const HeadAnnotations& ann, const std::vector<double>& sigmas,
                         std::size_t height, std::size_t width);

// Block sums over factor x factor cells. Throws ShapeError unless both dims
// are divisible by factor.
DensityMap sum_pool_downsample(const DensityMap& map, int factor = 4);

// Cells are inside when their centre is inside the polygon (even-odd rule).
BinaryMask rasterize_polygon(const std::vector<Point>& polygon, std::size_t height,
                             std::size_t width);
// Coarse cell is inside when at least half of its factor x factor block is.
BinaryMask block_majority(const BinaryMask& fine, int factor = 4);
RoiMask make_roi(std::vector<Point> polygon, std::size_t height, std::size_t width);

// Zeroes cells outside the ROI. Throws ShapeError on a scale/size mismatch.
DensityMap apply_roi_mask(const DensityMap& map, const RoiMask& roi);

Grid hflip(const Grid& grid);
BinaryMask hflip(const BinaryMask& mask);
Grid crop(const Grid& grid, std::size_t top, std::size_t left, std::size_t height,
          std::size_t width);
BinaryMask crop(const BinaryMask& mask, std::size_t top, std::size_t left, std::size_t height,
                std::size_t width);

}  // namespace amcnn
