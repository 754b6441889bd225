#include "amcnn/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "amcnn/error.hpp"

namespace amcnn {

namespace {

constexpr double kTruncationRadius = 4.0;
constexpr double kPerspectiveFactor = 0.2;

std::string point_string(const Point& p) {
  std::ostringstream out;
  out << '(' << p.x << ", " << p.y << ')';
  return out.str();
}

}  // namespace

void HeadAnnotations::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height))) {
      throw DataError("head " + std::to_string(i) + " at " + point_string(p) +
                      " lies outside the " + std::to_string(height) + "x" +
                      std::to_string(width) + " image");
    }
  }
}

double Grid::sum() const {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

std::size_t BinaryMask::count_inside() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

const BinaryMask& RoiMask::at_scale(int scale) const {
  if (scale == 1) return full;
  if (scale == 4) return quarter;
  throw ShapeError("ROI masks exist at scale 1 and 4, not " + std::to_string(scale));
}

void SigmaPolicy::validate() const {
  if (!(beta > 0.0)) throw DataError("sigma policy: beta must be positive");
  if (!(fixed_sigma > 0.0)) throw DataError("sigma policy: fixed sigma must be positive");
  if (perspective) {
    for (double v : perspective->values) {
      if (!(v > 0.0)) throw DataError("sigma policy: perspective map must be strictly positive");
    }
  }
}

SigmaPolicy parse_sigma_policy(const std::string& text) {
  SigmaPolicy policy;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto number = [&](double fallback) {
    if (arg.empty()) return fallback;
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size()) throw DataError("sigma policy '" + text + "': bad number '" + arg + "'");
    return value;
  };
  if (kind == "knn") {
    policy.kind = SigmaKind::Knn;
    policy.beta = number(policy.beta);
  } else if (kind == "persp" || kind == "perspective") {
    policy.kind = SigmaKind::Perspective;
    if (!arg.empty()) throw DataError("sigma policy '" + text + "': persp takes no argument");
  } else if (kind == "fixed") {
    policy.kind = SigmaKind::Fixed;
    policy.fixed_sigma = number(policy.fixed_sigma);
  } else {
    throw DataError("unknown sigma policy '" + text + "' (expected knn:<beta>, persp, fixed:<sigma>)");
  }
  policy.validate();
  return policy;
}

std::string to_string(const SigmaPolicy& policy) {
  std::ostringstream out;
  switch (policy.kind) {
    case SigmaKind::Knn:
      out << "knn:" << policy.beta;
      break;
    case SigmaKind::Perspective:
      out << "persp";
      break;
    case SigmaKind::Fixed:
      out << "fixed:" << policy.fixed_sigma;
      break;
  }
  return out.str();
}

std::vector<double> knn_sigmas(const HeadAnnotations& ann, double beta) {
  const auto& pts = ann.points;
  if (pts.size() < 3) {
    throw DataError("knn sigma needs at least 3 heads, got " + std::to_string(pts.size()));
  }
  std::vector<double> sigmas(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    double second = nearest;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      if (d < nearest) {
        second = nearest;
        nearest = d;
      } else if (d < second) {
        second = d;
      }
    }
    sigmas[i] = beta * 0.5 * (nearest + second);
  }
  return sigmas;
}

std::vector<double> perspective_sigmas(const HeadAnnotations& ann, const Grid& perspective) {
  std::vector<double> sigmas;
  sigmas.reserve(ann.points.size());
  for (std::size_t i = 0; i < ann.points.size(); ++i) {
    const Point& p = ann.points[i];
    const double col = std::round(p.x);
    const double row = std::round(p.y);
    if (!(col >= 0.0 && row >= 0.0 && col < static_cast<double>(perspective.width) &&
          row < static_cast<double>(perspective.height))) {
      throw DataError("head " + std::to_string(i) + " at " + point_string(p) +
                      " lies outside the perspective map");
    }
    sigmas.push_back(kPerspectiveFactor *
                     perspective.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col)));
  }
  return sigmas;
}

SigmaResult compute_sigmas(const HeadAnnotations& ann, const SigmaPolicy& policy) {
  SigmaResult result;
  const std::size_t n = ann.points.size();
  switch (policy.kind) {
    case SigmaKind::Fixed:
      result.sigmas.assign(n, policy.fixed_sigma);
      break;
    case SigmaKind::Perspective:
      if (!policy.perspective) throw DataError("perspective sigma policy without a perspective map");
      result.sigmas = perspective_sigmas(ann, *policy.perspective);
      break;
    case SigmaKind::Knn:
      if (n < 3) {
        result.sigmas.assign(n, policy.fixed_sigma);
        result.fallback_count = n;
        if (n > 0) {
          result.warning = "knn sigma needs 3 heads, image has " + std::to_string(n) +
                           "; using fixed sigma " + std::to_string(policy.fixed_sigma);
        }
        break;
      }
      result.sigmas = knn_sigmas(ann, policy.beta);
      for (double& s : result.sigmas) {
        if (!(s > 0.0)) {
          s = policy.fixed_sigma;
          ++result.fallback_count;
        }
      }
      if (result.fallback_count > 0) {
        result.warning = std::to_string(result.fallback_count) +
                         " head(s) coincide with both nearest neighbours; using fixed sigma " +
                         std::to_string(policy.fixed_sigma);
      }
      break;
  }
  return result;
}

DensityMap splat_density(const HeadAnnotations& ann, const std::vector<double>& sigmas,
                         std::size_t height, std::size_t width) {
  if (sigmas.size() != ann.points.size()) {
    throw DataError("splat_density: " + std::to_string(sigmas.size()) + " sigmas for " +
                    std::to_string(ann.points.size()) + " heads");
  }
  DensityMap map{Grid(height, width), 1};
  std::vector<double> weights;
  std::vector<double> sorted;
  for (std::size_t i = 0; i < ann.points.size(); ++i) {
    const Point& p = ann.points[i];
    const double sigma = sigmas[i];
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw DataError("splat_density: sigma " + std::to_string(sigma) + " for head " +
                      std::to_string(i) + " must be positive");
    }
    const double radius = kTruncationRadius * sigma;
    const double radius_sq = radius * radius;
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const auto clamp_index = [](double v, std::size_t extent) {
      return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(extent)));
    };
    // Half-open index ranges of cells that may lie within the radius.
    const std::size_t x0 = clamp_index(std::ceil(p.x - radius), width);
    const std::size_t x1 = clamp_index(std::floor(p.x + radius) + 1.0, width);
    const std::size_t y0 = clamp_index(std::ceil(p.y - radius), height);
    const std::size_t y1 = clamp_index(std::floor(p.y + radius) + 1.0, height);

    const std::size_t box_w = x1 > x0 ? x1 - x0 : 0;
    const std::size_t box_h = y1 > y0 ? y1 - y0 : 0;
    weights.assign(box_w * box_h, 0.0);
    for (std::size_t y = y0; y < y1; ++y) {
      const double dy = static_cast<double>(y) - p.y;
      for (std::size_t x = x0; x < x1; ++x) {
        const double dx = static_cast<double>(x) - p.x;
        const double d_sq = dx * dx + dy * dy;
        if (d_sq <= radius_sq) weights[(y - y0) * box_w + (x - x0)] = std::exp(-d_sq * inv_two_var);
      }
    }
    // Summing in sorted order makes the mass independent of cell traversal
    // order, so mirrored annotations give bitwise-mirrored maps.
    sorted = weights;
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double w : sorted) total += w;

    if (!(total > 0.0)) {
      // Kernel narrower than the pixel grid: put the unit mass on the nearest cell.
      const auto col = std::min(width - 1, static_cast<std::size_t>(std::round(p.x)));
      const auto row = std::min(height - 1, static_cast<std::size_t>(std::round(p.y)));
      map.grid.at(row, col) += 1.0;
      continue;
    }
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double w = weights[(y - y0) * box_w + (x - x0)];
        if (w != 0.0) map.grid.at(y, x) += w / total;
      }
    }
  }
  return map;
}

DensityMap sum_pool_downsample(const DensityMap& map, int factor) {
  if (factor <= 0) throw ShapeError("sum_pool_downsample: factor must be positive");
  const auto f = static_cast<std::size_t>(factor);
  const Grid& src = map.grid;
  if (src.height % f != 0 || src.width % f != 0) {
    throw ShapeError("sum_pool_downsample: " + std::to_string(src.height) + "x" +
                     std::to_string(src.width) + " map is not divisible by " +
                     std::to_string(factor));
  }
  DensityMap out{Grid(src.height / f, src.width / f), map.scale * factor};
  for (std::size_t y = 0; y < src.height; ++y) {
    for (std::size_t x = 0; x < src.width; ++x) out.grid.at(y / f, x / f) += src.at(y, x);
  }
  return out;
}

BinaryMask rasterize_polygon(const std::vector<Point>& polygon, std::size_t height,
                             std::size_t width) {
  BinaryMask mask{height, width, std::vector<std::uint8_t>(height * width, 0)};
  const std::size_t n = polygon.size();
  if (n < 3) return mask;
  for (std::size_t y = 0; y < height; ++y) {
    const double py = static_cast<double>(y);
    for (std::size_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x);
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = polygon[i];
        const Point& b = polygon[j];
        if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) {
          inside = !inside;
        }
      }
      mask.cells[y * width + x] = inside ? 1 : 0;
    }
  }
  return mask;
}

BinaryMask block_majority(const BinaryMask& fine, int factor) {
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t out_h = fine.height / f;
  const std::size_t out_w = fine.width / f;
  const std::size_t threshold = (f * f + 1) / 2;
  BinaryMask out{out_h, out_w, std::vector<std::uint8_t>(out_h * out_w, 0)};
  for (std::size_t by = 0; by < out_h; ++by) {
    for (std::size_t bx = 0; bx < out_w; ++bx) {
      std::size_t inside = 0;
      for (std::size_t y = by * f; y < (by + 1) * f; ++y) {
        for (std::size_t x = bx * f; x < (bx + 1) * f; ++x) inside += fine.inside(y, x) ? 1 : 0;
      }
      out.cells[by * out_w + bx] = inside >= threshold ? 1 : 0;
    }
  }
  return out;
}

RoiMask make_roi(std::vector<Point> polygon, std::size_t height, std::size_t width) {
  RoiMask roi;
  roi.full = rasterize_polygon(polygon, height, width);
  roi.quarter = block_majority(roi.full, 4);
  roi.polygon = std::move(polygon);
  return roi;
}

DensityMap apply_roi_mask(const DensityMap& map, const RoiMask& roi) {
  const BinaryMask& mask = roi.at_scale(map.scale);
  if (mask.height != map.grid.height || mask.width != map.grid.width) {
    throw ShapeError("apply_roi_mask: " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width) + " mask for a " + std::to_string(map.grid.height) +
                     "x" + std::to_string(map.grid.width) + " map");
  }
  DensityMap out = map;
  for (std::size_t i = 0; i < out.grid.values.size(); ++i) {
    if (mask.cells[i] == 0) out.grid.values[i] = 0.0;
  }
  return out;
}

Grid hflip(const Grid& grid) {
  Grid out(grid.height, grid.width);
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) out.at(y, grid.width - 1 - x) = grid.at(y, x);
  }
  return out;
}

BinaryMask hflip(const BinaryMask& mask) {
  BinaryMask out = mask;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      out.cells[y * mask.width + (mask.width - 1 - x)] = mask.cells[y * mask.width + x];
    }
  }
  return out;
}

Grid crop(const Grid& grid, std::size_t top, std::size_t left, std::size_t height,
          std::size_t width) {
  if (top + height > grid.height || left + width > grid.width) {
    throw ShapeError("crop window exceeds the grid");
  }
  Grid out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(grid.values.begin() + static_cast<std::ptrdiff_t>((top + y) * grid.width + left),
                width, out.values.begin() + static_cast<std::ptrdiff_t>(y * width));
  }
  return out;
}

BinaryMask crop(const BinaryMask& mask, std::size_t top, std::size_t left, std::size_t height,
                std::size_t width) {
  if (top + height > mask.height || left + width > mask.width) {
    throw ShapeError("crop window exceeds the mask");
  }
  BinaryMask out{height, width, std::vector<std::uint8_t>(height * width)};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      out.cells[y * width + x] = mask.cells[(top + y) * mask.width + left + x];
    }
  }
  return out;
}

}  // namespace amcnn
