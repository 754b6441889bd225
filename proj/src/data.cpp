#include "amcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "amcnn/error.hpp"

namespace amcnn {

Image to_luminance(const Image& rgb) {
  if (rgb.channels == 1) return rgb;
  if (rgb.channels != 3) throw DataError("luminance needs a 1- or 3-channel image");
  Image out{1, rgb.height, rgb.width, std::vector<double>(rgb.height * rgb.width)};
  for (std::size_t y = 0; y < rgb.height; ++y) {
    for (std::size_t x = 0; x < rgb.width; ++x) {
      out.at(0, y, x) = 0.299 * rgb.at(0, y, x) + 0.587 * rgb.at(1, y, x) + 0.114 * rgb.at(2, y, x);
    }
  }
  return out;
}

namespace {

Image crop_image(const Image& image, std::size_t top, std::size_t left, std::size_t height,
                 std::size_t width) {
  Image out{image.channels, height, width, std::vector<double>(image.channels * height * width)};
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, top + y, left + x);
    }
  }
  return out;
}

Image flip_image(const Image& image) {
  Image out = image;
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        out.at(c, y, image.width - 1 - x) = image.at(c, y, x);
      }
    }
  }
  return out;
}

bool inside_window(const Point& p, double top, double left, double height, double width) {
  return p.x >= left && p.x < left + width && p.y >= top && p.y < top + height;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

LoadResult load_sample(const SampleFiles& files, std::size_t channels) {
  if (channels != 1 && channels != 3) throw DataError("input channels must be 1 or 3");
  Image raw = read_pnm(files.image);
  if (channels == 1) {
    raw = to_luminance(raw);
  } else if (raw.channels == 1) {
    Image rgb{3, raw.height, raw.width, {}};
    for (int c = 0; c < 3; ++c) rgb.values.insert(rgb.values.end(), raw.values.begin(), raw.values.end());
    raw = std::move(rgb);
  }
  const std::size_t height = raw.height - raw.height % 4;
  const std::size_t width = raw.width - raw.width % 4;
  if (height == 0 || width == 0) {
    throw DataError(files.image.string() + ": image smaller than 4x4");
  }

  LoadResult result;
  Sample& sample = result.sample;
  sample.id = files.id;
  sample.image = crop_image(raw, 0, 0, height, width);
  sample.annotations.height = height;
  sample.annotations.width = width;
  for (const Point& p : read_points_csv(files.annotations)) {
    if (inside_window(p, 0.0, 0.0, static_cast<double>(height), static_cast<double>(width))) {
      sample.annotations.points.push_back(p);
    } else {
      ++result.dropped_heads;
    }
  }
  if (files.perspective) {
    Grid pmap = read_pmap(*files.perspective);
    if (pmap.height != raw.height || pmap.width != raw.width) {
      throw DataError(files.perspective->string() + ": perspective map is " +
                      std::to_string(pmap.height) + "x" + std::to_string(pmap.width) +
                      " but the image is " + std::to_string(raw.height) + "x" +
                      std::to_string(raw.width));
    }
    sample.perspective = crop(pmap, 0, 0, height, width);
  }
  if (files.roi) sample.roi = make_roi(read_points_csv(*files.roi), height, width);
  return result;
}

std::vector<SampleFiles> scan_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (ext == ".pgm" || ext == ".ppm") ids.insert(entry.path().stem().string());
  }
  std::vector<SampleFiles> out;
  for (const std::string& id : ids) {
    SampleFiles files;
    files.id = id;
    files.image = fs::exists(dir / (id + ".pgm")) ? dir / (id + ".pgm") : dir / (id + ".ppm");
    files.annotations = dir / (id + ".csv");
    if (!fs::exists(files.annotations)) {
      throw DataError(files.annotations.string() + ": missing annotations for image " +
                      files.image.string());
    }
    if (fs::exists(dir / (id + ".pmap"))) files.perspective = dir / (id + ".pmap");
    if (fs::exists(dir / (id + ".roi.csv"))) files.roi = dir / (id + ".roi.csv");
    out.push_back(std::move(files));
  }
  return out;
}

void save_sample(const std::filesystem::path& dir, const Sample& sample) {
  std::filesystem::create_directories(dir);
  write_pnm(dir / (sample.id + (sample.image.channels == 1 ? ".pgm" : ".ppm")), sample.image);
  write_points_csv(dir / (sample.id + ".csv"), sample.annotations.points);
  if (sample.perspective) write_pmap(dir / (sample.id + ".pmap"), *sample.perspective);
  if (sample.roi) write_points_csv(dir / (sample.id + ".roi.csv"), sample.roi->polygon);
}

Sample crop_sample(const Sample& sample, std::size_t top, std::size_t left, std::size_t height,
                   std::size_t width) {
  if (top + height > sample.height() || left + width > sample.width()) {
    throw DataError("crop window exceeds the " + std::to_string(sample.height()) + "x" +
                    std::to_string(sample.width()) + " image of sample " + sample.id);
  }
  Sample out;
  out.id = sample.id;
  out.image = crop_image(sample.image, top, left, height, width);
  out.annotations.height = height;
  out.annotations.width = width;
  const auto t = static_cast<double>(top);
  const auto l = static_cast<double>(left);
  for (const Point& p : sample.annotations.points) {
    if (inside_window(p, t, l, static_cast<double>(height), static_cast<double>(width))) {
      out.annotations.points.push_back({p.x - l, p.y - t});
    }
  }
  if (sample.perspective) out.perspective = crop(*sample.perspective, top, left, height, width);
  if (sample.roi) {
    RoiMask roi;
    for (const Point& v : sample.roi->polygon) roi.polygon.push_back({v.x - l, v.y - t});
    roi.full = crop(sample.roi->full, top, left, height, width);
    if (top % 4 == 0 && left % 4 == 0 && height % 4 == 0 && width % 4 == 0) {
      roi.quarter = crop(sample.roi->quarter, top / 4, left / 4, height / 4, width / 4);
    } else {
      roi.quarter = block_majority(roi.full, 4);
    }
    out.roi = std::move(roi);
  }
  if (sample.density) {
    if (sample.density->scale != 1) throw DataError("crop expects a scale-1 density map");
    out.density = DensityMap{crop(sample.density->grid, top, left, height, width), 1};
  }
  return out;
}

std::vector<Sample> random_crop(const Sample& sample, const AugmentSpec& spec,
                                std::mt19937_64& rng) {
  const std::size_t crop_h = (sample.height() / 2) / 4 * 4;
  const std::size_t crop_w = (sample.width() / 2) / 4 * 4;
  if (crop_h == 0 || crop_w == 0) {
    throw DataError("sample " + sample.id + " (" + std::to_string(sample.height()) + "x" +
                    std::to_string(sample.width()) + ") is too small for half-size crops");
  }
  std::uniform_int_distribution<std::size_t> row_steps(0, (sample.height() - crop_h) / 4);
  std::uniform_int_distribution<std::size_t> col_steps(0, (sample.width() - crop_w) / 4);
  std::vector<Sample> patches;
  patches.reserve(spec.crop_count * (spec.flip ? 2 : 1));
  for (std::size_t i = 0; i < spec.crop_count; ++i) {
    const std::size_t top = 4 * row_steps(rng);
    const std::size_t left = 4 * col_steps(rng);
    patches.push_back(crop_sample(sample, top, left, crop_h, crop_w));
    if (spec.flip) patches.push_back(hflip(patches.back()));
  }
  return patches;
}

Sample hflip(const Sample& sample) {
  Sample out = sample;
  const double mirror = static_cast<double>(sample.width()) - 1.0;
  out.image = flip_image(sample.image);
  for (Point& p : out.annotations.points) {
    // A head in the last half pixel (x > W - 1) has no in-bounds mirror; it
    // is pinned to the first column.
    p.x = std::max(0.0, mirror - p.x);
  }
  if (out.perspective) out.perspective = hflip(*sample.perspective);
  if (out.roi) {
    for (Point& v : out.roi->polygon) v.x = mirror - v.x;
    out.roi->full = hflip(sample.roi->full);
    out.roi->quarter = hflip(sample.roi->quarter);
  }
  if (out.density) out.density->grid = hflip(sample.density->grid);
  return out;
}

Sample synth_scene(const SynthConfig& config, std::mt19937_64& rng, std::string id) {
  if (config.height % 4 != 0 || config.width % 4 != 0 || config.height == 0 || config.width == 0) {
    throw DataError("synthetic scene size must be a positive multiple of 4");
  }
  if (config.min_count > config.max_count || config.min_radius > config.max_radius ||
      !(config.min_radius >= 1.5)) {
    throw DataError("synthetic scene: invalid count or radius range");
  }
  const std::size_t height = config.height;
  const std::size_t width = config.width;
  Sample sample;
  sample.id = std::move(id);
  sample.image = Image{1, height, width, std::vector<double>(height * width)};
  sample.annotations.height = height;
  sample.annotations.width = width;

  // Background: a few low-frequency waves around mid-grey.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Wave {
    double fx, fy, phase, amplitude;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) {
    waves.push_back({unit(rng) * 0.15, unit(rng) * 0.15, unit(rng) * 2.0 * std::numbers::pi,
                     0.04 + 0.03 * unit(rng)});
  }
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double v = 0.55;
      for (const Wave& w : waves) {
        v += w.amplitude * std::sin(w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y) + w.phase);
      }
      sample.image.at(0, y, x) = v;
    }
  }

  std::uniform_int_distribution<std::size_t> count_dist(config.min_count, config.max_count);
  const std::size_t count = count_dist(rng);
  std::uniform_real_distribution<double> radius_dist(config.min_radius, config.max_radius);
  struct Disk {
    Point centre;
    double radius;
  };
  std::vector<Disk> disks;
  constexpr int kMaxAttempts = 2000;
  for (std::size_t i = 0; i < count; ++i) {
    const double r = radius_dist(rng);
    const double margin = r + 1.0;
    if (2.0 * margin >= static_cast<double>(std::min(height, width))) {
      throw DataError("synthetic scene: head radius too large for the image");
    }
    std::uniform_real_distribution<double> xs(margin, static_cast<double>(width) - 1.0 - margin);
    std::uniform_real_distribution<double> ys(margin, static_cast<double>(height) - 1.0 - margin);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const Point c{xs(rng), ys(rng)};
      placed = std::none_of(disks.begin(), disks.end(), [&](const Disk& d) {
        return std::hypot(d.centre.x - c.x, d.centre.y - c.y) < d.radius + r + 2.0;
      });
      if (placed) disks.push_back({c, r});
    }
    if (!placed) {
      throw DataError("synthetic scene: could not place head " + std::to_string(i + 1) + " of " +
                      std::to_string(count) + " without overlap");
    }
  }

  constexpr double kRimWidth = 1.2;
  for (const Disk& d : disks) {
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(d.centre.y - d.radius)));
    const auto y1 = std::min(height - 1, static_cast<std::size_t>(std::ceil(d.centre.y + d.radius)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(d.centre.x - d.radius)));
    const auto x1 = std::min(width - 1, static_cast<std::size_t>(std::ceil(d.centre.x + d.radius)));
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) {
        const double dist = std::hypot(static_cast<double>(x) - d.centre.x,
                                       static_cast<double>(y) - d.centre.y);
        if (dist <= d.radius - kRimWidth) {
          sample.image.at(0, y, x) = 0.12;
        } else if (dist <= d.radius) {
          sample.image.at(0, y, x) = 0.92;
        }
      }
    }
    sample.annotations.points.push_back(d.centre);
  }

  if (config.noise > 0.0) {
    std::normal_distribution<double> noise(0.0, config.noise);
    for (double& v : sample.image.values) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  return sample;
}

std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& id) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(global_seed ^ splitmix64(h));
}

SigmaResult attach_ground_truth(Sample& sample, SigmaPolicy policy) {
  if (policy.kind == SigmaKind::Perspective && !policy.perspective) {
    if (!sample.perspective) {
      throw DataError("sample " + sample.id + " has no perspective map for the perspective sigma policy");
    }
    policy.perspective = sample.perspective;
  }
  policy.validate();
  SigmaResult sigmas = compute_sigmas(sample.annotations, policy);
  sample.density = splat_density(sample.annotations, sigmas.sigmas, sample.height(), sample.width());
  return sigmas;
}

}  // namespace amcnn
