#pragma once

// Samples, augmentation, synthetic scenes and dataset directories.
//
// A dataset directory holds, per sample id:
//   <id>.pgm | <id>.ppm   image
//   <id>.csv              head annotations, "x,y" per line
//   <id>.pmap             optional perspective map
//   <id>.roi.csv          optional ROI polygon, "x,y" vertex per line

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "amcnn/density.hpp"
#include "amcnn/io.hpp"

namespace amcnn {

struct Sample {
  std::string id;
  Image image;
  HeadAnnotations annotations;
  std::optional<Grid> perspective;
  std::optional<RoiMask> roi;
  std::optional<DensityMap> density;  // scale-1 ground truth, once attached

  std::size_t height() const { return image.height; }
  std::size_t width() const { return image.width; }
};

struct SampleFiles {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path annotations;
  std::optional<std::filesystem::path> perspective;
  std::optional<std::filesystem::path> roi;
};

struct LoadResult {
  Sample sample;
  std::size_t dropped_heads = 0;  // outside the image or the multiple-of-4 crop
};

// Reads the files, converts RGB to luminance (unless channels == 3), and
// crops to the largest multiple-of-4 size anchored at the top-left corner.
LoadResult load_sample(const SampleFiles& files, std::size_t channels = 1);

std::vector<SampleFiles> scan_dataset(const std::filesystem::path& dir);
// Writes image, annotations and optional perspective/ROI files into `dir`.
void save_sample(const std::filesystem::path& dir, const Sample& sample);

// Luminance 0.299 R + 0.587 G + 0.114 B of a 3-channel image; 1-channel
// images are returned unchanged.
Image to_luminance(const Image& rgb);

// Window [top, top+height) x [left, left+width). Heads on the left/top edge
// belong to the patch, heads on the right/bottom edge do not.
Sample crop_sample(const Sample& sample, std::size_t top, std::size_t left, std::size_t height,
                   std::size_t width);

struct AugmentSpec {
  std::size_t crop_count = 0;
  bool flip = false;
};

// Half-height x half-width patches (rounded down to multiples of 4) at
// uniformly random offsets aligned to multiples of 4. With spec.flip each crop
// is followed by its mirror image. Throws DataError if the image is too small.
std::vector<Sample> random_crop(const Sample& sample, const AugmentSpec& spec,
                                std::mt19937_64& rng);

// Mirror about the vertical axis: x -> W - 1 - x.
Sample hflip(const Sample& sample);

struct SynthConfig {
  std::size_t min_count = 5;
  std::size_t max_count = 20;
  double min_radius = 3.0;
  double max_radius = 5.0;
  double noise = 0.02;
  std::size_t height = 128;
  std::size_t width = 128;
};

// Dark disks with bright rims on a textured background, at non-overlapping
// random positions. Throws DataError when the heads do not fit.
Sample synth_scene(const SynthConfig& config, std::mt19937_64& rng, std::string id = "synth");

// Stream seed for a sample, derived from the global seed and the sample id.
std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& id);

// Computes sigmas under `policy` (using the sample's own perspective map for
// the perspective policy) and stores the scale-1 density map in the sample.
SigmaResult attach_ground_truth(Sample& sample, SigmaPolicy policy);

}  // namespace amcnn
