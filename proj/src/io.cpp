#include "amcnn/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "amcnn/error.hpp"
#include "format.hpp"

namespace amcnn {
namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

void write_f64_le(std::ostream& out, const std::vector<double>& values) {
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_f64_le(std::istream& in, std::size_t count, const std::string& what) {
  std::string bytes(count * 8, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw DataError(what + ": truncated payload (expected " + std::to_string(count) + " values)");
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

std::string read_header_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(what + ": missing header");
  return line;
}

// PNM header tokens, skipping whitespace and '#' comments.
std::size_t pnm_number(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  std::string digits;
  while (c != EOF && std::isdigit(c)) {
    digits.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (digits.empty()) throw DataError("PNM: malformed header");
  return std::stoul(digits);
}

}  // namespace

void write_dmap(std::ostream& out, const DensityMap& map) {
  out << "DMAP v1 " << map.grid.height << ' ' << map.grid.width << ' ' << map.scale << '\n';
  write_f64_le(out, map.grid.values);
}

void write_dmap(const std::filesystem::path& path, const DensityMap& map) {
  auto out = open_out(path);
  write_dmap(out, map);
  if (!out) throw DataError("failed writing " + path.string());
}

DensityMap read_dmap(std::istream& in) {
  std::istringstream header(read_header_line(in, "DMAP"));
  std::string magic;
  std::string version;
  std::size_t height = 0;
  std::size_t width = 0;
  int scale = 0;
  if (!(header >> magic >> version >> height >> width >> scale) || magic != "DMAP") {
    throw DataError("DMAP: malformed header");
  }
  if (version != "v1") throw DataError("DMAP: unsupported version " + version);
  if (scale <= 0) throw DataError("DMAP: scale must be positive");
  DensityMap map{Grid(height, width), scale};
  map.grid.values = read_f64_le(in, height * width, "DMAP");
  return map;
}

DensityMap read_dmap(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_dmap(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pmap(const std::filesystem::path& path, const Grid& perspective) {
  auto out = open_out(path);
  out << "PMAP v1 " << perspective.height << ' ' << perspective.width << '\n';
  write_f64_le(out, perspective.values);
}

Grid read_pmap(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::istringstream header(read_header_line(in, path.string()));
  std::string magic;
  std::string version;
  std::size_t height = 0;
  std::size_t width = 0;
  if (!(header >> magic >> version >> height >> width) || magic != "PMAP") {
    throw DataError(path.string() + ": malformed PMAP header");
  }
  if (version != "v1") throw DataError(path.string() + ": unsupported PMAP version " + version);
  Grid grid(height, width);
  grid.values = read_f64_le(in, height * width, path.string());
  return grid;
}

Image read_pnm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw DataError("PNM: expected binary P5 or P6 magic");
  }
  Image image;
  image.channels = magic[1] == '5' ? 1 : 3;
  image.width = pnm_number(in);
  image.height = pnm_number(in);
  const std::size_t maxval = pnm_number(in);
  if (maxval == 0 || maxval > 65535) throw DataError("PNM: maxval out of range");
  // pnm_number consumed the single whitespace byte after maxval.
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t samples = image.channels * image.height * image.width;
  std::string raw(samples * bytes_per_sample, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError("PNM: truncated pixel data");

  image.values.resize(samples);
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        const std::size_t s = (y * image.width + x) * image.channels + c;
        std::size_t v = static_cast<unsigned char>(raw[s * bytes_per_sample]);
        if (bytes_per_sample == 2) v = (v << 8) | static_cast<unsigned char>(raw[s * 2 + 1]);
        image.at(c, y, x) = static_cast<double>(v) * inv;
      }
    }
  }
  return image;
}

Image read_pnm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_pnm(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError(path.string() + ": PNM supports 1 or 3 channels");
  }
  auto out = open_out(path);
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  std::string raw(image.channels * image.height * image.width, '\0');
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        raw[(y * image.width + x) * image.channels + c] =
            static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<Point> read_points_csv(std::istream& in, const std::string& source) {
  std::vector<Point> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto comma = line.find(',');
    const auto bad = [&] {
      return DataError(source + ":" + std::to_string(line_no) + ": expected 'x,y', got '" + line + "'");
    };
    if (comma == std::string::npos) throw bad();
    Point p;
    if (!parse_double(trim(std::string_view(line).substr(0, comma)), p.x) ||
        !parse_double(trim(std::string_view(line).substr(comma + 1)), p.y)) {
      throw bad();
    }
    points.push_back(p);
  }
  return points;
}

std::vector<Point> read_points_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_points_csv(in, path.string());
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points) {
  auto out = open_out(path);
  for (const Point& p : points) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace amcnn
