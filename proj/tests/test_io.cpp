#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "amcnn/error.hpp"
#include "amcnn/io.hpp"
#include "test_util.hpp"

using namespace amcnn;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string error_of(const auto& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("DMAP round trip is bitwise exact") {
  std::mt19937_64 rng(1);
  Grid g(3, 5);
  for (double& v : g.values) v = std::uniform_real_distribution<double>(0, 1)(rng);
  g.values[0] = 1e-300;
  std::stringstream buf;
  write_dmap(buf, DensityMap{g, 4});
  CHECK(buf.str().rfind("DMAP v1 3 5 4\n", 0) == 0);
  CHECK(buf.str().size() == 14 + 15 * 8);
  const DensityMap back = read_dmap(buf);
  CHECK(back.grid == g);
  CHECK(back.scale == 4);
}

TEST_CASE("DMAP payload is little-endian f64") {
  std::stringstream buf;
  write_dmap(buf, DensityMap{Grid(1, 1, 1.0), 1});
  const std::string bytes = buf.str().substr(buf.str().find('\n') + 1);
  const unsigned char expected[] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  REQUIRE(bytes.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(bytes[i]) == expected[i]);
}

TEST_CASE("DMAP errors") {
  std::stringstream bad_version("DMAP v2 1 1 1\n");
  CHECK_THROWS_AS(read_dmap(bad_version), DataError);
  std::stringstream truncated("DMAP v1 2 2 1\n1234");
  CHECK_THROWS_AS(read_dmap(truncated), DataError);
  std::stringstream junk("hello\n");
  CHECK_THROWS_AS(read_dmap(junk), DataError);
  test::TempDir dir("io");
  CHECK(error_of([&] { read_dmap(dir / "missing.dmap"); }).find("missing.dmap") != std::string::npos);
}

TEST_CASE("PMAP round trip") {
  test::TempDir dir("io");
  Grid p(4, 6, 2.5);
  p.at(3, 5) = 17.0;
  write_pmap(dir / "a.pmap", p);
  CHECK(read_pmap(dir / "a.pmap") == p);
  write_text(dir / "b.pmap", "DMAP v1 1 1 1\n");
  CHECK(error_of([&] { read_pmap(dir / "b.pmap"); }).find("b.pmap") != std::string::npos);
}

TEST_CASE("PNM reading") {
  std::stringstream gray;
  gray << "P5\n# comment\n3 1\n255\n";
  gray.write("\x00\x80\xff", 3);
  const Image g = read_pnm(gray);
  CHECK(g.channels == 1);
  CHECK(g.width == 3);
  CHECK(g.values[0] == 0.0);
  CHECK(g.values[1] == doctest::Approx(128.0 / 255.0));
  CHECK(g.values[2] == 1.0);

  std::stringstream wide;
  wide << "P5 1 1 65535\n";
  wide.write("\xff\xff", 2);
  CHECK(read_pnm(wide).values[0] == 1.0);

  std::stringstream rgb;
  rgb << "P6\n1 1\n255\n";
  rgb.write("\xff\x00\x80", 3);
  const Image c = read_pnm(rgb);
  CHECK(c.channels == 3);
  CHECK(c.at(0, 0, 0) == 1.0);
  CHECK(c.at(1, 0, 0) == 0.0);

  std::stringstream ascii("P2\n1 1\n255\n7\n");
  CHECK_THROWS_AS(read_pnm(ascii), DataError);
  std::stringstream short_data;
  short_data << "P5\n2 2\n255\n";
  short_data.write("\x01", 1);
  CHECK_THROWS_AS(read_pnm(short_data), DataError);
}

TEST_CASE("PNM write then read quantises to 8 bits") {
  test::TempDir dir("io");
  Image img{1, 2, 2, {0.0, 0.5, 1.0, 2.0}};
  write_pnm(dir / "x.pgm", img);
  const Image back = read_pnm(dir / "x.pgm");
  CHECK(back.values[0] == 0.0);
  CHECK(back.values[1] == doctest::Approx(128.0 / 255.0));
  CHECK(back.values[3] == 1.0);  // clamped
}

TEST_CASE("points CSV") {
  std::stringstream in("# x,y\n1.5,2\n\n 3 , 4.25 \n");
  const auto pts = read_points_csv(in, "heads.csv");
  REQUIRE(pts.size() == 2);
  CHECK(pts[1] == Point{3.0, 4.25});

  std::stringstream empty("");
  CHECK(read_points_csv(empty, "e.csv").empty());

  std::stringstream bad("1,2\n3;4\n");
  const std::string msg = error_of([&] { read_points_csv(bad, "heads.csv"); });
  CHECK(msg.find("heads.csv") != std::string::npos);
  CHECK(msg.find("2") != std::string::npos);

  std::stringstream nan("1,nan\n");
  CHECK_THROWS_AS(read_points_csv(nan, "n.csv"), DataError);

  test::TempDir dir("io");
  write_points_csv(dir / "p.csv", {{0.1, 0.2}, {1e-7, 33.0}});
  const auto back = read_points_csv(dir / "p.csv");
  CHECK(back == std::vector<Point>{{0.1, 0.2}, {1e-7, 33.0}});
}

}  // TEST_SUITE
