#include "objstitch/error.hpp"
#include "objstitch/masks.hpp"
#include "objstitch/similarity.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

using namespace objstitch;

namespace {

BinaryMask blob(int w, int h, int x0, int y0, int n) {
  BinaryMask m(w, h);
  for (int i = 0; i < n; ++i) m.set(x0 + i % 10, y0 + i / 10);
  return m;
}

MaskSet set_of(int w, int h, std::initializer_list<BinaryMask> masks) {
  MaskSet s;
  s.width = w;
  s.height = h;
  for (const auto& m : masks) s.add(m);
  return s;
}

void write_manifest(const testing::TempDir& dir, const std::string& body) {
  std::ofstream(dir / "manifest.json") << body;
}

}  // namespace

TEST_CASE("manifest with one full-frame mask") {
  testing::TempDir dir("mask");
  write_raster(Raster(10, 10, 3, 0.5f), dir / "img.png");
  write_raster(Raster(10, 10, 1, 1.0f), dir / "m0.png");
  write_manifest(dir, R"({"image": "img.png", "masks": [{"file": "m0.png", "area": 100}]})");
  const MaskSet ms = load_mask_manifest(dir / "manifest.json");
  REQUIRE(ms.size() == 1);
  CHECK(ms.areas[0] == 100);
  CHECK(ms.width == 10);
  CHECK(ms.height == 10);
}

TEST_CASE("manifest mask with the wrong size is rejected") {
  testing::TempDir dir("mask");
  write_raster(Raster(10, 10, 3, 0.5f), dir / "img.png");
  write_raster(Raster(9, 10, 1, 1.0f), dir / "m0.png");
  write_manifest(dir, R"({"image": "img.png", "masks": [{"file": "m0.png"}]})");
  try {
    load_mask_manifest(dir / "manifest.json");
    FAIL("expected dimension mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::bad_input);
  }
}

TEST_CASE("manifest with zero entries and malformed manifests") {
  testing::TempDir dir("mask");
  write_raster(Raster(10, 10, 3, 0.5f), dir / "img.png");
  write_manifest(dir, R"({"image": "img.png", "masks": []})");
  CHECK(load_mask_manifest(dir / "manifest.json").empty());
  write_manifest(dir, R"({"image": "img.png"})");
  CHECK_THROWS_AS(load_mask_manifest(dir / "manifest.json"), Error);
  write_manifest(dir, "{ not json");
  CHECK_THROWS_AS(load_mask_manifest(dir / "manifest.json"), Error);
}

TEST_CASE("manifest threshold sets pixels at or above mid gray") {
  testing::TempDir dir("mask");
  write_raster(Raster(4, 1, 1, 0.0f), dir / "img.png");
  write_raster(Raster(4, 1, 1, std::vector<float>{0.0f, 127 / 255.0f, 128 / 255.0f, 1.0f}),
               dir / "m.png");
  write_manifest(dir, R"({"image": "img.png", "masks": [{"file": "m.png", "area": 999}]})");
  const MaskSet ms = load_mask_manifest(dir / "manifest.json");
  REQUIRE(ms.size() == 1);
  CHECK(ms.areas[0] == 2);
  CHECK_FALSE(ms.masks[0](1, 0));
  CHECK(ms.masks[0](2, 0));
}

TEST_CASE("small-mask filtering") {
  const MaskSet ms = set_of(100, 100, {blob(100, 100, 0, 0, 5), blob(100, 100, 20, 20, 50),
                                       blob(100, 100, 50, 50, 300)});
  CHECK(filter_small_masks(ms, 0.0).size() == 3);
  const MaskSet f = filter_small_masks(ms, 0.01);
  REQUIRE(f.size() == 1);
  CHECK(f.areas[0] == 300);
  const MaskSet g = filter_small_masks(ms, 0.001);
  REQUIRE(g.size() == 2);
  CHECK(g.areas[0] == 50);
  CHECK(g.areas[1] == 300);
  CHECK(filter_small_masks(g, 0.001).size() == g.size());
  CHECK_THROWS_AS(filter_small_masks(ms, 1.0), Error);
}

TEST_CASE("3x3 square contour visits its 8 border pixels counterclockwise") {
  const BinaryMask m = testing::box_mask(5, 5, 0, 0, 2, 2);
  const Contour c = trace_contour(m);
  REQUIRE(c.points.size() == 8);
  std::set<std::pair<int, int>> got, want;
  for (const auto& p : c.points) got.insert({static_cast<int>(p.x()), static_cast<int>(p.y())});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      if (x != 1 || y != 1) want.insert({x, y});
  CHECK(got == want);
  CHECK(signed_area(c.points) < 0);
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const Point2 d = c.points[(i + 1) % c.points.size()] - c.points[i];
    CHECK(d.cwiseAbs().maxCoeff() == 1.0);
  }
}

TEST_CASE("contour errors and component selection") {
  BinaryMask single(5, 5);
  single.set(2, 2);
  CHECK_THROWS_AS(trace_contour(single), Error);
  CHECK_THROWS_AS(trace_contour(BinaryMask(4, 4)), Error);

  BinaryMask two = testing::box_mask(40, 40, 5, 5, 14, 14);  // 100 px
  two.set(30, 30);
  two.set(31, 30);
  two.set(30, 31);
  two.set(31, 31);
  const Contour c = trace_contour(two);
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& p : c.points) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  CHECK(xmin == 5);
  CHECK(xmax == 14);
  CHECK(ymin == 5);
  CHECK(ymax == 14);
  CHECK(connected_component(two, 30, 31).area() == 4);
}

TEST_CASE("local coordinate examples") {
  const Eigen::Vector2d o(0, 0), a(1, 0);
  const auto l1 = local_coordinates<double>(o, a, Eigen::Vector2d(2, 0));
  CHECK(l1.x() == doctest::Approx(2));
  CHECK(l1.y() == doctest::Approx(0));
  const auto l2 = local_coordinates<double>(o, a, Eigen::Vector2d(0, 1));
  CHECK(l2.x() == doctest::Approx(0));
  CHECK(l2.y() == doctest::Approx(-1));
  CHECK_THROWS_AS(local_coordinates<double>(o, o, a), Error);
}

TEST_CASE("local coordinates round trip and are similarity invariant") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-100, 100), ang(-M_PI, M_PI), sc(0.2, 5);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d c(u(rng), u(rng)), a(u(rng), u(rng)), b(u(rng), u(rng));
    const auto xy = local_coordinates(c, a, b);
    CHECK((from_local_coordinates(c, a, xy) - b).norm() < 1e-9);
    const auto s = Similarityd::from_scale_angle(sc(rng), ang(rng), Eigen::Vector2d(u(rng), u(rng)));
    CHECK((local_coordinates<double>(s(c), s(a), s(b)) - xy).norm() < 1e-9);
  }
}

TEST_CASE("square structure at a quarter-side spacing") {
  const int side = 40;
  const BinaryMask m = testing::box_mask(100, 100, 20, 30, 20 + side, 30 + side);
  const Contour c = trace_contour(m);
  CHECK(closed_perimeter(c.points) == doctest::Approx(4.0 * side));
  StructureOptions opt;
  opt.spacing = side / 4.0;
  const ObjectStructure s = build_structure(c, m, opt);
  REQUIRE(s.size() == 16);
  CHECK((s.center - Point2(20 + side / 2.0, 30 + side / 2.0)).norm() < 1e-9);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& next = s.samples[(i + 1) % s.size()];
    CHECK((from_local_coordinates(s.center, s.samples[i], s.local_coords[i]) - next).norm() < 1e-9);
    CHECK(s.weights[i] == 1.0);
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK((s.samples[(i + 1) % s.size()] - s.samples[i]).lpNorm<1>() == doctest::Approx(side / 4.0));
  }
}

TEST_CASE("structure options: overlap weighting and perimeter guard") {
  const BinaryMask m = testing::box_mask(100, 100, 10, 10, 49, 49);
  const Contour c = trace_contour(m);
  StructureOptions opt;
  opt.spacing = 10;
  opt.in_overlap = [](const Point2& p) { return p.x() > 30; };
  const ObjectStructure s = build_structure(c, m, opt);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(s.weights[i] == (s.samples[i].x() > 30 ? 0.5 : 1.0));
  opt.spacing = 100;
  CHECK_THROWS_AS(build_structure(c, m, opt), Error);
}

TEST_CASE("concave object center falls back inside the component") {
  BinaryMask m(60, 60);
  for (int y = 5; y < 55; ++y)
    for (int x = 5; x < 55; ++x)
      if (x < 12 || y < 12 || y >= 48) m.set(x, y);  // C shape
  const ObjectStructure s = build_structure(trace_contour(m), m, {.spacing = 8});
  CHECK(m(static_cast<int>(std::lround(s.center.x())), static_cast<int>(std::lround(s.center.y()))));
}

TEST_CASE("resampling spreads points uniformly") {
  const std::vector<Point2> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  const auto pts = resample_closed(square, 4.0);
  CHECK(pts.size() == 10);
  CHECK((pts[0] - Point2(0, 0)).norm() < 1e-12);
  CHECK((pts[1] - Point2(4, 0)).norm() < 1e-12);
  CHECK((pts[3] - Point2(10, 2)).norm() < 1e-12);
  CHECK(signed_area(square) == doctest::Approx(100));
}
