#include "objstitch/error.hpp"
#include "objstitch/metrics.hpp"
#include "objstitch/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace objstitch;

namespace {

const Homography kTruth = testing::similarity_homography(10, 1.05, 150, 20);

StitchInputs pair_inputs(const testing::SyntheticPair& s, std::optional<MaskSet> moving_masks = {}) {
  StitchInputs in;
  in.images = {s.reference, s.moving};
  in.matches = {s.matches};
  if (moving_masks) in.masks = {std::nullopt, moving_masks};
  return in;
}

MaskSet square_masks(int w, int h, int x0, int y0, int x1, int y1) {
  MaskSet ms;
  ms.image_id = 1;
  ms.width = w;
  ms.height = h;
  ms.add(testing::box_mask(w, h, x0, y0, x1, y1));
  return ms;
}

double object_residual(const StitchResult& r) {
  const auto& s = r.structures.at(1).at(0);
  std::vector<Point2> warped;
  for (const auto& p : s.samples) warped.push_back(warp_point(r.meshes[1], p));
  return similarity_residual(s.samples, warped);
}

}  // namespace

TEST_CASE("mode names and config validation") {
  CHECK(parse_mode("gsp") == StitchMode::gsp);
  CHECK(parse_mode("obj-chain") == StitchMode::obj_chain);
  CHECK(parse_mode("obj-fan") == StitchMode::obj_fan);
  CHECK(mode_name(StitchMode::obj_fan) == "obj-fan");
  CHECK_THROWS_AS(parse_mode("fan"), Error);

  StitchConfig c;
  CHECK_NOTHROW(c.validate());
  c.min_area_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.outer_iterations = 0;
  CHECK_THROWS_AS(c.validate(), Error);

  const auto j = nlohmann::json::parse(config_to_json(StitchConfig{}));
  CHECK(j["lambda_l"] == 0.75);
  CHECK(j["lambda_obj"] == 1.5);
  CHECK(j["mode"] == "obj-fan");
  CHECK(j["cell"] == 40.0);
  CHECK(j["delta"] == 20.0);
  CHECK(j["min_area_fraction"] == 0.001);
  CHECK(j["ransac"]["seed"] == 0);
}

TEST_CASE("input validation") {
  StitchInputs in;
  in.images = {Raster(50, 50, 1, 0.5f)};
  CHECK_THROWS_AS(stitch(in, {}), Error);
  in.images.push_back(Raster(50, 50, 1, 0.5f));
  in.masks.resize(1);
  CHECK_THROWS_AS(stitch(in, {}), Error);
}

TEST_CASE("identical image pair stitches to the input") {
  const auto scene = testing::random_scene(220, 170, 12, 150);
  const Raster img = testing::render(scene, 200, 150);
  StitchInputs in;
  in.images = {img, img};
  const StitchResult r = stitch(in, {});
  CHECK(r.canvas.width == 202);
  CHECK(r.canvas.height == 152);
  CHECK(r.report.mdr < 1e-9);
  double worst = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      worst = std::max(worst, std::abs(double(r.panorama.at(x + 1, y + 1)) - img.at(x, y)));
  CHECK(worst <= 1.0 / 255);
  CHECK(r.report.overlap_rmse < 0.5);
}

TEST_CASE("synthetic similarity pair with a square object") {
  const auto pair = testing::synthetic_pair(kTruth);
  StitchConfig cfg;
  const StitchResult r = stitch(pair_inputs(pair, square_masks(320, 240, 40, 60, 120, 140)), cfg);
  CHECK(r.report.overlap_rmse <= 0.5);
  REQUIRE(r.structures[1].size() == 1);
  CHECK(object_residual(r) <= 1.0);
  CHECK(r.report.per_image[1].objects == 1);
  CHECK(r.report.term_rows[3] > 0);
  // Meshes follow the true similarity.
  for (int v = 0; v < r.meshes[1].vertex_count(); ++v)
    CHECK((Point2(r.meshes[1].free.col(v)) - apply_homography(kTruth, r.meshes[1].rest.col(v))).norm() < 0.05);
  // Debug overlay draws on top of the panorama.
  const Raster dbg = render_debug(r);
  CHECK(dbg.width() == r.panorama.width());
  CHECK(dbg.channels() == 3);
  CHECK_FALSE(dbg == r.panorama.to_rgb());
}

TEST_CASE("empty mask set degenerates to gsp") {
  const auto pair = testing::synthetic_pair(kTruth, 240, 180, 3);
  StitchInputs in = pair_inputs(pair);
  in.masks = {std::nullopt, MaskSet{1, 240, 180, {}, {}}};
  StitchConfig fan, gsp;
  gsp.mode = StitchMode::gsp;
  const StitchResult a = stitch(in, fan), b = stitch(in, gsp);
  CHECK(a.panorama == b.panorama);
  CHECK(a.report.term_rows == b.report.term_rows);
  CHECK(a.report.term_rows[3] == 0);
}

TEST_CASE("outer iterations never increase the total energy") {
  auto pair = testing::synthetic_pair(kTruth, 320, 240, 5);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 2.0);
  for (std::size_t i = 0; i < pair.matches.size(); i += 3) pair.matches.matches[i].q += Point2(g(rng), g(rng));
  for (bool full : {false, true}) {
    for (auto mode : {StitchMode::obj_fan, StitchMode::obj_chain}) {
      StitchConfig cfg;
      cfg.mode = mode;
      cfg.full_triangle = full;
      cfg.outer_iterations = 5;
      cfg.target_tolerance = 0;
      cfg.cg_tolerance = 1e-10;
      const StitchResult r = stitch(pair_inputs(pair, square_masks(320, 240, 30, 50, 130, 150)), cfg);
      const auto& t = r.report.energy_trace;
      REQUIRE(t.size() >= 4);
      for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] <= t[k - 1] * (1 + 1e-9) + 1e-12);
    }
  }
}

TEST_CASE("mask problems") {
  const auto pair = testing::synthetic_pair(kTruth, 240, 180, 3);
  CHECK_THROWS_AS(stitch(pair_inputs(pair, square_masks(200, 180, 10, 10, 50, 50)), {}), Error);

  MaskSet ms = square_masks(240, 180, 40, 40, 100, 100);
  ms.add(testing::box_mask(240, 180, 150, 20, 156, 26));  // 49 px: kept by area, too short a contour
  StitchConfig cfg;
  cfg.sample_spacing = 60;
  const StitchResult r = stitch(pair_inputs(pair, ms), cfg);
  CHECK(r.structures[1].size() == 1);
  CHECK_FALSE(r.report.warnings.empty());
}

TEST_CASE("three images in star and chain topology") {
  const Homography h1 = testing::similarity_homography(3, 1.0, 90, 10);
  const Homography h2 = testing::similarity_homography(-4, 0.97, 170, -5);
  const auto scene = testing::random_scene(600, 400, 21, 300);
  StitchInputs in;
  in.images = {testing::render(scene, 240, 180), testing::render(scene, 240, 180, h1),
               testing::render(scene, 240, 180, h2)};
  for (bool chain : {false, true}) {
    StitchConfig cfg;
    cfg.chain_topology = chain;
    in.matches = {testing::grid_matches(h1, 240, 180, 240, 180, 8),
                  chain ? testing::grid_matches(h1.inverse() * h2, 240, 180, 240, 180, 8)
                        : testing::grid_matches(h2, 240, 180, 240, 180, 8)};
    const StitchResult r = stitch(in, cfg);
    CHECK(r.inliers.size() == 2);
    CHECK(r.inliers[1].pair_id == std::pair<int, int>{2, chain ? 1 : 0});
    CHECK(r.report.overlap_rmse < 0.5);
    CHECK((r.report.per_image[2].homography - h2).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("free reference keeps the reference near rest") {
  const auto pair = testing::synthetic_pair(kTruth, 240, 180, 3);
  StitchConfig cfg;
  cfg.free_reference = true;
  const StitchResult r = stitch(pair_inputs(pair), cfg);
  CHECK(r.report.overlap_rmse < 0.5);
  CHECK((r.meshes[0].free - r.meshes[0].rest).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("report serialization") {
  const auto pair = testing::synthetic_pair(kTruth, 240, 180, 3);
  const StitchResult r = stitch(pair_inputs(pair), {});
  const auto j = nlohmann::json::parse(report_to_json(r.report, {}));
  CHECK(j["niqe"].is_null());
  CHECK(j["per_image"].size() == 2);
  CHECK(j["config"]["lambda_l"] == 0.75);
  CHECK(report_to_table(r.report).find("NIQE: not computed") != std::string::npos);
}
