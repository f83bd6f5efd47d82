#pragma once

#include "objstitch/raster.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace objstitch {

/// One correspondence: p in the moving (target) image, q in the image it is
/// aligned to.
struct Match {
  Point2 p;
  Point2 q;
  double weight = 1.0;

  friend bool operator==(const Match&, const Match&) = default;
};

struct MatchSet {
  std::pair<int, int> pair_id{1, 0};
  std::vector<Match> matches;

  std::size_t size() const noexcept { return matches.size(); }
  bool empty() const noexcept { return matches.empty(); }
};

/// 3x3 projective map, normalized so h(2,2) == 1.
using Homography = Eigen::Matrix3d;

Point2 apply_homography(const Homography& h, const Point2& p);

/// Divides by h(2,2); throws on a singular or non-normalizable matrix.
Homography normalize_homography(const Homography& h);

struct DetectionConfig {
  int max_corners = 1500;
  int pyramid_levels = 3;
  double corner_quality = 0.01;  // relative to the strongest response
  int min_distance = 5;          // non-maximum suppression radius, pixels
  double ratio = 0.8;            // nearest / second-nearest Hamming distance
  double ransac_threshold = 3.0;
  int ransac_iterations = 2000;
  std::uint64_t seed = 0;
  /// Inlier floor below which the pair is declared non-overlapping. A random
  /// minimal sample always has 4 inliers, so the floor has to exceed 4.
  int min_inliers = 15;
};

/// Corners of b matched against corners of a; in the returned set p lies in
/// `a` and q in `b`. Throws insufficient_overlap when RANSAC keeps too few
/// inliers.
MatchSet detect_and_match(const Raster& a, const Raster& b,
                          const DetectionConfig& config = {});

struct RansacResult {
  Homography h;
  MatchSet inliers;
};

/// Normalized 4-point DLT inside RANSAC, then a least-squares DLT refit on the
/// inliers. h maps p onto q. Matches are sorted before sampling so the result
/// does not depend on input order.
RansacResult estimate_homography_ransac(const MatchSet& m, double threshold = 3.0,
                                        int iterations = 2000,
                                        std::uint64_t seed = 0);

/// Normalized direct linear transform over all matches (at least 4).
Homography fit_homography_dlt(const std::vector<Match>& matches);

struct SimilarityParams {
  double scale = 1.0;
  double angle = 0.0;  // radians, image coordinates
};

/// Least-squares similarity through the rectangle corners and their images
/// under h.
SimilarityParams decompose_similarity(const Homography& h, double width,
                                      double height);

/// Text format, one match per line: `x1 y1 x2 y2 [weight]` with (x1,y1) = p.
MatchSet read_matches(const std::filesystem::path& path);
void write_matches(const MatchSet& m, const std::filesystem::path& path);

/// Nine whitespace-separated reals, row-major, h(2,2) normalized.
std::string format_homography(const Homography& h);

}  // namespace objstitch
