#include "objstitch/metrics.hpp"

#include "objstitch/error.hpp"
#include "objstitch/similarity.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace objstitch {

namespace {

// Returns {rms residual / mean segment length, valid}.
std::pair<double, bool> line_residual(const std::vector<Point2>& pts) {
  if (pts.size() < 3) return {0.0, false};
  Point2 mean = Point2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) scatter += (p - mean) * (p - mean).transpose();
  // Line normal = eigenvector of the smallest scatter eigenvalue. Residuals
  // are projected explicitly; sqrt of the eigenvalue itself loses precision.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const Eigen::Vector2d normal = eig.eigenvectors().col(0);
  double ss = 0;
  for (const auto& p : pts) ss += std::pow((p - mean).dot(normal), 2);
  double length = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) length += (pts[i + 1] - pts[i]).norm();
  length /= static_cast<double>(pts.size() - 1);
  if (!(length > 0)) return {0.0, false};
  return {std::sqrt(ss / static_cast<double>(pts.size())) / length, true};
}

void accumulate(const GridMesh& mesh, double& sum, std::size_t& count) {
  for (int r = 0; r <= mesh.rows; ++r) {
    std::vector<Point2> line;
    for (int c = 0; c <= mesh.cols; ++c) line.emplace_back(mesh.free.col(mesh.vertex_id(c, r)));
    if (auto [v, ok] = line_residual(line); ok) {
      sum += v;
      ++count;
    }
  }
  for (int c = 0; c <= mesh.cols; ++c) {
    std::vector<Point2> line;
    for (int r = 0; r <= mesh.rows; ++r) line.emplace_back(mesh.free.col(mesh.vertex_id(c, r)));
    if (auto [v, ok] = line_residual(line); ok) {
      sum += v;
      ++count;
    }
  }
}

}  // namespace

double compute_mdr(std::span<const GridMesh> meshes) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& m : meshes) {
    if (!m.free.allFinite()) throw Error(ErrorKind::bad_input, "metrics", "non-finite vertex");
    accumulate(m, sum, count);
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double compute_mdr(const GridMesh& mesh) { return compute_mdr(std::span(&mesh, 1)); }

double compute_overlap_rmse(std::span<const GridMesh> meshes,
                            std::span<const MatchSet> matches) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& set : matches) {
    const auto [i, j] = set.pair_id;
    for (const auto& m : set.matches) {
      total += (warp_point(meshes[i], m.p) - warp_point(meshes[j], m.q)).squaredNorm();
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::bad_input, "metrics", "no matches for overlap RMSE");
  return std::sqrt(total / static_cast<double>(n));
}

double similarity_residual(std::span<const Point2> rest, std::span<const Point2> warped) {
  const auto fit = fit_similarity<double>(rest, warped);
  double total = 0;
  for (std::size_t i = 0; i < rest.size(); ++i) total += (fit(rest[i]) - warped[i]).squaredNorm();
  return std::sqrt(total / static_cast<double>(rest.size()));
}

}  // namespace objstitch
