#pragma once

#include "objstitch/raster.hpp"

#include <Eigen/Core>

#include <array>

namespace objstitch {

/// 2xN vertex storage, column v is vertex v, row-major over the lattice.
using Vertices = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Uniform lattice over an image. Rest vertices live in image coordinates;
/// free vertices are the deformed positions in the shared (reference) frame.
struct GridMesh {
  int image_id = 0;
  int cols = 0;
  int rows = 0;
  double cell_width = 0;
  double cell_height = 0;
  Vertices rest;
  Vertices free;

  int vertex_count() const noexcept { return (cols + 1) * (rows + 1); }
  int vertex_id(int col, int row) const noexcept { return row * (cols + 1) + col; }
  double domain_width() const noexcept { return cols * cell_width; }
  double domain_height() const noexcept { return rows * cell_height; }

  /// Mean of the two cell dimensions; the lattice's nominal resolution.
  double cell_size() const noexcept { return 0.5 * (cell_width + cell_height); }

  bool contains(const Point2& p) const noexcept {
    constexpr double slack = 1e-9;
    return p.x() >= -slack && p.y() >= -slack && p.x() <= domain_width() + slack &&
           p.y() <= domain_height() + slack;
  }
};

/// Lattice of ceil(w/cell) x ceil(h/cell) cells spanning [0,w-1]x[0,h-1].
GridMesh build_mesh(int width, int height, double target_cell, int image_id = 0);
inline GridMesh build_mesh(const Raster& img, double target_cell, int image_id = 0) {
  return build_mesh(img.width(), img.height(), target_cell, image_id);
}

/// Bilinear coordinates of a point within its rest cell. Vertex order is
/// top-left, top-right, bottom-left, bottom-right.
struct BilinearAnchor {
  int col = 0;
  int row = 0;
  std::array<double, 4> weights{};
  std::array<int, 4> vertex_ids{};

  /// Weighted combination of the given vertex columns.
  Point2 apply(const Vertices& v) const {
    Point2 out = Point2::Zero();
    for (int i = 0; i < 4; ++i) out += weights[i] * v.col(vertex_ids[i]);
    return out;
  }
};

/// Throws when p lies outside the mesh domain.
BilinearAnchor anchor(const GridMesh& mesh, const Point2& p);

/// Position of rest point p under the mesh's current deformation.
inline Point2 warp_point(const GridMesh& mesh, const Point2& p) {
  return anchor(mesh, p).apply(mesh.free);
}

}  // namespace objstitch
