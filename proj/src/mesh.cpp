#include "objstitch/mesh.hpp"

#include "objstitch/error.hpp"

#include <algorithm>
#include <cmath>

namespace objstitch {

GridMesh build_mesh(int width, int height, double target_cell, int image_id) {
  if (!(target_cell > 0)) {
    throw Error(ErrorKind::bad_input, "meshwarp", "cell size must be positive");
  }
  if (width < 2 || height < 2) {
    throw Error(ErrorKind::bad_input, "meshwarp", "image too small for a mesh");
  }
  GridMesh m;
  m.image_id = image_id;
  m.cols = static_cast<int>(std::ceil(width / target_cell));
  m.rows = static_cast<int>(std::ceil(height / target_cell));
  m.cell_width = (width - 1.0) / m.cols;
  m.cell_height = (height - 1.0) / m.rows;
  m.rest.resize(2, m.vertex_count());
  for (int r = 0; r <= m.rows; ++r) {
    for (int c = 0; c <= m.cols; ++c) {
      // Last row/column pinned exactly to the image edge.
      const double x = c == m.cols ? width - 1.0 : c * m.cell_width;
      const double y = r == m.rows ? height - 1.0 : r * m.cell_height;
      m.rest.col(m.vertex_id(c, r)) << x, y;
    }
  }
  m.free = m.rest;
  return m;
}

BilinearAnchor anchor(const GridMesh& mesh, const Point2& p) {
  if (!p.allFinite() || !mesh.contains(p)) {
    throw Error(ErrorKind::bad_input, "meshwarp", "point outside mesh domain");
  }
  BilinearAnchor a;
  a.col = std::clamp(static_cast<int>(std::floor(p.x() / mesh.cell_width)), 0, mesh.cols - 1);
  a.row = std::clamp(static_cast<int>(std::floor(p.y() / mesh.cell_height)), 0, mesh.rows - 1);
  const double u = std::clamp(p.x() / mesh.cell_width - a.col, 0.0, 1.0);
  const double v = std::clamp(p.y() / mesh.cell_height - a.row, 0.0, 1.0);
  a.weights = {(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v};
  a.vertex_ids = {mesh.vertex_id(a.col, a.row), mesh.vertex_id(a.col + 1, a.row),
                  mesh.vertex_id(a.col, a.row + 1), mesh.vertex_id(a.col + 1, a.row + 1)};
  return a;
}

}  // namespace objstitch
