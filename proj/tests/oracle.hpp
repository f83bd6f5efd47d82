#pragma once

// Direct, term-by-term evaluation of the stitching objective from vertex
// positions. Shares no code with the row assembly it is compared against.

#include "objstitch/energy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

namespace testing {

using objstitch::GridMesh;
using objstitch::Point2;

inline Point2 bilinear_free(const GridMesh& m, const Point2& p) {
  const int c = std::clamp(static_cast<int>(std::floor(p.x() / m.cell_width)), 0, m.cols - 1);
  const int r = std::clamp(static_cast<int>(std::floor(p.y() / m.cell_height)), 0, m.rows - 1);
  const double fx = p.x() / m.cell_width - c, fy = p.y() / m.cell_height - r;
  const auto v = [&](int cc, int rr) { return Point2(m.free.col(rr * (m.cols + 1) + cc)); };
  return (1 - fx) * (1 - fy) * v(c, r) + fx * (1 - fy) * v(c + 1, r) + (1 - fx) * fy * v(c, r + 1) +
         fx * fy * v(c + 1, r + 1);
}

/// Energies (alignment, local, global, structure) with mesh 0 held as the
/// reference, fan triangles, no center rows.
inline std::array<double, 4> direct_energies(std::span<const GridMesh> meshes,
                                             std::span<const objstitch::MatchSet> matches,
                                             std::span<const objstitch::ImageTerms> terms,
                                             double lambda_local, double lambda_object) {
  std::array<double, 4> e{};
  for (const auto& ms : matches) {
    for (const auto& x : ms.matches) {
      const Point2 d = bilinear_free(meshes[ms.pair_id.first], x.p) -
                       bilinear_free(meshes[ms.pair_id.second], x.q);
      e[0] += x.weight * x.weight * d.squaredNorm();
    }
  }
  for (std::size_t i = 1; i < meshes.size(); ++i) {
    const GridMesh& m = meshes[i];
    const auto id = [&](int c, int r) { return r * (m.cols + 1) + c; };

    // Local: per cell, least-squares similarity of the 4 corners (dense QR).
    for (int r = 0; r < m.rows; ++r) {
      for (int c = 0; c < m.cols; ++c) {
        const std::array<int, 4> ids{id(c, r), id(c + 1, r), id(c + 1, r + 1), id(c, r + 1)};
        Eigen::Matrix<double, 8, 4> a;
        Eigen::Matrix<double, 8, 1> b;
        for (int k = 0; k < 4; ++k) {
          const Point2 v = m.rest.col(ids[k]);
          a.row(2 * k) << v.x(), -v.y(), 1, 0;
          a.row(2 * k + 1) << v.y(), v.x(), 0, 1;
          b.segment<2>(2 * k) = m.free.col(ids[k]);
        }
        const Eigen::Vector4d p = a.householderQr().solve(b);
        Eigen::Matrix2d s;
        s << p[0], -p[1], p[1], p[0];
        for (int k = 0; k < 4; ++k) {
          const int j = ids[k], l = ids[(k + 1) % 4];
          e[1] += lambda_local * (Point2(m.free.col(l) - m.free.col(j)) -
                                  s * (m.rest.col(l) - m.rest.col(j)))
                                     .squaredNorm();
        }
      }
    }

    // Global: horizontal edges row by row, then vertical edges.
    std::vector<std::pair<int, int>> edges;
    for (int r = 0; r <= m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) edges.emplace_back(id(c, r), id(c + 1, r));
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c <= m.cols; ++c) edges.emplace_back(id(c, r), id(c, r + 1));
    const auto& t = terms[i];
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const Point2 er = m.rest.col(edges[k].second) - m.rest.col(edges[k].first);
      const Point2 ef = m.free.col(edges[k].second) - m.free.col(edges[k].first);
      const double ce = er.dot(ef) / er.squaredNorm();
      const double se = (er.x() * ef.y() - er.y() * ef.x()) / er.squaredNorm();
      const double w = t.edge_weights.empty() ? 1.0 : t.edge_weights[k];
      e[2] += w * w *
              (std::pow(ce - t.similarity.scale * std::cos(t.similarity.angle), 2) +
               std::pow(se - t.similarity.scale * std::sin(t.similarity.angle), 2));
    }

    // Structure: fan prediction of V_{i+1} plus target pull of V_i.
    for (std::size_t o = 0; o < t.structures.size(); ++o) {
      const auto& s = t.structures[o];
      const std::size_t n = s.samples.size();
      const Point2 c0 = bilinear_free(m, s.center);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = (k + 1) % n;
        const Point2 vk = bilinear_free(m, s.samples[k]), vj = bilinear_free(m, s.samples[j]);
        const Point2 d = vk - c0;
        const Point2 pred = c0 + s.local_coords[k].x() * d + s.local_coords[k].y() * Point2(d.y(), -d.x());
        e[3] += lambda_object * s.weights[j] * (pred - vj).squaredNorm();
        e[3] += lambda_object * s.weights[k] * (t.targets[o].samples[k] - vk).squaredNorm();
      }
    }
  }
  return e;
}

}  // namespace testing
