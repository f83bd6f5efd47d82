#include "objstitch/compose.hpp"

#include "objstitch/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace objstitch {

namespace {

constexpr const char* kModule = "compose";

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

Canvas compute_canvas(std::span<const GridMesh> meshes) {
  if (meshes.empty()) throw Error(ErrorKind::bad_input, kModule, "no meshes");
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const auto& m : meshes) {
    if (!m.free.allFinite()) throw Error(ErrorKind::bad_input, kModule, "non-finite vertex");
    lo = lo.cwiseMin(m.free.rowwise().minCoeff());
    hi = hi.cwiseMax(m.free.rowwise().maxCoeff());
  }
  Canvas c;
  // Round-off from the solve must not grow the canvas by a whole pixel.
  constexpr double snap = 1e-6;
  c.min = (lo.array() + snap).floor() - 1.0;
  c.max = (hi.array() - snap).ceil() + 1.0;
  c.offset = -c.min;
  c.width = static_cast<int>(c.max.x() - c.min.x()) + 1;
  c.height = static_cast<int>(c.max.y() - c.min.y()) + 1;
  return c;
}

Layer warp_image(const Raster& img, const GridMesh& mesh, const Canvas& canvas,
                 const WarpOptions& options) {
  Layer layer;
  layer.warped = Raster(canvas.width, canvas.height, img.channels());
  layer.alpha.assign(static_cast<std::size_t>(canvas.width) * canvas.height, 0.0f);
  const double radius = std::max(options.feather_radius, 0.0);
  const double max_x = img.width() - 1.0, max_y = img.height() - 1.0;
  int drawn = 0;

  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      const int tl = mesh.vertex_id(c, r), tr = mesh.vertex_id(c + 1, r);
      const int bl = mesh.vertex_id(c, r + 1), br = mesh.vertex_id(c + 1, r + 1);
      for (const auto& tri : {std::array{tl, tr, br}, std::array{tl, br, bl}}) {
        std::array<Point2, 3> dst, src;
        for (int k = 0; k < 3; ++k) {
          dst[k] = Point2(mesh.free.col(tri[k])) + canvas.offset;
          src[k] = mesh.rest.col(tri[k]);
        }
        const double area = cross(dst[1] - dst[0], dst[2] - dst[0]);
        if (!(area > 1e-12)) {
          ++layer.flipped_triangles;
          continue;
        }
        ++drawn;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({dst[0].x(), dst[1].x(), dst[2].x()}))));
        const int x1 = std::min(canvas.width - 1, static_cast<int>(std::ceil(std::max({dst[0].x(), dst[1].x(), dst[2].x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({dst[0].y(), dst[1].y(), dst[2].y()}))));
        const int y1 = std::min(canvas.height - 1, static_cast<int>(std::ceil(std::max({dst[0].y(), dst[1].y(), dst[2].y()}))));
        constexpr double eps = 1e-9;
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * canvas.width + x;
            if (layer.alpha[idx] > 0.0f) continue;
            const Point2 p(x, y);
            const double l1 = cross(dst[2] - dst[1], p - dst[1]) / area;
            const double l2 = cross(dst[0] - dst[2], p - dst[2]) / area;
            const double l3 = 1.0 - l1 - l2;
            if (l1 < -eps || l2 < -eps || l3 < -eps) continue;
            const Point2 s = l1 * src[0] + l2 * src[1] + l3 * src[2];
            const double sx = std::clamp(s.x(), 0.0, max_x);
            const double sy = std::clamp(s.y(), 0.0, max_y);
            for (int ch = 0; ch < img.channels(); ++ch) {
              const double v = sample_bilinear_clamped(img, sx, sy, ch);
              layer.warped.set(x, y, ch, static_cast<float>(std::clamp(v, 0.0, 1.0)));
            }
            const double border = std::min({sx, sy, max_x - sx, max_y - sy});
            layer.alpha[idx] =
                static_cast<float>(std::clamp((border + 1.0) / (radius + 1.0), 0.0, 1.0));
          }
        }
      }
    }
  }
  if (drawn == 0) throw Error(ErrorKind::degenerate, kModule, "every mesh triangle is degenerate");
  return layer;
}

Raster blend(std::span<const Layer> layers) {
  if (layers.empty()) throw Error(ErrorKind::bad_input, kModule, "nothing to blend");
  const int w = layers[0].warped.width(), h = layers[0].warped.height();
  int channels = 1;
  for (const auto& l : layers) {
    if (l.warped.width() != w || l.warped.height() != h ||
        l.alpha.size() != static_cast<std::size_t>(w) * h) {
      throw Error(ErrorKind::bad_input, kModule, "layers live on different canvases");
    }
    channels = std::max(channels, l.warped.channels());
  }
  std::vector<Raster> promoted;
  promoted.reserve(layers.size());
  for (const auto& l : layers) {
    promoted.push_back(channels == 3 ? l.warped.to_rgb() : l.warped);
  }
  std::vector<float> out(static_cast<std::size_t>(w) * h * channels, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      double total = 0;
      std::array<double, 3> acc{};
      for (std::size_t k = 0; k < layers.size(); ++k) {
        const double a = layers[k].alpha[idx];
        if (a <= 0) continue;
        total += a;
        for (int c = 0; c < channels; ++c) acc[c] += a * promoted[k].at(x, y, c);
      }
      if (total <= 0) continue;
      for (int c = 0; c < channels; ++c) {
        out[idx * channels + c] = static_cast<float>(std::clamp(acc[c] / total, 0.0, 1.0));
      }
    }
  }
  return Raster(w, h, channels, std::move(out));
}

std::vector<float> coverage(std::span<const Layer> layers) {
  if (layers.empty()) return {};
  std::vector<float> out(layers[0].alpha.size(), 0.0f);
  for (const auto& l : layers) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (l.alpha[i] > 0) out[i] = 1.0f;
    }
  }
  return out;
}

}  // namespace objstitch
