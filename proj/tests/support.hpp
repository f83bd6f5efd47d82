#pragma once

#include "objstitch/features.hpp"
#include "objstitch/masks.hpp"
#include "objstitch/raster.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

using objstitch::Point2;

/// Procedural scene in continuous reference coordinates: smooth background
/// plus axis-aligned boxes and discs.
struct Scene {
  struct Box {
    double x0, y0, x1, y1;
    float value;
  };
  struct Disc {
    double cx, cy, r;
    float value;
  };
  std::vector<Box> boxes;
  std::vector<Disc> discs;

  float operator()(double x, double y) const {
    float v = static_cast<float>(0.35 + 0.15 * std::sin(x * 0.021) * std::cos(y * 0.017));
    for (const auto& b : boxes) {
      if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) v = b.value;
    }
    for (const auto& d : discs) {
      if ((x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) < d.r * d.r) v = d.value;
    }
    return std::clamp(v, 0.0f, 1.0f);
  }
};

inline Scene random_scene(double width, double height, unsigned seed, int shapes = 120) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-20.0, width + 20.0), uy(-20.0, height + 20.0);
  std::uniform_real_distribution<double> size(6.0, 40.0);
  std::uniform_real_distribution<float> value(0.05f, 0.95f);
  Scene s;
  for (int i = 0; i < shapes; ++i) {
    const double x = ux(rng), y = uy(rng);
    if (i % 3 == 2) {
      s.discs.push_back({x, y, 0.5 * size(rng), value(rng)});
    } else {
      s.boxes.push_back({x, y, x + size(rng), y + size(rng), value(rng)});
    }
  }
  return s;
}

/// Renders image pixel p from scene point h(p) with 2x2 supersampling.
template <typename Fn>
objstitch::Raster render(const Fn& scene, int width, int height,
                         const objstitch::Homography& h = objstitch::Homography::Identity()) {
  std::vector<float> data(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float acc = 0;
      for (double dy : {-0.25, 0.25}) {
        for (double dx : {-0.25, 0.25}) {
          const Point2 q = objstitch::apply_homography(h, Point2(x + dx, y + dy));
          acc += scene(q.x(), q.y());
        }
      }
      data[static_cast<std::size_t>(y) * width + x] = acc / 4.0f;
    }
  }
  return objstitch::Raster(width, height, 1, std::move(data));
}

/// Similarity homography: rotate by `degrees`, scale, then translate.
inline objstitch::Homography similarity_homography(double degrees, double scale, double tx,
                                                   double ty) {
  const double a = degrees * M_PI / 180.0;
  objstitch::Homography h;
  h << scale * std::cos(a), -scale * std::sin(a), tx, scale * std::sin(a),
      scale * std::cos(a), ty, 0, 0, 1;
  return h;
}

/// Exact correspondences p -> h(p) on a regular grid of the moving image,
/// kept when h(p) lands inside the other image.
inline objstitch::MatchSet grid_matches(const objstitch::Homography& h, int moving_w, int moving_h,
                                        int ref_w, int ref_h, double step) {
  objstitch::MatchSet m;
  for (double y = 2; y <= moving_h - 3; y += step) {
    for (double x = 2; x <= moving_w - 3; x += step) {
      const Point2 p(x, y);
      const Point2 q = objstitch::apply_homography(h, p);
      if (q.x() >= 1 && q.y() >= 1 && q.x() <= ref_w - 2 && q.y() <= ref_h - 2) {
        m.matches.push_back({p, q, 1.0});
      }
    }
  }
  return m;
}

/// Reference image (index 0) shows the scene directly; the moving image's
/// pixel p shows scene point h(p).
struct SyntheticPair {
  objstitch::Homography h;
  objstitch::Raster reference;
  objstitch::Raster moving;
  objstitch::MatchSet matches;
};

inline SyntheticPair synthetic_pair(const objstitch::Homography& h, int w = 320, int ht = 240,
                                    unsigned seed = 1, double step = 8) {
  const Scene scene = random_scene(2.5 * w, 2 * ht, seed, 260);
  SyntheticPair s;
  s.h = h;
  s.reference = render(scene, w, ht);
  s.moving = render(scene, w, ht, h);
  s.matches = grid_matches(h, w, ht, w, ht, step);
  return s;
}

inline objstitch::BinaryMask box_mask(int w, int h, int x0, int y0, int x1, int y1) {
  objstitch::BinaryMask m(w, h);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m.set(x, y);
  }
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("objstitch_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
