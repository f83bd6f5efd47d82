#pragma once

#include "objstitch/mesh.hpp"
#include "objstitch/raster.hpp"

#include <span>
#include <vector>

namespace objstitch {

/// Output frame. Canvas pixel (cx, cy) shows reference point
/// (cx - offset.x, cy - offset.y).
struct Canvas {
  Eigen::Vector2d min = Eigen::Vector2d::Zero();  // bounds in reference coordinates
  Eigen::Vector2d max = Eigen::Vector2d::Zero();
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  int width = 0;
  int height = 0;

  friend bool operator==(const Canvas&, const Canvas&) = default;
};

/// Integer bounding box of every deformed vertex, padded by one pixel.
Canvas compute_canvas(std::span<const GridMesh> meshes);

struct Layer {
  Raster warped;
  std::vector<float> alpha;  // 0 where warped is undefined
  int flipped_triangles = 0;
};

struct WarpOptions {
  /// Alpha reaches 1 this many pixels inside the source border.
  double feather_radius = 80.0;
};

/// Inverse-maps every canvas pixel through the deformed triangle covering it
/// (each cell split along its top-left/bottom-right diagonal) and samples the
/// source bilinearly.
Layer warp_image(const Raster& img, const GridMesh& mesh, const Canvas& canvas,
                 const WarpOptions& options = {});

/// Alpha-weighted average of the layers; uncovered pixels are black.
Raster blend(std::span<const Layer> layers);

/// Union coverage of the layers (1 where any alpha > 0).
std::vector<float> coverage(std::span<const Layer> layers);

}  // namespace objstitch
