#pragma once

#include "objstitch/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace objstitch {

/// Single-object segmentation mask; a pixel is set iff its byte is nonzero.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool operator()(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height &&
           bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t area() const;
};

struct MaskSet {
  int image_id = 0;
  int width = 0;
  int height = 0;
  std::vector<BinaryMask> masks;
  std::vector<std::size_t> areas;

  std::size_t size() const noexcept { return masks.size(); }
  bool empty() const noexcept { return masks.empty(); }
  void add(BinaryMask m);
};

/// Reads `{ "image": ..., "masks": [ { "file": ..., "area": ... } ] }`.
/// Paths are resolved relative to the manifest's directory. Mask pixels with
/// value >= 128 are set.
MaskSet load_mask_manifest(const std::filesystem::path& path);

/// Drops masks whose area is below min_area_fraction * width * height.
MaskSet filter_small_masks(const MaskSet& ms, double min_area_fraction);

/// Closed boundary polyline, counterclockwise as displayed (y down), without
/// a repeated closing point.
struct Contour {
  std::vector<Point2> points;
};

/// Outer boundary of the largest 8-connected component by Moore-neighbor
/// tracing.
Contour trace_contour(const BinaryMask& mask);

/// Pixels of the 8-connected component containing (x, y).
BinaryMask connected_component(const BinaryMask& mask, int x, int y);

/// Triangle fan of one object: center V0 and boundary samples V1..VN.
/// local_coords[i] places samples[(i+1) % N] in the frame built on
/// (center, samples[i]).
struct ObjectStructure {
  Point2 center = Point2::Zero();
  std::vector<Point2> samples;
  std::vector<Eigen::Vector2d> local_coords;
  std::vector<double> weights;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Returns a down-weighting predicate's verdict for a sample position.
using OverlapTest = std::function<bool(const Point2&)>;

struct StructureOptions {
  double spacing = 20.0;
  /// When set, samples for which the test is true get weight
  /// `overlap_weight`; all others get 1.
  OverlapTest in_overlap;
  double overlap_weight = 0.5;
};

/// Resamples the contour at arc-length spacing and builds the fan around the
/// area centroid of the traced component (or its deepest interior pixel when
/// the centroid falls outside).
ObjectStructure build_structure(const Contour& contour, const BinaryMask& mask,
                                const StructureOptions& options = {});

/// Arc-length resampling of a closed polyline into round(perimeter/spacing)
/// points starting at the first vertex.
std::vector<Point2> resample_closed(const std::vector<Point2>& polyline,
                                    double spacing);

double closed_perimeter(const std::vector<Point2>& polyline);

/// Signed shoelace area in raw (x, y); negative for contours that run
/// counterclockwise on screen.
double signed_area(const std::vector<Point2>& polyline);

}  // namespace objstitch
