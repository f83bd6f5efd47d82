#include "objstitch/masks.hpp"

#include "objstitch/error.hpp"
#include "objstitch/similarity.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>

namespace objstitch {

namespace {

constexpr const char* kModule = "masks";

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, kModule, what);
}

// Clockwise on screen, starting west.
constexpr std::array<std::array<int, 2>, 8> kRing{{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

int ring_index(int dx, int dy) {
  for (int i = 0; i < 8; ++i) {
    if (kRing[i][0] == dx && kRing[i][1] == dy) return i;
  }
  return -1;
}

BinaryMask to_mask(const Raster& img) {
  const Raster gray = img.to_gray();
  BinaryMask m(gray.width(), gray.height());
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) {
      m.set(x, y, std::lround(gray.at(x, y) * 255.0f) >= 128);
    }
  }
  return m;
}

// Labels 8-connected components; returns the label image and per-label areas.
std::pair<std::vector<int>, std::vector<std::size_t>> label_components(
    const BinaryMask& mask) {
  std::vector<int> labels(mask.bits.size(), -1);
  std::vector<std::size_t> areas;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.bits[i] || labels[i] >= 0) continue;
      const int label = static_cast<int>(areas.size());
      areas.push_back(0);
      labels[i] = label;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        ++areas[label];
        for (const auto& d : kRing) {
          const int nx = cx + d[0], ny = cy + d[1];
          if (!mask(nx, ny)) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * mask.width + nx;
          if (labels[j] >= 0) continue;
          labels[j] = label;
          queue.emplace_back(nx, ny);
        }
      }
    }
  }
  return {std::move(labels), std::move(areas)};
}

// Chamfer (3-4) distance to the nearest unset pixel or the image border.
std::vector<int> chamfer_distance(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  constexpr int kInf = std::numeric_limits<int>::max() / 4;
  std::vector<int> d(mask.bits.size());
  auto at = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return d[static_cast<std::size_t>(y) * w + x];
  };
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask.bits[i] ? kInf : 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int& v = d[static_cast<std::size_t>(y) * w + x];
      if (!v) continue;
      v = std::min({v, at(x - 1, y) + 3, at(x, y - 1) + 3, at(x - 1, y - 1) + 4,
                    at(x + 1, y - 1) + 4});
    }
  }
  for (int y = h - 1; y >= 0; --y) {
    for (int x = w - 1; x >= 0; --x) {
      int& v = d[static_cast<std::size_t>(y) * w + x];
      if (!v) continue;
      v = std::min({v, at(x + 1, y) + 3, at(x, y + 1) + 3, at(x + 1, y + 1) + 4,
                    at(x - 1, y + 1) + 4});
    }
  }
  return d;
}

}  // namespace

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

void MaskSet::add(BinaryMask m) {
  if (m.width != width || m.height != height) {
    fail(ErrorKind::bad_input, "mask dimensions " + std::to_string(m.width) + "x" +
                                   std::to_string(m.height) + " differ from image " +
                                   std::to_string(width) + "x" + std::to_string(height));
  }
  areas.push_back(m.area());
  masks.push_back(std::move(m));
}

MaskSet load_mask_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::bad_input, "malformed manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("image") || !doc["image"].is_string() ||
      !doc.contains("masks") || !doc["masks"].is_array()) {
    fail(ErrorKind::bad_input, "manifest " + path.string() +
                                   " needs a string 'image' and an array 'masks'");
  }
  const auto base = path.parent_path();
  const Raster image = load_raster(base / doc["image"].get<std::string>());
  MaskSet out;
  out.width = image.width();
  out.height = image.height();
  for (const auto& entry : doc["masks"]) {
    if (!entry.is_object() || !entry.contains("file") || !entry["file"].is_string()) {
      fail(ErrorKind::bad_input, "manifest entry without a 'file' string");
    }
    out.add(to_mask(load_raster(base / entry["file"].get<std::string>())));
  }
  return out;
}

MaskSet filter_small_masks(const MaskSet& ms, double min_area_fraction) {
  if (!(min_area_fraction >= 0.0 && min_area_fraction < 1.0)) {
    fail(ErrorKind::bad_input, "min_area_fraction must lie in [0,1)");
  }
  const double threshold =
      min_area_fraction * static_cast<double>(ms.width) * static_cast<double>(ms.height);
  MaskSet out;
  out.image_id = ms.image_id;
  out.width = ms.width;
  out.height = ms.height;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (static_cast<double>(ms.areas[i]) >= threshold) {
      out.masks.push_back(ms.masks[i]);
      out.areas.push_back(ms.areas[i]);
    }
  }
  return out;
}

BinaryMask connected_component(const BinaryMask& mask, int x, int y) {
  BinaryMask out(mask.width, mask.height);
  if (!mask(x, y)) return out;
  std::deque<std::pair<int, int>> queue{{x, y}};
  out.set(x, y);
  while (!queue.empty()) {
    const auto [cx, cy] = queue.front();
    queue.pop_front();
    for (const auto& d : kRing) {
      const int nx = cx + d[0], ny = cy + d[1];
      if (mask(nx, ny) && !out(nx, ny)) {
        out.set(nx, ny);
        queue.emplace_back(nx, ny);
      }
    }
  }
  return out;
}

Contour trace_contour(const BinaryMask& mask) {
  const auto [labels, areas] = label_components(mask);
  if (areas.empty()) fail(ErrorKind::bad_input, "cannot trace an empty mask");
  const int largest = static_cast<int>(
      std::max_element(areas.begin(), areas.end()) - areas.begin());
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < mask.width && y < mask.height &&
           labels[static_cast<std::size_t>(y) * mask.width + x] == largest;
  };
  // First pixel in raster order; its west neighbour is outside the component.
  int sx = -1, sy = -1;
  for (int y = 0; y < mask.height && sx < 0; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (inside(x, y)) {
        sx = x;
        sy = y;
        break;
      }
    }
  }
  std::vector<Point2> clockwise{Point2(sx, sy)};
  int cx = sx, cy = sy;
  int back = 0;  // ring index, relative to the current pixel, of the backtrack
  const int start_back = back;
  const std::size_t limit = 4 * areas[largest] + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int dir = (back + k) % 8;
      if (inside(cx + kRing[dir][0], cy + kRing[dir][1])) {
        found = dir;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const int prev = (found + 7) % 8;
    const int bx = cx + kRing[prev][0], by = cy + kRing[prev][1];
    cx += kRing[found][0];
    cy += kRing[found][1];
    back = ring_index(bx - cx, by - cy);
    if (cx == sx && cy == sy && back == start_back) break;
    clockwise.emplace_back(cx, cy);
  }
  // Jacob's criterion can revisit the start with another backtrack first.
  while (clockwise.size() > 1 && clockwise.back() == clockwise.front()) clockwise.pop_back();
  Contour out;
  out.points.reserve(clockwise.size());
  out.points.push_back(clockwise.front());
  for (auto it = clockwise.rbegin(); it + 1 != clockwise.rend(); ++it) {
    if (*it != out.points.back()) out.points.push_back(*it);
  }
  while (out.points.size() > 1 && out.points.back() == out.points.front()) {
    out.points.pop_back();
  }
  if (out.points.size() < 3) {
    fail(ErrorKind::degenerate, "component too small for a contour (" +
                                    std::to_string(out.points.size()) + " points)");
  }
  return out;
}

double closed_perimeter(const std::vector<Point2>& polyline) {
  double total = 0;
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    total += (polyline[(i + 1) % polyline.size()] - polyline[i]).norm();
  }
  return total;
}

double signed_area(const std::vector<Point2>& polyline) {
  double twice = 0;
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    const Point2& a = polyline[i];
    const Point2& b = polyline[(i + 1) % polyline.size()];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * twice;
}

std::vector<Point2> resample_closed(const std::vector<Point2>& polyline,
                                    double spacing) {
  const double perimeter = closed_perimeter(polyline);
  if (!(spacing > 0) || !(perimeter >= 2 * spacing)) {
    fail(ErrorKind::degenerate, "contour perimeter " + std::to_string(perimeter) +
                                    " shorter than twice the spacing");
  }
  const auto count = static_cast<std::size_t>(std::max(2L, std::lround(perimeter / spacing)));
  const double step = perimeter / static_cast<double>(count);
  std::vector<Point2> out;
  out.reserve(count);
  std::size_t seg = 0;
  double seg_start = 0;  // arc length at polyline[seg]
  for (std::size_t k = 0; k < count; ++k) {
    const double target = step * static_cast<double>(k);
    double seg_len = (polyline[(seg + 1) % polyline.size()] - polyline[seg]).norm();
    while (seg_start + seg_len < target && seg + 1 < polyline.size()) {
      seg_start += seg_len;
      ++seg;
      seg_len = (polyline[(seg + 1) % polyline.size()] - polyline[seg]).norm();
    }
    const Point2& a = polyline[seg];
    const Point2& b = polyline[(seg + 1) % polyline.size()];
    const double t = seg_len > 0 ? std::clamp((target - seg_start) / seg_len, 0.0, 1.0) : 0.0;
    out.push_back(a + t * (b - a));
  }
  return out;
}

ObjectStructure build_structure(const Contour& contour, const BinaryMask& mask,
                                const StructureOptions& options) {
  if (contour.points.size() < 3) fail(ErrorKind::degenerate, "contour has fewer than 3 points");
  const Point2& seed = contour.points.front();
  BinaryMask component =
      connected_component(mask, static_cast<int>(std::lround(seed.x())),
                          static_cast<int>(std::lround(seed.y())));
  if (component.area() == 0) component = mask;
  if (component.area() == 0) fail(ErrorKind::bad_input, "empty mask");

  ObjectStructure s;
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < component.height; ++y) {
    for (int x = 0; x < component.width; ++x) {
      if (component(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  s.center = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
  if (!component(static_cast<int>(std::lround(s.center.x())),
                 static_cast<int>(std::lround(s.center.y())))) {
    const auto dist = chamfer_distance(component);
    const auto deepest = std::max_element(dist.begin(), dist.end()) - dist.begin();
    s.center = {static_cast<double>(deepest % component.width),
                static_cast<double>(deepest / component.width)};
  }

  s.samples = resample_closed(contour.points, options.spacing);
  const std::size_t count = s.samples.size();
  s.local_coords.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Point2& from = s.samples[i];
    const Point2& next = s.samples[(i + 1) % count];
    if ((from - s.center).norm() < 1e-9 * options.spacing) {
      fail(ErrorKind::degenerate, "object center coincides with a boundary sample");
    }
    s.local_coords.push_back(local_coordinates<double>(s.center, from, next));
  }
  s.weights.assign(count, 1.0);
  if (options.in_overlap) {
    for (std::size_t i = 0; i < count; ++i) {
      if (options.in_overlap(s.samples[i])) s.weights[i] = options.overlap_weight;
    }
  }
  return s;
}

}  // namespace objstitch
