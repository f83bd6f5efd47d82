#include "objstitch/features.hpp"

#include "objstitch/error.hpp"
#include "objstitch/similarity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

namespace objstitch {

namespace {

constexpr const char* kModule = "features";

// ---------------------------------------------------------------------------
// Image pyramid and corner detection

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  float operator()(int x, int y) const {
    return v[static_cast<std::size_t>(y) * width + x];
  }
  float& operator()(int x, int y) {
    return v[static_cast<std::size_t>(y) * width + x];
  }
  float bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, width - 1.0);
    y = std::clamp(y, 0.0, height - 1.0);
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0, fy = y - y0;
    return static_cast<float>(
        (1 - fy) * ((1 - fx) * (*this)(x0, y0) + fx * (*this)(x1, y0)) +
        fy * ((1 - fx) * (*this)(x0, y1) + fx * (*this)(x1, y1)));
  }
};

Plane gaussian_blur(const Plane& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  float sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  Plane tmp{in.width, in.height, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * in(clampi(x + i, in.width), y);
      }
      tmp(x, y) = acc;
    }
  }
  Plane out{in.width, in.height, std::vector<float>(in.v.size())};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      float acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp(x, clampi(y + i, in.height));
      }
      out(x, y) = acc;
    }
  }
  return out;
}

Plane downsample(const Plane& in) {
  Plane out{in.width / 2, in.height / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out(x, y) = 0.25f * (in(2 * x, 2 * y) + in(2 * x + 1, 2 * y) +
                           in(2 * x, 2 * y + 1) + in(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

constexpr int kPatchRadius = 15;
constexpr int kDescriptorBits = 256;

struct Keypoint {
  double x = 0;  // level coordinates
  double y = 0;
  int level = 0;
  float response = 0;
  double angle = 0;
  std::array<std::uint64_t, kDescriptorBits / 64> bits{};
};

// Fixed sampling pattern for the binary tests, inside a disc of radius 12.
const std::vector<std::array<float, 4>>& test_pattern() {
  static const std::vector<std::array<float, 4>> pattern = [] {
    std::mt19937 rng(0x5eedu);
    std::vector<std::array<float, 4>> out;
    out.reserve(kDescriptorBits);
    auto coord = [&rng] {
      // Box-Muller on raw draws keeps the pattern identical across libstdc++
      // versions.
      const double u1 = (rng() + 1.0) / 4294967297.0;
      const double u2 = rng() / 4294967296.0;
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
    };
    while (static_cast<int>(out.size()) < kDescriptorBits) {
      std::array<float, 4> t{};
      for (auto& c : t) c = static_cast<float>(std::clamp(coord() * 5.0, -12.0, 12.0));
      if (t[0] == t[2] && t[1] == t[3]) continue;
      out.push_back(t);
    }
    return out;
  }();
  return pattern;
}

std::vector<Keypoint> detect_level(const Plane& img, int level, int budget,
                                   const DetectionConfig& cfg) {
  const int w = img.width, h = img.height;
  const int border = kPatchRadius + 2;
  if (w <= 2 * border || h <= 2 * border) return {};
  // Structure tensor from central differences, 5x5 box window.
  std::vector<float> ixx(img.v.size()), iyy(img.v.size()), ixy(img.v.size());
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const float gx = 0.5f * (img(x + 1, y) - img(x - 1, y));
      const float gy = 0.5f * (img(x, y + 1) - img(x, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }
  Plane response{w, h, std::vector<float>(img.v.size(), 0.0f)};
  float best = 0;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      float a = 0, b = 0, c = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const std::size_t i = static_cast<std::size_t>(y + dy) * w + x + dx;
          a += ixx[i];
          b += ixy[i];
          c += iyy[i];
        }
      }
      // Smaller eigenvalue of [[a,b],[b,c]] (Shi-Tomasi).
      const float r = 0.5f * (a + c) - std::sqrt(0.25f * (a - c) * (a - c) + b * b);
      response(x, y) = r;
      best = std::max(best, r);
    }
  }
  if (best <= 0) return {};
  const float floor = static_cast<float>(cfg.corner_quality) * best;
  std::vector<Keypoint> candidates;
  const int nms = std::max(1, cfg.min_distance);
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const float r = response(x, y);
      if (r < floor) continue;
      bool is_max = true;
      for (int dy = -nms; dy <= nms && is_max; ++dy) {
        for (int dx = -nms; dx <= nms; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const float o = response(xx, yy);
          // Ties broken by raster order so plateaus keep exactly one point.
          if (o > r || (o == r && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({double(x), double(y), level, r, 0.0, {}});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Keypoint& l, const Keypoint& r) {
                     return l.response > r.response;
                   });
  if (static_cast<int>(candidates.size()) > budget) candidates.resize(budget);
  return candidates;
}

void describe(const Plane& img, Keypoint& kp) {
  // Orientation from the intensity centroid of the patch.
  double m10 = 0, m01 = 0;
  const int x = static_cast<int>(kp.x), y = static_cast<int>(kp.y);
  for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
    for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
      if (dx * dx + dy * dy > kPatchRadius * kPatchRadius) continue;
      const double v = img(x + dx, y + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  kp.angle = std::atan2(m01, m10);
  const double c = std::cos(kp.angle), s = std::sin(kp.angle);
  const auto& pattern = test_pattern();
  kp.bits.fill(0);
  for (int i = 0; i < kDescriptorBits; ++i) {
    const auto& t = pattern[i];
    const double ax = kp.x + c * t[0] - s * t[1];
    const double ay = kp.y + s * t[0] + c * t[1];
    const double bx = kp.x + c * t[2] - s * t[3];
    const double by = kp.y + s * t[2] + c * t[3];
    if (img.bilinear(ax, ay) < img.bilinear(bx, by)) {
      kp.bits[i / 64] |= std::uint64_t{1} << (i % 64);
    }
  }
}

std::vector<Keypoint> detect_and_describe(const Raster& raster,
                                          const DetectionConfig& cfg) {
  const Raster gray = raster.to_gray();
  Plane base{gray.width(), gray.height(),
             std::vector<float>(gray.data().begin(), gray.data().end())};
  std::vector<Keypoint> all;
  Plane level_img = gaussian_blur(base, 1.0);
  const int levels = std::max(1, cfg.pyramid_levels);
  int budget = cfg.max_corners;
  for (int level = 0; level < levels; ++level) {
    // Halve the budget per octave; the finest level gets the largest share.
    const int share = level + 1 == levels ? budget : std::max(1, budget / 2);
    auto kps = detect_level(level_img, level, share, cfg);
    const Plane smooth = gaussian_blur(level_img, 1.2);
    for (auto& kp : kps) describe(smooth, kp);
    budget -= static_cast<int>(kps.size());
    all.insert(all.end(), kps.begin(), kps.end());
    if (budget <= 0 || level + 1 == levels) break;
    level_img = gaussian_blur(downsample(level_img), 0.8);
  }
  return all;
}

Point2 to_base(const Keypoint& kp) {
  const double f = std::ldexp(1.0, kp.level);
  return {(kp.x + 0.5) * f - 0.5, (kp.y + 0.5) * f - 0.5};
}

int hamming(const Keypoint& a, const Keypoint& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += std::popcount(a.bits[i] ^ b.bits[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Homography estimation

Eigen::Matrix3d normalizing_transform(const std::vector<Point2>& pts) {
  Point2 mean = Point2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0 ? std::numbers::sqrt2 / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

bool nearly_collinear(const Point2& a, const Point2& b, const Point2& c) {
  const Point2 u = b - a, v = c - a;
  const double cross = std::abs(u.x() * v.y() - u.y() * v.x());
  return cross <= 1e-6 * u.norm() * v.norm() || u.norm() < 1e-9 || v.norm() < 1e-9;
}

bool degenerate_sample(const std::array<const Match*, 4>& s) {
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (nearly_collinear(s[i]->p, s[j]->p, s[k]->p) ||
            nearly_collinear(s[i]->q, s[j]->q, s[k]->q)) {
          return true;
        }
      }
    }
  }
  return false;
}

double reprojection_error(const Homography& h, const Match& m) {
  const Eigen::Vector3d x = h * m.p.homogeneous();
  if (!(std::abs(x.z()) > 1e-12)) return std::numeric_limits<double>::infinity();
  return (x.hnormalized() - m.q).norm();
}

bool match_less(const Match& a, const Match& b) {
  return std::tie(a.p.x(), a.p.y(), a.q.x(), a.q.y(), a.weight) <
         std::tie(b.p.x(), b.p.y(), b.q.x(), b.q.y(), b.weight);
}

struct Score {
  std::size_t inliers = 0;
  double error = std::numeric_limits<double>::infinity();

  bool better_than(const Score& o) const {
    return inliers > o.inliers || (inliers == o.inliers && error < o.error);
  }
};

Score score(const Homography& h, const std::vector<Match>& ms, double threshold) {
  Score s{0, 0.0};
  for (const auto& m : ms) {
    const double e = reprojection_error(h, m);
    if (e <= threshold) {
      ++s.inliers;
      s.error += e * e;
    }
  }
  return s;
}

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, kModule, what);
}

double parse_double(std::string_view token, std::size_t line,
                    const std::filesystem::path& path) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
    fail(ErrorKind::bad_input, path.string() + ":" + std::to_string(line) +
                                   ": malformed number '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

Point2 apply_homography(const Homography& h, const Point2& p) {
  return (h * p.homogeneous()).hnormalized();
}

Homography normalize_homography(const Homography& h) {
  if (!h.allFinite() || std::abs(h.determinant()) < 1e-14 ||
      std::abs(h(2, 2)) < 1e-14) {
    fail(ErrorKind::degenerate, "singular homography");
  }
  return h / h(2, 2);
}

Homography fit_homography_dlt(const std::vector<Match>& matches) {
  if (matches.size() < 4) fail(ErrorKind::degenerate, "DLT needs at least 4 matches");
  std::vector<Point2> ps, qs;
  ps.reserve(matches.size());
  qs.reserve(matches.size());
  for (const auto& m : matches) {
    ps.push_back(m.p);
    qs.push_back(m.q);
  }
  const Eigen::Matrix3d tp = normalizing_transform(ps);
  const Eigen::Matrix3d tq = normalizing_transform(qs);
  Eigen::MatrixXd a(2 * matches.size(), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector3d p = tp * ps[i].homogeneous();
    const Eigen::Vector3d q = tq * qs[i].homogeneous();
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  return normalize_homography(tq.inverse() * hn * tp);
}

RansacResult estimate_homography_ransac(const MatchSet& m, double threshold,
                                        int iterations, std::uint64_t seed) {
  if (m.size() < 4) {
    fail(ErrorKind::insufficient_overlap,
         "homography needs at least 4 matches, got " + std::to_string(m.size()));
  }
  std::vector<Match> sorted = m.matches;
  std::stable_sort(sorted.begin(), sorted.end(), match_less);
  const std::size_t n = sorted.size();

  std::mt19937_64 rng(seed);
  Homography best_h = Homography::Identity();
  Score best;
  best.inliers = 0;
  bool found = false;
  int budget = iterations;
  for (int it = 0; it < budget; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(rng() % n);
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      }
    }
    const std::array<const Match*, 4> sample{&sorted[idx[0]], &sorted[idx[1]],
                                             &sorted[idx[2]], &sorted[idx[3]]};
    if (degenerate_sample(sample)) continue;
    Homography h;
    try {
      h = fit_homography_dlt({*sample[0], *sample[1], *sample[2], *sample[3]});
    } catch (const Error&) {
      continue;
    }
    const Score s = score(h, sorted, threshold);
    if (!found || s.better_than(best)) {
      found = true;
      best = s;
      best_h = h;
      // Adaptive stop at 99.9% confidence of having drawn an all-inlier sample.
      const double ratio = static_cast<double>(s.inliers) / static_cast<double>(n);
      const double p_good = std::pow(ratio, 4);
      if (p_good >= 1.0) {
        budget = std::min(budget, it + 1);
      } else if (p_good > 0) {
        const double needed = std::log(1e-3) / std::log1p(-p_good);
        if (needed < budget) budget = std::max(it + 1, static_cast<int>(std::ceil(needed)));
      }
    }
  }
  if (!found) fail(ErrorKind::degenerate, "every minimal sample was degenerate");

  auto collect = [&](const Homography& h) {
    std::vector<Match> in;
    for (const auto& mm : sorted) {
      if (reprojection_error(h, mm) <= threshold) in.push_back(mm);
    }
    return in;
  };
  std::vector<Match> inliers = collect(best_h);
  for (int round = 0; round < 5 && inliers.size() >= 4; ++round) {
    Homography refined;
    try {
      refined = fit_homography_dlt(inliers);
    } catch (const Error&) {
      break;
    }
    const Score s = score(refined, sorted, threshold);
    if (s.inliers < best.inliers) break;
    const bool changed = s.inliers != best.inliers || (refined - best_h).norm() > 1e-12;
    best = s;
    best_h = refined;
    inliers = collect(best_h);
    if (!changed) break;
  }
  return {best_h, MatchSet{m.pair_id, std::move(inliers)}};
}

MatchSet detect_and_match(const Raster& a, const Raster& b,
                          const DetectionConfig& config) {
  if (a.empty() || b.empty()) fail(ErrorKind::bad_input, "empty image");
  const auto ka = detect_and_describe(a, config);
  const auto kb = detect_and_describe(b, config);
  if (ka.empty() || kb.empty()) {
    fail(ErrorKind::insufficient_overlap, "no corners detected");
  }
  auto nearest = [](const Keypoint& k, const std::vector<Keypoint>& pool) {
    int best = std::numeric_limits<int>::max(), second = best;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const int d = hamming(k, pool[j]);
      if (d < best) {
        second = best;
        best = d;
        arg = j;
      } else if (d < second) {
        second = d;
      }
    }
    return std::tuple{arg, best, second};
  };
  MatchSet raw;
  for (std::size_t i = 0; i < ka.size(); ++i) {
    const auto [j, d1, d2] = nearest(ka[i], kb);
    if (d2 == std::numeric_limits<int>::max() ||
        static_cast<double>(d1) >= config.ratio * static_cast<double>(d2)) {
      continue;
    }
    const auto back = std::get<0>(nearest(kb[j], ka));
    if (back != i) continue;
    raw.matches.push_back({to_base(ka[i]), to_base(kb[j]), 1.0});
  }
  const int floor = std::max(4, config.min_inliers);
  if (static_cast<int>(raw.size()) < floor) {
    fail(ErrorKind::insufficient_overlap,
         "only " + std::to_string(raw.size()) + " putative matches");
  }
  auto result = estimate_homography_ransac(raw, config.ransac_threshold,
                                           config.ransac_iterations, config.seed);
  if (static_cast<int>(result.inliers.size()) < floor) {
    fail(ErrorKind::insufficient_overlap,
         "only " + std::to_string(result.inliers.size()) + " inlier matches");
  }
  return std::move(result.inliers);
}

SimilarityParams decompose_similarity(const Homography& h, double width,
                                      double height) {
  const Homography hn = normalize_homography(h);
  const std::array<Point2, 4> corners{Point2(0, 0), Point2(width - 1, 0),
                                      Point2(0, height - 1),
                                      Point2(width - 1, height - 1)};
  std::array<Point2, 4> mapped{};
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d x = hn * corners[i].homogeneous();
    if (!(std::abs(x.z()) > 1e-12)) fail(ErrorKind::degenerate, "corner maps to infinity");
    mapped[i] = x.hnormalized();
  }
  const auto s = fit_similarity<double>(corners, mapped);
  return {s.scale(), s.angle()};
}

MatchSet read_matches(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  MatchSet out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream tokens(line);
    std::vector<std::string> fields;
    for (std::string t; tokens >> t;) fields.push_back(t);
    if (fields.empty() || fields.front().starts_with('#')) continue;
    if (fields.size() != 4 && fields.size() != 5) {
      fail(ErrorKind::bad_input, path.string() + ":" + std::to_string(number) +
                                     ": expected 4 or 5 fields, got " +
                                     std::to_string(fields.size()));
    }
    Match m;
    m.p = {parse_double(fields[0], number, path), parse_double(fields[1], number, path)};
    m.q = {parse_double(fields[2], number, path), parse_double(fields[3], number, path)};
    m.weight = fields.size() == 5 ? parse_double(fields[4], number, path) : 1.0;
    if (m.weight < 0) {
      fail(ErrorKind::bad_input,
           path.string() + ":" + std::to_string(number) + ": negative weight");
    }
    out.matches.push_back(m);
  }
  return out;
}

void write_matches(const MatchSet& m, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  for (const auto& mm : m.matches) {
    std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g\n", mm.p.x(), mm.p.y(),
                 mm.q.x(), mm.q.y(), mm.weight);
  }
  if (std::fclose(f) != 0) fail(ErrorKind::io, "cannot write " + path.string());
}

std::string format_homography(const Homography& h) {
  const Homography hn = normalize_homography(h);
  std::string out;
  char buf[32];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", hn(r, c));
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  return out;
}

}  // namespace objstitch
