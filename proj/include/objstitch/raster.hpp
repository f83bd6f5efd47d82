#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace objstitch {

/// Continuous image coordinate. Origin at the top-left pixel center, x to the
/// right, y downward.
using Point2 = Eigen::Vector2d;

/// Row-major image with 1 or 3 channels of intensities in [0,1].
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, float fill = 0.0f);
  Raster(int width, int height, int channels, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  void set(int x, int y, int c, float v) {
    data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c] = v;
  }

  std::span<const float> data() const noexcept { return data_; }

  bool contains(const Point2& p) const noexcept {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width_ - 1 &&
           p.y() <= height_ - 1;
  }

  /// Copy with 3 channels; grayscale is replicated.
  Raster to_rgb() const;
  /// Luma (Rec. 601) single-channel copy.
  Raster to_gray() const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Decodes a PNG or JPEG file. Grayscale stays single-channel; anything with
/// color becomes 3 channels (alpha is dropped).
Raster load_raster(const std::filesystem::path& path);

/// Encodes as an 8-bit PNG with the raster's channel count.
void write_raster(const Raster& img, const std::filesystem::path& path);

/// Encodes a 3-channel raster plus a coverage channel as an 8-bit RGBA PNG.
void write_raster_rgba(const Raster& img, std::span<const float> alpha,
                       const std::filesystem::path& path);

/// Bilinear interpolation of the four pixels surrounding p, per channel.
/// Throws when p lies outside [0,w-1]x[0,h-1].
Eigen::VectorXd sample_bilinear(const Raster& img, const Point2& p);

/// Same as sample_bilinear for a single channel, without bounds checks
/// beyond clamping to the image domain.
double sample_bilinear_clamped(const Raster& img, double x, double y, int c);

}  // namespace objstitch
