#include "objstitch/raster.hpp"

#include "objstitch/error.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

namespace objstitch {

namespace {

constexpr const char* kModule = "imgcore";

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, kModule, what);
}

float to_unit(unsigned char v) { return static_cast<float>(v) / 255.0f; }

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 &&
         bytes[2] == 0xFF;
}

Raster decode_png(const std::vector<unsigned char>& bytes,
                  const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorKind::bad_input, "png decode failed for " + name + ": " +
                                   image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    fail(ErrorKind::bad_input, "zero-dimension image " + name);
  }
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::bad_input, "png decode failed for " + name + ": " + msg);
  }
  std::vector<float> data(buffer.size());
  std::transform(buffer.begin(), buffer.end(), data.begin(), to_unit);
  return Raster(static_cast<int>(image.width), static_cast<int>(image.height),
                channels, std::move(data));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_quiet(j_common_ptr cinfo, int level) {
  if (level < 0) ++cinfo->err->num_warnings;
}

// Kept free of non-trivial locals so the longjmp path skips no destructors.
bool decode_jpeg_into(const std::vector<unsigned char>& bytes,
                      std::vector<unsigned char>& pixels, int& width,
                      int& height, int& channels, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_quiet;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space =
      cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  pixels.resize(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                       width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  const bool clean = err.base.num_warnings == 0;
  if (!clean) std::snprintf(message, JMSG_LENGTH_MAX, "corrupt or truncated data");
  jpeg_destroy_decompress(&cinfo);
  return clean;
}

Raster decode_jpeg(const std::vector<unsigned char>& bytes,
                   const std::string& name) {
  std::vector<unsigned char> pixels;
  int width = 0, height = 0, channels = 0;
  std::array<char, JMSG_LENGTH_MAX> message{};
  if (!decode_jpeg_into(bytes, pixels, width, height, channels,
                        message.data())) {
    fail(ErrorKind::bad_input,
         "jpeg decode failed for " + name + ": " + message.data());
  }
  if (width == 0 || height == 0) {
    fail(ErrorKind::bad_input, "zero-dimension image " + name);
  }
  std::vector<float> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(), to_unit);
  return Raster(width, height, channels, std::move(data));
}

void encode_png(const std::vector<unsigned char>& bytes, int width, int height,
                png_uint_32 format, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0,
                               nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::io, "cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace

Raster::Raster(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    fail(ErrorKind::bad_input, "invalid raster shape");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster::Raster(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels),
      data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    fail(ErrorKind::bad_input, "invalid raster shape");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    fail(ErrorKind::bad_input, "raster data length does not match its shape");
  }
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      fail(ErrorKind::bad_input, "raster intensity outside [0,1]");
    }
  }
}

Raster Raster::to_rgb() const {
  if (channels_ == 3) return *this;
  std::vector<float> out(data_.size() * 3);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = data_[i];
  }
  return Raster(width_, height_, 3, std::move(out));
}

Raster Raster::to_gray() const {
  if (channels_ == 1) return *this;
  std::vector<float> out(static_cast<std::size_t>(width_) * height_);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = 0.299f * data_[3 * i] + 0.587f * data_[3 * i + 1] +
                    0.114f * data_[3 * i + 2];
    out[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return Raster(width_, height_, 1, std::move(out));
}

Raster load_raster(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (is_png(bytes)) return decode_png(bytes, path.string());
  if (is_jpeg(bytes)) return decode_jpeg(bytes, path.string());
  fail(ErrorKind::bad_input, "unsupported image format: " + path.string());
}

void write_raster(const Raster& img, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), to_byte);
  encode_png(bytes, img.width(), img.height(),
             img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB, path);
}

void write_raster_rgba(const Raster& img, std::span<const float> alpha,
                       const std::filesystem::path& path) {
  const Raster rgb = img.to_rgb();
  const std::size_t pixels = static_cast<std::size_t>(img.width()) * img.height();
  if (alpha.size() != pixels) {
    fail(ErrorKind::bad_input, "alpha plane does not match raster size");
  }
  std::vector<unsigned char> bytes(pixels * 4);
  const auto src = rgb.data();
  for (std::size_t i = 0; i < pixels; ++i) {
    bytes[4 * i] = to_byte(src[3 * i]);
    bytes[4 * i + 1] = to_byte(src[3 * i + 1]);
    bytes[4 * i + 2] = to_byte(src[3 * i + 2]);
    bytes[4 * i + 3] = to_byte(alpha[i]);
  }
  encode_png(bytes, img.width(), img.height(), PNG_FORMAT_RGBA, path);
}

double sample_bilinear_clamped(const Raster& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return (1.0 - fy) * top + fy * bottom;
}

Eigen::VectorXd sample_bilinear(const Raster& img, const Point2& p) {
  if (!p.allFinite() || !img.contains(p)) {
    fail(ErrorKind::bad_input, "sample point outside image");
  }
  Eigen::VectorXd out(img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    out[c] = sample_bilinear_clamped(img, p.x(), p.y(), c);
  }
  return out;
}

}  // namespace objstitch
