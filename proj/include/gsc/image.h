#pragma once

#include "gsc/gaussian.h"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace gsc {

/// Float image, row 0 at the top, channels interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const {
    return width_;
  }
  int height() const {
    return height_;
  }
  int channels() const {
    return channels_;
  }
  std::size_t pixelCount() const {
    return static_cast<std::size_t>(width_) * height_;
  }
  bool empty() const {
    return data_.empty();
  }

  float& at(int x, int y, int c = 0) {
    return data_[offset(x, y, c)];
  }
  float at(int x, int y, int c = 0) const {
    return data_[offset(x, y, c)];
  }

  // Flat pixel index p = y * width + x.
  Vec3 rgb(std::size_t p) const;
  void setRgb(std::size_t p, const Vec3& v);
  float value(std::size_t p, int c = 0) const {
    return data_[p * channels_ + c];
  }
  float& value(std::size_t p, int c = 0) {
    return data_[p * channels_ + c];
  }

  std::vector<float>& data() {
    return data_;
  }
  const std::vector<float>& data() const {
    return data_;
  }

  bool sameShape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Portable float map, 1 ("Pf") or 3 ("PF") channels. Writes little-endian
/// (scale -1); reads either byte order. Rows are stored bottom-up on disk.
Image readPfm(const std::filesystem::path& path);
void writePfm(const Image& image, const std::filesystem::path& path);

/// Linear <-> 8-bit sRGB transfer.
std::uint8_t encodeSrgb(float linear);
float decodeSrgb(std::uint8_t encoded);

/// Clamps to [0, 1] and writes 8-bit sRGB, grey or RGB by channel count.
void writePng(const Image& image, const std::filesystem::path& path);

/// Reads an 8-bit PNG (grey, grey+alpha, RGB or RGBA; alpha dropped) and
/// decodes sRGB to linear. Output has 1 or 3 channels.
Image readPng(const std::filesystem::path& path);

/// Dispatches on the extension (.pfm or .png).
Image readImage(const std::filesystem::path& path);
void writeImage(const Image& image, const std::filesystem::path& path);

/// Image with every value clamped to [0, 1] and passed through the 8-bit
/// sRGB encoding, scaled back to [0, 1].
Image toDisplay(const Image& image);

/// Mean of the per-channel absolute differences over pixels with
/// mask > 0.5 (all pixels when no mask). Throws InvalidInput on a shape
/// mismatch.
double meanAbsDifference(const Image& a, const Image& b, const Image* mask = nullptr);

/// 10 log10(1 / MSE) over (masked) pixels; +infinity for identical images.
/// Throws InvalidInput on a shape mismatch or an empty mask.
double psnr(const Image& a, const Image& b, const Image* mask = nullptr);

} // namespace gsc
