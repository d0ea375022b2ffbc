#include "gsc/image.h"

#include "binary_io.h"
#include "gsc/errors.h"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

namespace gsc {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1 || channels < 1 || channels > 4) {
    throw InvalidInput(fmt::format("invalid image shape {}x{}x{}", width, height, channels));
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Vec3 Image::rgb(std::size_t p) const {
  const float* v = &data_[p * channels_];
  return channels_ >= 3 ? Vec3(v[0], v[1], v[2]) : Vec3::Constant(v[0]);
}

void Image::setRgb(std::size_t p, const Vec3& v) {
  float* out = &data_[p * channels_];
  if (channels_ >= 3) {
    out[0] = static_cast<float>(v.x());
    out[1] = static_cast<float>(v.y());
    out[2] = static_cast<float>(v.z());
  } else {
    out[0] = static_cast<float>(v.mean());
  }
}

// ---------------------------------------------------------------------------
// PFM

namespace {

std::string readToken(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c) && std::isspace(static_cast<unsigned char>(c))) {
  }
  if (!in) {
    return token;
  }
  token.push_back(c);
  while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) {
    token.push_back(c);
  }
  // A single whitespace byte terminates the header; the stream already
  // consumed it.
  return token;
}

} // namespace

Image readPfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open {}", path.string()));
  }
  const std::string magic = readToken(in);
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw IoError(fmt::format("{} is not a PFM file", path.string()));
  }
  int width = 0;
  int height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(readToken(in));
    height = std::stoi(readToken(in));
    scale = std::stod(readToken(in));
  } catch (const std::exception&) {
    throw IoError(fmt::format("malformed PFM header in {}", path.string()));
  }
  if (width < 1 || height < 1 || width > 65536 || height > 65536 || scale == 0.0) {
    throw IoError(fmt::format("invalid PFM header in {}", path.string()));
  }
  const bool little = scale < 0.0;
  Image image(width, height, channels);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        float v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
          throw IoError(fmt::format("truncated PFM data in {}", path.string()));
        }
        if ((std::endian::native == std::endian::little) != little) {
          v = detail::byteSwap(v);
        }
        image.at(x, y, c) = v;
      }
    }
  }
  return image;
}

void writePfm(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw InvalidInput(fmt::format("PFM supports 1 or 3 channels, got {}", image.channels()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write {}", path.string()));
  }
  out << (image.channels() == 3 ? "PF" : "Pf") << '\n' << image.width() << ' ' << image.height() << '\n' << "-1.0\n";
  for (int y = image.height() - 1; y >= 0; --y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        detail::writeLittle<float>(out, image.at(x, y, c));
      }
    }
  }
  if (!out) {
    throw IoError(fmt::format("failed writing {}", path.string()));
  }
}

// ---------------------------------------------------------------------------
// sRGB and PNG

std::uint8_t encodeSrgb(float linear) {
  const double v = std::clamp(static_cast<double>(std::isnan(linear) ? 0.0f : linear), 0.0, 1.0);
  const double s = v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
  return static_cast<std::uint8_t>(std::lround(s * 255.0));
}

float decodeSrgb(std::uint8_t encoded) {
  const double s = encoded / 255.0;
  return static_cast<float>(s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) {
      std::fclose(f);
    }
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void pngError(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  *message = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

void pngWarning(png_structp, png_const_charp) {}

} // namespace

void writePng(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) {
    throw InvalidInput("cannot write an empty image");
  }
  const int outChannels = image.channels() >= 3 ? 3 : 1;
  std::vector<png_byte> pixels(image.pixelCount() * outChannels);
  for (std::size_t p = 0; p < image.pixelCount(); ++p) {
    for (int c = 0; c < outChannels; ++c) {
      pixels[p * outChannels + c] = encodeSrgb(image.value(p, c));
    }
  }
  std::vector<png_bytep> rows(image.height());
  for (int y = 0; y < image.height(); ++y) {
    rows[y] = &pixels[static_cast<std::size_t>(y) * image.width() * outChannels];
  }

  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) {
    throw IoError(fmt::format("cannot write {}", path.string()));
  }
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, pngError, pngWarning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("writing {} failed: {}", path.string(), message));
  }
  png_init_io(png, file.get());
  png_set_IHDR(
      png,
      info,
      image.width(),
      image.height(),
      8,
      outChannels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
      PNG_INTERLACE_NONE,
      PNG_COMPRESSION_TYPE_DEFAULT,
      PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image readPng(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) {
    throw IoError(fmt::format("cannot open {}", path.string()));
  }
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw IoError(fmt::format("{} is not a PNG file", path.string()));
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, pngError, pngWarning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  // Declared before setjmp so the longjmp path can still release them.
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("reading {} failed: {}", path.string(), message));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int fileChannels = png_get_channels(png, info);
  pixels.resize(static_cast<std::size_t>(width) * height * fileChannels);
  rows.resize(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = &pixels[static_cast<std::size_t>(y) * width * fileChannels];
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const int channels = fileChannels >= 3 ? 3 : 1;
  Image image(width, height, channels);
  for (std::size_t p = 0; p < image.pixelCount(); ++p) {
    for (int c = 0; c < channels; ++c) {
      image.value(p, c) = decodeSrgb(pixels[p * fileChannels + c]);
    }
  }
  return image;
}

namespace {

std::string lowerExtension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

} // namespace

Image readImage(const std::filesystem::path& path) {
  const auto ext = lowerExtension(path);
  if (ext == ".pfm") {
    return readPfm(path);
  }
  if (ext == ".png") {
    return readPng(path);
  }
  throw IoError(fmt::format("unsupported image format '{}' ({})", ext, path.string()));
}

void writeImage(const Image& image, const std::filesystem::path& path) {
  const auto ext = lowerExtension(path);
  if (ext == ".pfm") {
    writePfm(image, path);
  } else if (ext == ".png") {
    writePng(image, path);
  } else {
    throw IoError(fmt::format("unsupported image format '{}' ({})", ext, path.string()));
  }
}

Image toDisplay(const Image& image) {
  Image out = image;
  for (float& v : out.data()) {
    v = encodeSrgb(v) / 255.0f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void checkPair(const Image& a, const Image& b, const Image* mask) {
  if (!a.sameShape(b)) {
    throw InvalidInput(fmt::format(
        "image shapes differ: {}x{}x{} vs {}x{}x{}",
        a.width(),
        a.height(),
        a.channels(),
        b.width(),
        b.height(),
        b.channels()));
  }
  if (mask && (mask->width() != a.width() || mask->height() != a.height())) {
    throw InvalidInput("mask size differs from image size");
  }
}

template <typename F>
double maskedChannelMean(const Image& a, const Image& b, const Image* mask, F&& term, std::size_t& count) {
  double sum = 0.0;
  count = 0;
  for (std::size_t p = 0; p < a.pixelCount(); ++p) {
    if (mask && !(mask->value(p) > 0.5f)) {
      continue;
    }
    for (int c = 0; c < a.channels(); ++c) {
      sum += term(static_cast<double>(a.value(p, c)) - b.value(p, c));
    }
    count += a.channels();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

} // namespace

double meanAbsDifference(const Image& a, const Image& b, const Image* mask) {
  checkPair(a, b, mask);
  std::size_t count;
  return maskedChannelMean(a, b, mask, [](double d) { return std::abs(d); }, count);
}

double psnr(const Image& a, const Image& b, const Image* mask) {
  checkPair(a, b, mask);
  std::size_t count;
  const double mse = maskedChannelMean(a, b, mask, [](double d) { return d * d; }, count);
  if (count == 0) {
    throw InvalidInput("psnr mask selects no pixels");
  }
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(1.0 / mse);
}

} // namespace gsc
