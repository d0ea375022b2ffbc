#include "gsc/errors.h"
#include "gsc/image.h"
#include "gsc/rng.h"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace gsc;

namespace {

std::filesystem::path tempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gsc_test_" + name);
}

Image randomImage(int w, int h, int c, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SplitMix64 gen(seed);
  Image img(w, h, c);
  for (float& v : img.data()) {
    v = lo + (hi - lo) * static_cast<float>(uniform01(gen));
  }
  return img;
}

} // namespace

TEST_CASE("Image shape and accessors") {
  Image img(3, 2, 3, 0.5f);
  CHECK(img.pixelCount() == 6);
  img.at(2, 1, 0) = 1.0f;
  CHECK(img.value(5, 0) == 1.0f);
  img.setRgb(0, Vec3(0.1, 0.2, 0.3));
  CHECK(img.rgb(0).isApprox(Vec3(0.1, 0.2, 0.3), 1e-7));
  Image grey(2, 2, 1);
  grey.setRgb(1, Vec3(0.0, 0.3, 0.6));
  CHECK(grey.value(1) == doctest::Approx(0.3));
  CHECK(grey.rgb(1) == Vec3::Constant(grey.value(1)));
  CHECK_THROWS_AS(Image(0, 2, 3), InvalidInput);
  CHECK_THROWS_AS(Image(2, 2, 5), InvalidInput);
}

TEST_CASE("PFM round trip and orientation") {
  for (int channels : {1, 3}) {
    const Image img = randomImage(5, 4, channels, 3 + channels, -2.0f, 7.0f);
    const auto path = tempPath("roundtrip.pfm");
    writePfm(img, path);
    CHECK(std::filesystem::file_size(path) == std::string(channels == 3 ? "PF\n5 4\n-1.0\n" : "Pf\n5 4\n-1.0\n").size() +
              5 * 4 * channels * sizeof(float));
    const Image back = readPfm(path);
    CHECK(back == img);
    std::filesystem::remove(path);
  }

  // Bottom-up storage: the first stored row is the image's last row.
  Image img(2, 2, 1);
  img.at(0, 1) = 9.0f;
  const auto path = tempPath("orient.pfm");
  writePfm(img, path);
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  std::getline(in, header);
  std::getline(in, header);
  float first;
  in.read(reinterpret_cast<char*>(&first), sizeof(first));
  CHECK(first == 9.0f);
  in.close();
  std::filesystem::remove(path);
}

TEST_CASE("PFM big-endian input and malformed files") {
  const auto path = tempPath("bigendian.pfm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "Pf\n1 1\n1.0\n";
    const unsigned char bytes[4] = {0x3f, 0x80, 0x00, 0x00}; // 1.0f big-endian
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  CHECK(readPfm(path).at(0, 0) == 1.0f);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n1 1\n255\n";
  }
  CHECK_THROWS_AS(readPfm(path), IoError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "PF\n2 2\n-1.0\n";
    out.write("abcd", 4);
  }
  CHECK_THROWS_AS(readPfm(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(readPfm(path), IoError);
  CHECK_THROWS_AS(writePfm(Image(1, 1, 2), path), InvalidInput);
}

TEST_CASE("sRGB transfer") {
  CHECK(encodeSrgb(0.0f) == 0);
  CHECK(encodeSrgb(1.0f) == 255);
  CHECK(encodeSrgb(-3.0f) == 0);
  CHECK(encodeSrgb(7.0f) == 255);
  CHECK(encodeSrgb(NAN) == 0);
  // Mid grey 0.5 encodes to about 188.
  CHECK(encodeSrgb(0.5f) == 188);
  for (int i = 0; i < 256; ++i) {
    CHECK(encodeSrgb(decodeSrgb(static_cast<std::uint8_t>(i))) == i);
  }
}

TEST_CASE("PNG round trip through the sRGB encoding") {
  for (int channels : {1, 3}) {
    const Image img = randomImage(7, 3, channels, 11);
    const auto path = tempPath("roundtrip.png");
    writePng(img, path);
    const Image back = readPng(path);
    REQUIRE(back.sameShape(img));
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      CHECK(encodeSrgb(back.data()[i]) == encodeSrgb(img.data()[i]));
    }
    std::filesystem::remove(path);
  }
  const auto bad = tempPath("bad.png");
  {
    std::ofstream out(bad);
    out << "not a png";
  }
  CHECK_THROWS_AS(readPng(bad), IoError);
  CHECK_THROWS_AS(readImage(tempPath("x.bmp")), IoError);
  std::filesystem::remove(bad);
}

TEST_CASE("toDisplay quantizes like the PNG writer") {
  Image img(2, 1, 1);
  img.at(0, 0) = 0.5f;
  img.at(1, 0) = 2.0f;
  const Image d = toDisplay(img);
  CHECK(d.at(0, 0) == doctest::Approx(188.0 / 255.0));
  CHECK(d.at(1, 0) == 1.0f);
}

TEST_CASE("psnr") {
  const Image a = randomImage(8, 8, 3, 1);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 0.0);

  Image b = a;
  for (float& v : b.data()) {
    v += 0.1f;
  }
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));

  const Image c = randomImage(8, 8, 3, 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - c.data()[i];
    sum += d * d;
  }
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(a.data().size() / sum)).epsilon(1e-12));

  Image mask(8, 8, 1);
  mask.at(3, 4) = 1.0f;
  double local = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double d = static_cast<double>(a.at(3, 4, ch)) - c.at(3, 4, ch);
    local += d * d;
  }
  CHECK(psnr(a, c, &mask) == doctest::Approx(10.0 * std::log10(3.0 / local)).epsilon(1e-12));

  CHECK_THROWS_AS(psnr(a, Image(8, 7, 3)), InvalidInput);
  const Image emptyMask(8, 8, 1);
  CHECK_THROWS_AS(psnr(a, c, &emptyMask), InvalidInput);
}

TEST_CASE("meanAbsDifference") {
  const Image a = randomImage(4, 4, 3, 5);
  Image b = a;
  for (float& v : b.data()) {
    v -= 0.25f;
  }
  CHECK(meanAbsDifference(a, a) == 0.0);
  CHECK(meanAbsDifference(a, b) == doctest::Approx(0.25).epsilon(1e-6));
}
