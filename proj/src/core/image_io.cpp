#include "semcon/core/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <png.h>
#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon {

namespace {

void write_png(const std::filesystem::path& path, const std::vector<uint8_t>& pixels, int64_t height,
               int64_t width, uint32_t format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + img.message);
  }
}

std::vector<uint8_t> read_png(const std::filesystem::path& path, uint32_t format, int64_t& height,
                              int64_t& width) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(ErrorKind::Io, "cannot read " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorKind::Io, "cannot decode " + path.string() + ": " + img.message);
  }
  height = img.height;
  width = img.width;
  return pixels;
}

}  // namespace

uint8_t to_byte(float value) {
  const float scaled = std::round((std::clamp(value, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<uint8_t>(scaled);
}

float from_byte(uint8_t value) { return static_cast<float>(value) / 127.5f - 1.0f; }

void write_image_png(const std::filesystem::path& path, const Image& image) {
  const int64_t h = image.height(), w = image.width();
  const float* src = image.tensor().data_ptr<float>();
  std::vector<uint8_t> pixels(static_cast<std::size_t>(h * w * 3));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < h * w; ++i) pixels[static_cast<std::size_t>(i * 3 + c)] = to_byte(src[c * h * w + i]);
  write_png(path, pixels, h, w, PNG_FORMAT_RGB);
}

torch::Tensor read_image_png_bytes(const std::filesystem::path& path) {
  int64_t h = 0, w = 0;
  auto pixels = read_png(path, PNG_FORMAT_RGB, h, w);
  auto out = torch::empty({3, h, w}, torch::kUInt8);
  auto* dst = out.data_ptr<uint8_t>();
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < h * w; ++i) dst[c * h * w + i] = pixels[static_cast<std::size_t>(i * 3 + c)];
  return out;
}

torch::Tensor bytes_to_float(const torch::Tensor& bytes) {
  return bytes.to(torch::kFloat32).div_(127.5f).sub_(1.0f);
}

Image read_image_png(const std::filesystem::path& path) { return Image(bytes_to_float(read_image_png_bytes(path))); }

void write_mask_png(const std::filesystem::path& path, const SegMask& mask) {
  require(mask.num_classes() <= 256, ErrorKind::InvalidLabel, "8-bit masks hold at most 256 classes");
  const int64_t h = mask.height(), w = mask.width();
  const int64_t* src = mask.tensor().data_ptr<int64_t>();
  std::vector<uint8_t> pixels(static_cast<std::size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) pixels[static_cast<std::size_t>(i)] = static_cast<uint8_t>(src[i]);
  write_png(path, pixels, h, w, PNG_FORMAT_GRAY);
}

SegMask read_mask_png(const std::filesystem::path& path, int num_classes) {
  int64_t h = 0, w = 0;
  auto pixels = read_png(path, PNG_FORMAT_GRAY, h, w);
  auto t = torch::empty({h, w}, torch::kInt64);
  auto* dst = t.data_ptr<int64_t>();
  for (int64_t i = 0; i < h * w; ++i) dst[i] = pixels[static_cast<std::size_t>(i)];
  return SegMask(t, num_classes);
}

}  // namespace semcon
