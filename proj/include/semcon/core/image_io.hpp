#pragma once

#include <filesystem>

#include "semcon/core/types.hpp"

namespace semcon {

/// Linear map [-1, 1] -> [0, 255] with rounding, and back.
uint8_t to_byte(float value);
float from_byte(uint8_t value);

/// 8-bit RGB PNG. Values are quantised with to_byte.
void write_image_png(const std::filesystem::path& path, const Image& image);
Image read_image_png(const std::filesystem::path& path);

/// 8-bit single-channel PNG where the pixel value is the class id.
void write_mask_png(const std::filesystem::path& path, const SegMask& mask);
SegMask read_mask_png(const std::filesystem::path& path, int num_classes);

/// Raw byte images, [3, H, W] uint8, used for compact in-memory datasets.
torch::Tensor read_image_png_bytes(const std::filesystem::path& path);
torch::Tensor bytes_to_float(const torch::Tensor& bytes);

}  // namespace semcon
