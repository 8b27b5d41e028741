#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "semcon/toyworld/dataset.hpp"
#include "semcon/toyworld/rng.hpp"

namespace semcon {

struct Batch {
  torch::Tensor images;  ///< [N,3,c,c] float in [-1,1]
  torch::Tensor labels;  ///< [N,c,c] int64, undefined for unlabelled sets
  std::vector<int64_t> indices;
};

/// Draws `n` indices uniformly with replacement.
std::vector<int64_t> sample_indices(int64_t set_size, int64_t n, Rng& rng);

/// Same random crop window for an image and its (optional) label map.
struct CropWindow {
  int64_t y = 0, x = 0, size = 0;
};
CropWindow random_crop(int64_t height, int64_t width, int64_t crop, Rng& rng);

/// Random crops from `set`. When `labels` is given ([N,H,W] int64) it replaces the set's own masks.
Batch sample_batch(const ImageSet& set, int64_t n, int64_t crop, Rng& rng, const torch::Tensor& labels = {});

/// Number of translated samples in a batch of `batch_size` for a translated fraction.
/// The remainder comes from raw source images.
std::pair<int64_t, int64_t> batch_split(int64_t batch_size, double translated_fraction);

}  // namespace semcon
