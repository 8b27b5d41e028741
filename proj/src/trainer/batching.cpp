#include "semcon/trainer/batching.hpp"

#include <cmath>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/core/image_io.hpp"

namespace semcon {

std::vector<int64_t> sample_indices(int64_t set_size, int64_t n, Rng& rng) {
  require(set_size > 0, ErrorKind::EmptySubset, "cannot sample a batch from an empty set");
  std::vector<int64_t> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(set_size)));
  return idx;
}

CropWindow random_crop(int64_t height, int64_t width, int64_t crop, Rng& rng) {
  require(crop <= height && crop <= width, ErrorKind::Shape, "crop larger than image");
  CropWindow w;
  w.size = crop;
  w.y = static_cast<int64_t>(rng.below(static_cast<uint64_t>(height - crop + 1)));
  w.x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(width - crop + 1)));
  return w;
}

Batch sample_batch(const ImageSet& set, int64_t n, int64_t crop, Rng& rng, const torch::Tensor& labels) {
  Batch b;
  b.indices = sample_indices(set.size(), n, rng);
  const torch::Tensor& masks = labels.defined() ? labels : set.masks;
  if (masks.defined())
    require(masks.size(0) == set.size(), ErrorKind::Shape, "label count does not match image count");
  const int64_t h = set.images.size(2), w = set.images.size(3);
  std::vector<torch::Tensor> imgs, labs;
  for (int64_t i : b.indices) {
    const auto win = random_crop(h, w, crop, rng);
    imgs.push_back(set.images[i].slice(1, win.y, win.y + crop).slice(2, win.x, win.x + crop));
    if (masks.defined()) labs.push_back(masks[i].slice(0, win.y, win.y + crop).slice(1, win.x, win.x + crop));
  }
  b.images = bytes_to_float(torch::stack(imgs));
  if (!labs.empty()) b.labels = torch::stack(labs).contiguous();
  return b;
}

std::pair<int64_t, int64_t> batch_split(int64_t batch_size, double translated_fraction) {
  require(translated_fraction >= 0 && translated_fraction <= 1, ErrorKind::Config,
          "translated fraction must lie in [0,1]");
  const auto translated = static_cast<int64_t>(std::llround(static_cast<double>(batch_size) * translated_fraction));
  return {translated, batch_size - translated};
}

}  // namespace semcon
