#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/eval/metrics.hpp"
#include "semcon/nets/segmenter.hpp"
#include "semcon/toyworld/dataset.hpp"

namespace semcon {

struct EvalResult {
  ConfusionMatrix cm;
  std::vector<std::optional<double>> ious;
  double miou = 0;  ///< fraction in [0,1]

  nlohmann::json to_json(const ClassSet& subset) const;
};

/// Argmax predictions [N,H,W] for float images [N,3,H,W], computed in chunks without gradients.
torch::Tensor predict(nets::Segmenter& f, const torch::Tensor& images, int64_t chunk = 16);

/// Whole-image inference over a labelled set (optionally restricted to `indices`), one global
/// confusion matrix.
EvalResult evaluate_model(nets::Segmenter& f, const ImageSet& split, const ClassSet& subset,
                          const std::vector<int64_t>& indices = {});

struct ProbeConfig {
  int64_t steps = 500;
  double lr = 1e-3;
  int64_t batch_size = 8;
  int64_t crop = 64;
  uint64_t seed = 1;
};

/// Copy of `f` in which only the final linear classifier was retrained on `labelled[train_idx]`.
nets::Segmenter linear_probe(const nets::Segmenter& f, const ImageSet& labelled,
                             const std::vector<int64_t>& train_idx, const ProbeConfig& cfg);

/// Indices of the probe's training half and evaluation half of a labelled split.
std::pair<std::vector<int64_t>, std::vector<int64_t>> probe_halves(int64_t n);

/// Writes input | prediction | ground truth strips for the first `count` images.
void dump_predictions(nets::Segmenter& f, const ImageSet& split, const std::filesystem::path& dir, int64_t count);

}  // namespace semcon
