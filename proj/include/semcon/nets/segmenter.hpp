#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/conv.h>

#include "semcon/core/types.hpp"

namespace semcon::nets {

struct SegmenterOptions {
  int num_classes = kToyClasses;
  int64_t width = 32;
  std::vector<int64_t> dilation_rates{1, 2, 4};

  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const SegmenterOptions& o);
void from_json(const nlohmann::json& j, SegmenterOptions& o);

/// Small atrous segmentation network: two stride-2 stem convolutions, one 3x3 body
/// convolution, parallel dilated branches (summed), a 1x1 linear classifier, and bilinear
/// upsampling of the logits to the input resolution.
class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(const SegmenterOptions& options = {});

  /// [N,3,H,W] -> logits [N,K,H,W].
  torch::Tensor forward(const torch::Tensor& x);
  /// Features entering the classifier, [N,width,H/4,W/4].
  torch::Tensor features(const torch::Tensor& x);
  torch::Tensor classify(const torch::Tensor& features, int64_t height, int64_t width);

  const SegmenterOptions& options() const { return options_; }
  /// Name prefix of the final linear classification layer's parameters.
  static constexpr const char* kClassifierPrefix = "classifier.";

  torch::nn::Conv2d classifier{nullptr};

 private:
  SegmenterOptions options_;
  torch::nn::Conv2d stem1_{nullptr}, stem2_{nullptr}, body_{nullptr};
  torch::nn::ModuleList branches_{nullptr};
};
TORCH_MODULE(Segmenter);

/// Deep copy with identical parameters (used to create EMA teachers).
Segmenter clone_segmenter(const Segmenter& source);

/// Single-image logits, [K,H,W].
torch::Tensor segmenter_forward(Segmenter& f, const Image& x);

}  // namespace semcon::nets
