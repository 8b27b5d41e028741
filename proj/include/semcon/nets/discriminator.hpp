#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/core/types.hpp"
#include "semcon/nets/layers.hpp"

namespace semcon::nets {

struct DiscriminatorOptions {
  int num_classes = kToyClasses;
  int64_t trunk_width = 16;
  int64_t width = 32;
  int64_t head_width = 16;
  int64_t res_blocks = 3;

  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const DiscriminatorOptions& o);
void from_json(const nlohmann::json& j, DiscriminatorOptions& o);

/// Fixed feature extractor at 1/4 resolution. It is trained only during its own pre-training
/// step and frozen afterwards.
class TrunkImpl : public torch::nn::Module {
 public:
  TrunkImpl(int64_t trunk_width, int64_t out_width);
  torch::Tensor forward(const torch::Tensor& x);

  EqualizedConv2d conv1{nullptr}, conv2{nullptr};
  int64_t out_width;
};
TORCH_MODULE(Trunk);

/// Deconvolution to 1/2 resolution, 1x1 projection, bilinear upsampling to the input size.
class HeadImpl : public torch::nn::Module {
 public:
  HeadImpl(int64_t in, int64_t hidden, int64_t out);
  torch::Tensor forward(const torch::Tensor& features, int64_t height, int64_t width);

  EqualizedDeconv2d up{nullptr};
  EqualizedConv2d proj{nullptr};
};
TORCH_MODULE(Head);

struct DiscriminatorOutput {
  /// [N, 1+K, H, W]; channel 0 is the domain map, channels 1..K the per-class maps.
  torch::Tensor gan_maps;
  /// [N, K, H, W] segmentation logits of the auxiliary classifier head.
  torch::Tensor ac_logits;

  torch::Tensor domain_map() const { return gan_maps.select(1, 0); }
  torch::Tensor class_maps() const { return gan_maps.slice(1, 1); }
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& options = {});

  DiscriminatorOutput forward(const torch::Tensor& x);

  /// Stops gradient flow into the trunk parameters for good.
  void freeze_trunk();
  bool trunk_frozen() const { return trunk_frozen_; }
  /// Parameters updated by the discriminator optimiser (everything except the trunk).
  std::vector<torch::Tensor> trainable_parameters();
  NetParams trunk_params() const;

  const DiscriminatorOptions& options() const { return options_; }
  Trunk trunk{nullptr};

 private:
  DiscriminatorOptions options_;
  torch::nn::ModuleList blocks_{nullptr};
  Head gan_head_{nullptr}, ac_head_{nullptr};
  bool trunk_frozen_ = false;
};
TORCH_MODULE(Discriminator);

}  // namespace semcon::nets
