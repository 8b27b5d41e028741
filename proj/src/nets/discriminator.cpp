#include "semcon/nets/discriminator.hpp"

#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon::nets {

namespace F = torch::nn::functional;

std::string DiscriminatorOptions::fingerprint() const {
  return "discriminator/v1 classes=" + std::to_string(num_classes) + " trunk=" + std::to_string(trunk_width) +
         " width=" + std::to_string(width) + " head=" + std::to_string(head_width) +
         " blocks=" + std::to_string(res_blocks);
}

void to_json(nlohmann::json& j, const DiscriminatorOptions& o) {
  j = nlohmann::json{{"trunk_width", o.trunk_width},
                     {"width", o.width},
                     {"head_width", o.head_width},
                     {"res_blocks", o.res_blocks}};
}

void from_json(const nlohmann::json& j, DiscriminatorOptions& o) {
  j.at("trunk_width").get_to(o.trunk_width);
  j.at("width").get_to(o.width);
  j.at("head_width").get_to(o.head_width);
  j.at("res_blocks").get_to(o.res_blocks);
}

TrunkImpl::TrunkImpl(int64_t trunk_width, int64_t out) : out_width(out) {
  conv1 = register_module("conv1", EqualizedConv2d(3, trunk_width, 3, 2, 1, 1, false));
  conv2 = register_module("conv2", EqualizedConv2d(trunk_width, out, 3, 2, 1, 1, false));
}

torch::Tensor TrunkImpl::forward(const torch::Tensor& x) {
  return lrelu(conv2->forward(lrelu(conv1->forward(x))));
}

HeadImpl::HeadImpl(int64_t in, int64_t hidden, int64_t out) {
  up = register_module("up", EqualizedDeconv2d(in, hidden, false));
  proj = register_module("proj", EqualizedConv2d(hidden, out, 1, 1, 0, 1, false));
}

torch::Tensor HeadImpl::forward(const torch::Tensor& features, int64_t height, int64_t width) {
  auto h = proj->forward(lrelu(up->forward(features)));
  return F::interpolate(h, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& options) : options_(options) {
  require(options.res_blocks >= 1, ErrorKind::Config, "discriminator needs at least one residual block");
  trunk = register_module("trunk", Trunk(options.trunk_width, options.width));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < options.res_blocks; ++i) blocks_->push_back(ResBlock(options.width, false));
  gan_head_ = register_module("gan_head", Head(options.width, options.head_width, 1 + options.num_classes));
  ac_head_ = register_module("ac_head", Head(options.width, options.head_width, options.num_classes));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Shape, "discriminator expects [N,3,H,W]");
  require(x.size(2) % 4 == 0 && x.size(3) % 4 == 0, ErrorKind::Shape,
          "discriminator input height/width must be divisible by 4");
  auto h = trunk->forward(x);
  for (auto& block : *blocks_) h = block->as<ResBlock>()->forward(h);
  return DiscriminatorOutput{gan_head_->forward(h, x.size(2), x.size(3)), ac_head_->forward(h, x.size(2), x.size(3))};
}

void DiscriminatorImpl::freeze_trunk() {
  set_requires_grad(*trunk, false);
  trunk_frozen_ = true;
}

std::vector<torch::Tensor> DiscriminatorImpl::trainable_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& item : named_parameters(true)) {
    if (item.key().rfind("trunk.", 0) == 0) continue;
    out.push_back(item.value());
  }
  return out;
}

NetParams DiscriminatorImpl::trunk_params() const { return NetParams::from_module(*trunk); }

}  // namespace semcon::nets
