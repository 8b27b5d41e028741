#include "semcon/nets/segmenter.hpp"

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/nets/layers.hpp"

namespace semcon::nets {

namespace F = torch::nn::functional;

std::string SegmenterOptions::fingerprint() const {
  std::string rates;
  for (auto r : dilation_rates) rates += (rates.empty() ? "" : ",") + std::to_string(r);
  return "segmenter/v1 classes=" + std::to_string(num_classes) + " width=" + std::to_string(width) +
         " dilations=" + rates;
}

void to_json(nlohmann::json& j, const SegmenterOptions& o) {
  j = nlohmann::json{{"width", o.width}, {"dilation_rates", o.dilation_rates}};
}

void from_json(const nlohmann::json& j, SegmenterOptions& o) {
  j.at("width").get_to(o.width);
  j.at("dilation_rates").get_to(o.dilation_rates);
}

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride, int64_t dilation) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(dilation).dilation(dilation));
}

}  // namespace

SegmenterImpl::SegmenterImpl(const SegmenterOptions& options) : options_(options) {
  require(options.num_classes > 0 && options.width > 0 && !options.dilation_rates.empty(), ErrorKind::Config,
          "segmenter needs classes, width and at least one dilation rate");
  const int64_t w = options.width;
  stem1_ = register_module("stem1", conv3x3(3, w / 2, 2, 1));
  stem2_ = register_module("stem2", conv3x3(w / 2, w, 2, 1));
  body_ = register_module("body", conv3x3(w, w, 1, 1));
  branches_ = register_module("branches", torch::nn::ModuleList());
  for (auto rate : options.dilation_rates) branches_->push_back(conv3x3(w, w, 1, rate));
  classifier = register_module("classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, options.num_classes, 1)));
}

torch::Tensor SegmenterImpl::features(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Shape, "segmenter expects [N,3,H,W]");
  require(x.size(2) % 4 == 0 && x.size(3) % 4 == 0, ErrorKind::Shape,
          "segmenter input height/width must be divisible by 4");
  auto h = lrelu(stem1_->forward(x));
  h = lrelu(stem2_->forward(h));
  h = lrelu(body_->forward(h));
  torch::Tensor sum;
  for (auto& branch : *branches_) {
    auto b = branch->as<torch::nn::Conv2d>()->forward(h);
    sum = sum.defined() ? sum + b : b;
  }
  return lrelu(sum);
}

torch::Tensor SegmenterImpl::classify(const torch::Tensor& features, int64_t height, int64_t width) {
  return F::interpolate(classifier->forward(features), F::InterpolateFuncOptions()
                                                           .size(std::vector<int64_t>{height, width})
                                                           .mode(torch::kBilinear)
                                                           .align_corners(false));
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) { return classify(features(x), x.size(2), x.size(3)); }

Segmenter clone_segmenter(const Segmenter& source) {
  Segmenter copy(source->options());
  copy->to(source->parameters().front().scalar_type());
  NetParams::from_module(*source).load_into(*copy);
  return copy;
}

torch::Tensor segmenter_forward(Segmenter& f, const Image& x) {
  torch::NoGradGuard no_grad;
  return f->forward(x.tensor().unsqueeze(0))[0];
}

}  // namespace semcon::nets
