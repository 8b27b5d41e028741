#include "semcon/core/types.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon {

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

}  // namespace

Image::Image(torch::Tensor chw) {
  require(chw.defined() && chw.dim() == 3 && chw.size(0) == 3, ErrorKind::Shape,
          "image must be [3,H,W], got " + (chw.defined() ? shape_str(chw) : std::string("undefined")));
  require(chw.size(1) > 0 && chw.size(2) > 0, ErrorKind::Shape, "image must be non-empty");
  data_ = chw.detach().to(torch::kFloat32).contiguous().clone();
  require(torch::isfinite(data_).all().item<bool>(), ErrorKind::NumericalFault,
          "image contains non-finite values");
  require(data_.min().item<float>() >= -1.0f && data_.max().item<float>() <= 1.0f,
          ErrorKind::Shape, "image values must lie in [-1, 1]");
}

float Image::at(int64_t channel, int64_t y, int64_t x) const {
  return data_.data_ptr<float>()[(channel * height() + y) * width() + x];
}

SegMask::SegMask(torch::Tensor hw, int num_classes) : num_classes_(num_classes) {
  require(num_classes > 0, ErrorKind::InvalidLabel, "class count must be positive");
  require(hw.defined() && hw.dim() == 2 && hw.size(0) > 0 && hw.size(1) > 0, ErrorKind::Shape,
          "mask must be a non-empty [H,W] tensor");
  data_ = hw.detach().to(torch::kInt64).contiguous().clone();
  const int64_t lo = data_.min().item<int64_t>();
  const int64_t hi = data_.max().item<int64_t>();
  require(lo >= 0 && hi < num_classes, ErrorKind::InvalidLabel,
          "class id " + std::to_string(lo < 0 ? lo : hi) + " outside [0," +
              std::to_string(num_classes) + ")");
}

int64_t SegMask::at(int64_t y, int64_t x) const {
  return data_.data_ptr<int64_t>()[y * width() + x];
}

OneHotMask::OneHotMask(torch::Tensor khw) {
  require(khw.defined() && khw.dim() == 3 && khw.size(0) > 0, ErrorKind::Shape,
          "one-hot mask must be [K,H,W]");
  data_ = khw.detach().to(torch::kFloat32).contiguous().clone();
  const bool binary = ((data_ == 0) | (data_ == 1)).all().item<bool>();
  const bool unit_sum = (data_.sum(0) == 1).all().item<bool>();
  require(binary && unit_sum, ErrorKind::InvalidEncoding,
          "every pixel must hold exactly one active class channel");
}

OneHotMask onehot_encode(const SegMask& mask, int num_classes) {
  require(mask.tensor().max().item<int64_t>() < num_classes, ErrorKind::InvalidLabel,
          "mask holds class ids >= " + std::to_string(num_classes));
  auto encoded = torch::nn::functional::one_hot(mask.tensor(), num_classes).permute({2, 0, 1});
  return OneHotMask(encoded.to(torch::kFloat32));
}

SegMask onehot_decode(const OneHotMask& onehot) {
  return SegMask(onehot.tensor().argmax(0), onehot.num_classes());
}

torch::Tensor onehot_batch(const torch::Tensor& labels, int num_classes) {
  require(labels.dim() == 3, ErrorKind::Shape, "label batch must be [N,H,W]");
  return torch::nn::functional::one_hot(labels, num_classes)
      .permute({0, 3, 1, 2})
      .to(torch::kFloat32)
      .contiguous();
}

ClassSet::ClassSet(int total_classes, std::vector<int> subset) : total_(total_classes), ids_(std::move(subset)) {
  std::set<int> seen;
  for (int c : ids_) {
    require(c >= 0 && c < total_, ErrorKind::InvalidLabel,
            "class " + std::to_string(c) + " outside [0," + std::to_string(total_) + ")");
    require(seen.insert(c).second, ErrorKind::InvalidLabel, "duplicate class " + std::to_string(c));
  }
}

ClassSet ClassSet::all(int total_classes) {
  std::vector<int> ids(static_cast<std::size_t>(total_classes));
  for (int c = 0; c < total_classes; ++c) ids[static_cast<std::size_t>(c)] = c;
  return ClassSet(total_classes, std::move(ids));
}

void NetParams::add(const std::string& name, const torch::Tensor& value) {
  require(value.defined(), ErrorKind::Schema, "array '" + name + "' is undefined");
  auto copy = value.detach().clone();
  if (copy.is_floating_point()) {
    require(torch::isfinite(copy).all().item<bool>(), ErrorKind::NumericalFault,
            "array '" + name + "' holds non-finite values");
  }
  arrays_[name] = std::move(copy);
}

const torch::Tensor& NetParams::at(const std::string& name) const {
  auto it = arrays_.find(name);
  require(it != arrays_.end(), ErrorKind::Schema, "no array named '" + name + "'");
  return it->second;
}

int64_t NetParams::numel() const {
  int64_t n = 0;
  for (const auto& [name, t] : arrays_) n += t.numel();
  return n;
}

bool NetParams::same_schema(const NetParams& other) const {
  if (arrays_.size() != other.arrays_.size()) return false;
  for (auto a = arrays_.begin(), b = other.arrays_.begin(); a != arrays_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.sizes() != b->second.sizes() ||
        a->second.scalar_type() != b->second.scalar_type())
      return false;
  }
  return true;
}

void NetParams::require_same_schema(const NetParams& other) const {
  require(arrays_.size() == other.arrays_.size(), ErrorKind::Schema,
          "array counts differ: " + std::to_string(arrays_.size()) + " vs " +
              std::to_string(other.arrays_.size()));
  for (auto a = arrays_.begin(), b = other.arrays_.begin(); a != arrays_.end(); ++a, ++b) {
    require(a->first == b->first, ErrorKind::Schema, "array names differ: '" + a->first + "' vs '" + b->first + "'");
    require(a->second.sizes() == b->second.sizes(), ErrorKind::Schema,
            "shape mismatch for '" + a->first + "': " + shape_str(a->second) + " vs " + shape_str(b->second));
    require(a->second.scalar_type() == b->second.scalar_type(), ErrorKind::Schema,
            "dtype mismatch for '" + a->first + "'");
  }
}

bool NetParams::bitwise_equal(const NetParams& other) const {
  if (!same_schema(other)) return false;
  for (auto a = arrays_.begin(), b = other.arrays_.begin(); a != arrays_.end(); ++a, ++b) {
    if (!torch::equal(a->second, b->second)) return false;
  }
  return true;
}

NetParams NetParams::from_module(const torch::nn::Module& module) {
  NetParams params;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) params.add(item.key(), item.value());
  for (const auto& item : module.named_buffers(/*recurse=*/true)) params.add(item.key(), item.value());
  return params;
}

void NetParams::load_into(torch::nn::Module& module) const {
  NetParams current = from_module(module);
  current.require_same_schema(*this);
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters(true)) item.value().copy_(at(item.key()));
  for (auto& item : module.named_buffers(true)) item.value().copy_(at(item.key()));
}

NetParams blend(const NetParams& a, const NetParams& b, double weight_a) {
  a.require_same_schema(b);
  NetParams out;
  for (const auto& [name, ta] : a.arrays()) {
    const auto& tb = b.at(name);
    if (ta.is_floating_point()) {
      out.add(name, ta * weight_a + tb * (1.0 - weight_a));
    } else {
      out.add(name, tb);
    }
  }
  return out;
}

double LossReport::get(const std::string& name) const {
  auto it = values.find(name);
  require(it != values.end(), ErrorKind::Schema, "loss report has no entry '" + name + "'");
  return it->second;
}

bool LossReport::all_finite() const {
  for (const auto& [name, v] : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["phase"] = phase;
  for (const auto& [name, v] : values) j[name] = v;
  return j;
}

void Hyper::validate() const {
  require(lambda_pl >= 0 && lambda_cgan >= 0 && lambda_con >= 0, ErrorKind::Config,
          "loss weights must be non-negative");
  require(ema_decay >= 0 && ema_decay <= 1, ErrorKind::Config, "ema_decay must lie in [0,1]");
  require(clip_norm > 0, ErrorKind::Config, "clip_norm must be positive");
  require(fade_start <= fade_end, ErrorKind::Config, "fade_start must not exceed fade_end");
  require(lambda_max >= 0, ErrorKind::Config, "lambda_max must be non-negative");
}

}  // namespace semcon
