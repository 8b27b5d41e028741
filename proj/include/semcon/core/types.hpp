#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/nn/module.h>
#include <torch/types.h>

namespace semcon {

/// Number of toy classes: background, road band, disc, box, pole stripe.
inline constexpr int kToyClasses = 5;

/// RGB image stored channel-first as a [3, H, W] float32 tensor with values in [-1, 1].
class Image {
 public:
  explicit Image(torch::Tensor chw);

  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  const torch::Tensor& tensor() const { return data_; }
  float at(int64_t channel, int64_t y, int64_t x) const;

 private:
  torch::Tensor data_;
};

/// Dense per-pixel class ids, [H, W] int64 with every value in [0, K).
class SegMask {
 public:
  SegMask(torch::Tensor hw, int num_classes);

  int64_t height() const { return data_.size(0); }
  int64_t width() const { return data_.size(1); }
  int num_classes() const { return num_classes_; }
  const torch::Tensor& tensor() const { return data_; }
  int64_t at(int64_t y, int64_t x) const;

 private:
  torch::Tensor data_;
  int num_classes_;
};

/// One-hot encoding of a SegMask, stored as [K, H, W] float32 so it lines up with
/// channel-first logits. Per-pixel channel sums are exactly 1.
class OneHotMask {
 public:
  explicit OneHotMask(torch::Tensor khw);

  int num_classes() const { return static_cast<int>(data_.size(0)); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  const torch::Tensor& tensor() const { return data_; }

 private:
  torch::Tensor data_;
};

OneHotMask onehot_encode(const SegMask& mask, int num_classes);
SegMask onehot_decode(const OneHotMask& onehot);

/// Batched encoding used by the trainer: [N, H, W] int64 -> [N, K, H, W] float.
torch::Tensor onehot_batch(const torch::Tensor& labels, int num_classes);

/// Ordered subset of class ids over which a mean metric is taken.
class ClassSet {
 public:
  ClassSet(int total_classes, std::vector<int> subset);
  static ClassSet all(int total_classes);

  int total_classes() const { return total_; }
  const std::vector<int>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

 private:
  int total_;
  std::vector<int> ids_;
};

/// Named collection of trainable arrays (and buffers) taken from a network.
/// Values are detached deep copies.
class NetParams {
 public:
  NetParams() = default;

  void add(const std::string& name, const torch::Tensor& value);
  const std::map<std::string, torch::Tensor>& arrays() const { return arrays_; }
  const torch::Tensor& at(const std::string& name) const;
  std::size_t size() const { return arrays_.size(); }
  int64_t numel() const;

  bool same_schema(const NetParams& other) const;
  void require_same_schema(const NetParams& other) const;
  bool bitwise_equal(const NetParams& other) const;

  static NetParams from_module(const torch::nn::Module& module);
  void load_into(torch::nn::Module& module) const;

 private:
  std::map<std::string, torch::Tensor> arrays_;
};

/// Elementwise `weight_a * a + (1 - weight_a) * b` after a schema check.
NetParams blend(const NetParams& a, const NetParams& b, double weight_a);

/// Named scalar losses for one training step.
struct LossReport {
  int64_t step = 0;
  std::string phase;
  std::map<std::string, double> values;

  void set(const std::string& name, double value) { values[name] = value; }
  double get(const std::string& name) const;
  bool all_finite() const;
  nlohmann::json to_json() const;
};

/// Loss weights and optimisation constants shared by the training phases.
struct Hyper {
  double lambda_pl = 0.3;
  double lambda_cgan = 0.3;
  double lambda_con = 1.0;
  double ema_decay = 0.999;
  double clip_norm = 5.0;
  int64_t fade_start = 160;
  int64_t fade_end = 800;
  double lambda_max = 0.3;

  void validate() const;
};

}  // namespace semcon
