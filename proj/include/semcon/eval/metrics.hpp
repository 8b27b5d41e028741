#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include "semcon/core/types.hpp"

namespace semcon {

/// K x K pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = kToyClasses);

  int num_classes() const { return k_; }
  int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt * k_ + pred)]; }
  int64_t total() const;
  void add(int gt, int pred, int64_t n = 1);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& other) const = default;

  nlohmann::json to_json() const;

 private:
  int k_;
  std::vector<int64_t> counts_;
};

/// Adds every pixel of pred/gt (any equal shapes, int64 ids) to `cm`.
ConfusionMatrix accumulate_cm(const torch::Tensor& pred, const torch::Tensor& gt, ConfusionMatrix cm);
ConfusionMatrix accumulate_cm(const SegMask& pred, const SegMask& gt, ConfusionMatrix cm);

/// TP / (TP + FP + FN); nullopt when the class is absent from both prediction and ground truth.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

/// Mean over the subset, skipping undefined entries. Raises an empty-subset error when
/// nothing defined remains.
double miou(const std::vector<std::optional<double>>& ious, const ClassSet& subset);
double miou(const std::vector<double>& ious, const ClassSet& subset);

struct GapReport {
  double upper_miou = 0;
  double source_miou = 0;
  double method_miou = 0;
  double remaining_gap_pct = 0;
  double closed_gap_pct = 0;

  nlohmann::json to_json() const;
};

/// remaining = (upper - method) / (upper - source) * 100, closed = 100 - remaining.
GapReport gap_report(double upper, double source, double method);

}  // namespace semcon
