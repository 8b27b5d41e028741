#include "semcon/eval/metrics.hpp"

#include <cmath>
#include <numeric>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  require(num_classes > 0, ErrorKind::Config, "confusion matrix needs at least one class");
}

int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), int64_t{0}); }

void ConfusionMatrix::add(int gt, int pred, int64_t n) {
  require(gt >= 0 && gt < k_ && pred >= 0 && pred < k_, ErrorKind::InvalidLabel,
          "class id outside [0," + std::to_string(k_) + ")");
  counts_[static_cast<std::size_t>(gt * k_ + pred)] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  require(other.k_ == k_, ErrorKind::Shape, "confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

nlohmann::json ConfusionMatrix::to_json() const {
  auto rows = nlohmann::json::array();
  for (int g = 0; g < k_; ++g) {
    auto row = nlohmann::json::array();
    for (int p = 0; p < k_; ++p) row.push_back(at(g, p));
    rows.push_back(row);
  }
  return rows;
}

ConfusionMatrix accumulate_cm(const torch::Tensor& pred, const torch::Tensor& gt, ConfusionMatrix cm) {
  require(pred.sizes() == gt.sizes(), ErrorKind::Shape, "accumulate_cm: prediction and ground truth differ in shape");
  const int k = cm.num_classes();
  auto p = pred.to(torch::kInt64).reshape(-1);
  auto g = gt.to(torch::kInt64).reshape(-1);
  if (p.numel() == 0) return cm;
  require(p.min().item<int64_t>() >= 0 && p.max().item<int64_t>() < k && g.min().item<int64_t>() >= 0 &&
              g.max().item<int64_t>() < k,
          ErrorKind::InvalidLabel, "accumulate_cm: class id outside [0," + std::to_string(k) + ")");
  auto counts = torch::bincount(g * k + p, std::nullopt, k * k);
  auto acc = counts.accessor<int64_t, 1>();
  for (int gi = 0; gi < k; ++gi)
    for (int pi = 0; pi < k; ++pi)
      if (acc[gi * k + pi] != 0) cm.add(gi, pi, acc[gi * k + pi]);
  return cm;
}

ConfusionMatrix accumulate_cm(const SegMask& pred, const SegMask& gt, ConfusionMatrix cm) {
  return accumulate_cm(pred.tensor(), gt.tensor(), std::move(cm));
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  std::vector<std::optional<double>> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const int64_t tp = cm.at(c, c);
    const int64_t denom = row + col - tp;
    if (denom > 0) out[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double miou(const std::vector<std::optional<double>>& ious, const ClassSet& subset) {
  require(subset.total_classes() == static_cast<int>(ious.size()), ErrorKind::Shape,
          "miou: subset defined over a different class count");
  double sum = 0.0;
  int n = 0;
  for (int c : subset.ids()) {
    const auto& v = ious[static_cast<std::size_t>(c)];
    if (!v) continue;
    sum += *v;
    ++n;
  }
  require(n > 0, ErrorKind::EmptySubset, "miou over an empty (or entirely undefined) class subset");
  return sum / n;
}

double miou(const std::vector<double>& ious, const ClassSet& subset) {
  std::vector<std::optional<double>> opt(ious.begin(), ious.end());
  return miou(opt, subset);
}

nlohmann::json GapReport::to_json() const {
  return {{"upper_miou", upper_miou},
          {"source_miou", source_miou},
          {"method_miou", method_miou},
          {"remaining_gap_pct", remaining_gap_pct},
          {"closed_gap_pct", closed_gap_pct}};
}

GapReport gap_report(double upper, double source, double method) {
  require(upper >= source, ErrorKind::Config, "gap_report needs upper >= source");
  require(upper != source, ErrorKind::UndefinedGap, "domain gap undefined: upper equals source");
  GapReport r{upper, source, method, 0, 0};
  r.remaining_gap_pct = (upper - method) / (upper - source) * 100.0;
  r.closed_gap_pct = 100.0 - r.remaining_gap_pct;
  return r;
}

}  // namespace semcon
