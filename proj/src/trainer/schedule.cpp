#include "semcon/trainer/schedule.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon {

void Schedule::validate() const {
  require(fade_start >= 0 && fade_start <= fade_end, ErrorKind::Config, "schedule needs 0 <= fade_start <= fade_end");
  require(lambda_max >= 0, ErrorKind::Config, "schedule lambda_max must be non-negative");
  require(con_warmup_steps >= 0, ErrorKind::Config, "schedule con_warmup_steps must be non-negative");
}

double lambda_fade(int64_t step, const Schedule& s) {
  if (step <= s.fade_start) return 0.0;
  if (step >= s.fade_end) return s.lambda_max;
  const double t = static_cast<double>(step - s.fade_start) / static_cast<double>(s.fade_end - s.fade_start);
  return s.lambda_max * t;
}

double lambda_con_at(int64_t step, const Schedule& s, double lambda_con) {
  return step < s.con_warmup_steps ? 0.0 : lambda_con;
}

NetParams ema_update(const NetParams& teacher, const NetParams& student, double decay) {
  require(decay >= 0.0 && decay <= 1.0, ErrorKind::Config, "ema decay must lie in [0,1]");
  return blend(teacher, student, decay);
}

void ema_update_module(torch::nn::Module& teacher, const torch::nn::Module& student, double decay) {
  require(decay >= 0.0 && decay <= 1.0, ErrorKind::Config, "ema decay must lie in [0,1]");
  torch::NoGradGuard guard;
  auto tp = teacher.named_parameters();
  const auto sp = student.named_parameters();
  require(tp.size() == sp.size(), ErrorKind::Schema, "ema: teacher and student differ in parameter count");
  for (const auto& item : sp) {
    auto* t = tp.find(item.key());
    require(t != nullptr && t->sizes() == item.value().sizes(), ErrorKind::Schema,
            "ema: array '" + item.key() + "' missing or mis-shaped in teacher");
    t->mul_(decay).add_(item.value(), 1.0 - decay);
  }
  auto tb = teacher.named_buffers();
  for (const auto& item : student.named_buffers()) {
    auto* t = tb.find(item.key());
    require(t != nullptr, ErrorKind::Schema, "ema: buffer '" + item.key() + "' missing in teacher");
    t->copy_(item.value());
  }
}

double ema_decay_at(int64_t step, double decay) {
  return std::min(decay, 1.0 - 1.0 / static_cast<double>(step + 1));
}

double global_norm(const std::vector<torch::Tensor>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    if (!g.defined()) continue;
    sq += g.to(torch::kFloat64).pow(2).sum().item<double>();
  }
  require(std::isfinite(sq), ErrorKind::NumericalFault, "non-finite gradient norm");
  return std::sqrt(sq);
}

NetParams clip_global_norm(const NetParams& grads, double max_norm) {
  require(max_norm > 0, ErrorKind::Config, "clip max_norm must be positive");
  std::vector<torch::Tensor> all;
  for (const auto& [name, g] : grads.arrays()) all.push_back(g);
  const double norm = global_norm(all);
  const double scale = norm > max_norm ? max_norm / norm : 1.0;
  NetParams out;
  for (const auto& [name, g] : grads.arrays()) out.add(name, scale == 1.0 ? g : g * scale);
  return out;
}

double clip_gradients(const std::vector<torch::Tensor>& params, double max_norm) {
  require(max_norm > 0, ErrorKind::Config, "clip max_norm must be positive");
  std::vector<torch::Tensor> grads;
  for (const auto& p : params) grads.push_back(p.grad());
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    torch::NoGradGuard guard;
    for (auto& g : grads)
      if (g.defined()) g.mul_(max_norm / norm);
  }
  return norm;
}

}  // namespace semcon
