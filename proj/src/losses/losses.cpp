#include "semcon/losses/losses.hpp"

#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon::losses {

namespace {

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  require(a.sizes() == b.sizes(), ErrorKind::Shape, std::string(what) + ": shape mismatch");
}

// Channel axis of a [K,H,W] or [N,K,H,W] tensor.
int64_t class_dim(const torch::Tensor& t) {
  require(t.dim() == 3 || t.dim() == 4, ErrorKind::Shape, "expected [K,H,W] or [N,K,H,W]");
  return t.dim() - 3;
}

}  // namespace

GanObjective parse_gan_objective(const std::string& name) {
  if (name == "lsgan") return GanObjective::LeastSquares;
  if (name == "sgan") return GanObjective::Standard;
  fail(ErrorKind::Config, "unknown gan objective '" + name + "' (expected lsgan or sgan)");
}

std::string to_string(GanObjective objective) {
  return objective == GanObjective::LeastSquares ? "lsgan" : "sgan";
}

torch::Tensor seg_ce(const torch::Tensor& logits, const torch::Tensor& onehot) {
  require_same(logits, onehot, "seg_ce");
  const int64_t cd = class_dim(logits);
  return -(onehot * torch::log_softmax(logits, cd)).sum(cd).mean();
}

torch::Tensor sym_ce(const torch::Tensor& logits, const torch::Tensor& pseudo_onehot, const SymCeParams& params) {
  require_same(logits, pseudo_onehot, "sym_ce");
  require(params.log_clamp < 0, ErrorKind::Config, "sym_ce log_clamp must be negative");
  const int64_t cd = class_dim(logits);
  auto log_p = torch::log_softmax(logits, cd);
  auto ce = -(pseudo_onehot * log_p).sum(cd);
  auto log_q = torch::log(pseudo_onehot.detach()).clamp_min(params.log_clamp);
  auto rce = -(log_p.exp() * log_q).sum(cd);
  return (params.alpha * ce + params.beta * rce).mean();
}

torch::Tensor total_seg_loss_d(const torch::Tensor& ac_fake, const torch::Tensor& y_s, const torch::Tensor& ac_real,
                               const torch::Tensor& y_hat_t, double lambda_pl, const SymCeParams& params) {
  auto loss = seg_ce(ac_fake, y_s);
  if (lambda_pl != 0.0) loss = loss + lambda_pl * sym_ce(ac_real, y_hat_t, params);
  else require_same(ac_real, y_hat_t, "total_seg_loss_d");
  return loss;
}

torch::Tensor gan_distance(const torch::Tensor& prediction, double target, GanObjective objective) {
  if (objective == GanObjective::LeastSquares) return (prediction - target).pow(2);
  // BCE with logits written in the overflow-safe form max(x,0) - x*t + log(1 + exp(-|x|)).
  return prediction.clamp_min(0) - prediction * target + torch::log1p(torch::exp(-prediction.abs()));
}

torch::Tensor dgan_loss_d(const torch::Tensor& d_fake, const torch::Tensor& d_real, GanObjective objective) {
  require_same(d_fake, d_real, "dgan_loss_d");
  return gan_distance(d_fake, GanTargets::kFake, objective) + gan_distance(d_real, GanTargets::kReal, objective);
}

torch::Tensor dgan_loss_g(const torch::Tensor& d_fake, GanObjective objective) {
  return gan_distance(d_fake, GanTargets::kReal, objective);
}

torch::Tensor cgan_loss_d(const torch::Tensor& d_fake_cls, const torch::Tensor& y_s, const torch::Tensor& d_real_cls,
                          const torch::Tensor& y_hat_t, GanObjective objective) {
  require_same(d_fake_cls, y_s, "cgan_loss_d (fake)");
  require_same(d_real_cls, y_hat_t, "cgan_loss_d (real)");
  require_same(d_fake_cls, d_real_cls, "cgan_loss_d");
  // where() rather than a product so that masked positions are exactly 0 even for inf/nan maps.
  auto fake = torch::where(y_s > 0, gan_distance(d_fake_cls, GanTargets::kFake, objective) * y_s,
                           torch::zeros_like(d_fake_cls));
  auto real = torch::where(y_hat_t > 0, gan_distance(d_real_cls, GanTargets::kReal, objective) * y_hat_t,
                           torch::zeros_like(d_real_cls));
  return fake + real;
}

torch::Tensor cgan_loss_g(const torch::Tensor& d_fake_cls, const torch::Tensor& y_s, GanObjective objective) {
  require_same(d_fake_cls, y_s, "cgan_loss_g");
  return torch::where(y_s > 0, gan_distance(d_fake_cls, GanTargets::kReal, objective) * y_s,
                      torch::zeros_like(d_fake_cls));
}

torch::Tensor gan_total(const torch::Tensor& dgan_map, const torch::Tensor& cgan_map, double lambda_cgan, int k) {
  require(k > 0, ErrorKind::Config, "gan_total needs a positive class count");
  require(dgan_map.dim() + 1 == cgan_map.dim(), ErrorKind::Shape, "gan_total: class map rank mismatch");
  const int64_t cd = class_dim(cgan_map);
  require(cgan_map.size(cd) == k, ErrorKind::Shape, "gan_total: class map has wrong class count");
  require(cgan_map.sum(cd).sizes() == dgan_map.sizes(), ErrorKind::Shape, "gan_total: spatial shape mismatch");
  return dgan_map.sum() + (lambda_cgan / k) * cgan_map.sum();
}

torch::Tensor gan_mean(const torch::Tensor& dgan_map, const torch::Tensor& cgan_map, double lambda_cgan, int k) {
  return gan_total(dgan_map, cgan_map, lambda_cgan, k) / static_cast<double>(dgan_map.numel());
}

torch::Tensor disc_total(const torch::Tensor& seg_sum, const torch::Tensor& gan_sum, int64_t h, int64_t w) {
  require(h > 0 && w > 0, ErrorKind::Shape, "disc_total: image size must be positive");
  return (seg_sum + gan_sum) / static_cast<double>(h * w);
}

torch::Tensor identity_loss(const torch::Tensor& gx, const torch::Tensor& x) {
  require_same(gx, x, "identity_loss");
  return (gx - x).abs().sum();
}

torch::Tensor gen_total(const torch::Tensor& seg_sum, const torch::Tensor& gan_sum, const torch::Tensor& id_sum,
                        int64_t h, int64_t w) {
  require(h > 0 && w > 0, ErrorKind::Shape, "gen_total: image size must be positive");
  return (seg_sum + gan_sum + id_sum) / static_cast<double>(h * w);
}

torch::Tensor consistency_loss(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits) {
  require_same(teacher_logits, student_logits, "consistency_loss");
  const int64_t cd = class_dim(student_logits);
  auto teacher = torch::softmax(teacher_logits.detach(), cd);
  auto student = torch::softmax(student_logits, cd);
  return (teacher - student).pow(2).sum(cd).mean();
}

torch::Tensor student_total(const torch::Tensor& sup, const torch::Tensor& con, double lambda_con) {
  require(lambda_con >= 0, ErrorKind::Config, "lambda_con must be non-negative");
  return sup + lambda_con * con;
}

torch::Tensor sup_combined(const torch::Tensor& logits_src, const torch::Tensor& logits_trans, const torch::Tensor& y_s) {
  return seg_ce(logits_src, y_s) + seg_ce(logits_trans, y_s);
}

}  // namespace semcon::losses
