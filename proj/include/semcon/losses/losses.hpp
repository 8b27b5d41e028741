#pragma once

#include <string>

#include <torch/types.h>

namespace semcon::losses {

/// Logits, one-hot masks and class maps are channel-first: [K,H,W] or batched [N,K,H,W].
/// Per-pixel maps are [H,W] or [N,H,W]. "Mean over pixels" averages over N*H*W.

/// Distance m(prediction, target) used by every adversarial term.
enum class GanObjective {
  LeastSquares,  ///< (prediction - target)^2
  Standard,      ///< binary cross-entropy on the sigmoid of the prediction
};

GanObjective parse_gan_objective(const std::string& name);
std::string to_string(GanObjective objective);

struct GanTargets {
  static constexpr double kReal = 1.0;
  static constexpr double kFake = 0.0;
};

struct SymCeParams {
  double alpha = 1.0;
  double beta = 1.0;
  /// Value that log(0) is clamped to in the reverse term; must be negative.
  double log_clamp = -4.0;
};

/// Mean over pixels of -log softmax(logits)[true class].
torch::Tensor seg_ce(const torch::Tensor& logits, const torch::Tensor& onehot);

/// alpha * CE(label -> prediction) + beta * reverse CE with clamped log of the label; mean over pixels.
torch::Tensor sym_ce(const torch::Tensor& logits, const torch::Tensor& pseudo_onehot, const SymCeParams& params = {});

/// seg_ce(ac_fake, y_s) + lambda_pl * sym_ce(ac_real, y_hat_t).
torch::Tensor total_seg_loss_d(const torch::Tensor& ac_fake, const torch::Tensor& y_s, const torch::Tensor& ac_real,
                               const torch::Tensor& y_hat_t, double lambda_pl, const SymCeParams& params = {});

/// Elementwise m(prediction, target).
torch::Tensor gan_distance(const torch::Tensor& prediction, double target, GanObjective objective);

/// Per pixel: m(d_fake, 0) + m(d_real, 1).
torch::Tensor dgan_loss_d(const torch::Tensor& d_fake, const torch::Tensor& d_real,
                          GanObjective objective = GanObjective::LeastSquares);
/// Per pixel: m(d_fake, 1).
torch::Tensor dgan_loss_g(const torch::Tensor& d_fake, GanObjective objective = GanObjective::LeastSquares);

/// Per pixel and class: m(d_fake, 0) * y_s + m(d_real, 1) * y_hat_t. Zero wherever both masks are 0.
torch::Tensor cgan_loss_d(const torch::Tensor& d_fake_cls, const torch::Tensor& y_s, const torch::Tensor& d_real_cls,
                          const torch::Tensor& y_hat_t, GanObjective objective = GanObjective::LeastSquares);
/// Per pixel and class: m(d_fake, 1) * y_s.
torch::Tensor cgan_loss_g(const torch::Tensor& d_fake_cls, const torch::Tensor& y_s,
                          GanObjective objective = GanObjective::LeastSquares);

/// Sum over pixels of dgan + lambda_cgan / k * sum_c cgan.
torch::Tensor gan_total(const torch::Tensor& dgan_map, const torch::Tensor& cgan_map, double lambda_cgan, int k);
/// gan_total divided by the number of pixels (the per-pixel mean form used for training).
torch::Tensor gan_mean(const torch::Tensor& dgan_map, const torch::Tensor& cgan_map, double lambda_cgan, int k);

/// (seg_sum + gan_sum) / (h * w), where both inputs follow the summed-over-pixels convention.
torch::Tensor disc_total(const torch::Tensor& seg_sum, const torch::Tensor& gan_sum, int64_t h, int64_t w);

/// Sum over pixels of the 3-channel L1 distance between gx and x.
torch::Tensor identity_loss(const torch::Tensor& gx, const torch::Tensor& x);

/// (seg + gan + id) / (h * w) under the summed convention.
torch::Tensor gen_total(const torch::Tensor& seg_sum, const torch::Tensor& gan_sum, const torch::Tensor& id_sum,
                        int64_t h, int64_t w);

/// Mean over pixels of ||softmax(teacher) - softmax(student)||^2 over classes. The teacher is detached.
torch::Tensor consistency_loss(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits);

/// sup + lambda_con * con.
torch::Tensor student_total(const torch::Tensor& sup, const torch::Tensor& con, double lambda_con);

/// seg_ce(logits_src, y_s) + seg_ce(logits_trans, y_s).
torch::Tensor sup_combined(const torch::Tensor& logits_src, const torch::Tensor& logits_trans, const torch::Tensor& y_s);

}  // namespace semcon::losses
