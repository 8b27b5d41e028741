#pragma once

#include <cstdint>
#include <vector>

#include <torch/nn/module.h>
#include <torch/types.h>

#include "semcon/core/types.hpp"

namespace semcon {

struct Schedule {
  int64_t fade_start = 160;
  int64_t fade_end = 800;
  double lambda_max = 0.3;
  int64_t con_warmup_steps = 300;

  void validate() const;
};

/// 0 up to fade_start, lambda_max from fade_end on, linear in between.
double lambda_fade(int64_t step, const Schedule& s);

/// lambda_con for a segmentation step: 0 for the first con_warmup_steps, `lambda_con` after.
double lambda_con_at(int64_t step, const Schedule& s, double lambda_con);

/// decay * teacher + (1 - decay) * student, elementwise.
NetParams ema_update(const NetParams& teacher, const NetParams& student, double decay);

/// In-place version over two modules with identical structure. Buffers are copied from the student.
void ema_update_module(torch::nn::Module& teacher, const torch::nn::Module& student, double decay);

/// Decay used at a given step: the configured decay, lowered early on so the teacher does not
/// lag behind a freshly initialised student (min(decay, 1 - 1/(step + 1))).
double ema_decay_at(int64_t step, double decay);

/// Global L2 norm over all arrays. Non-finite entries raise a numerical fault.
double global_norm(const std::vector<torch::Tensor>& grads);

/// Returns the gradients scaled by max_norm / norm when their global norm exceeds max_norm.
NetParams clip_global_norm(const NetParams& grads, double max_norm);

/// Clips the .grad() of the given parameters in place; returns the norm before clipping.
double clip_gradients(const std::vector<torch::Tensor>& params, double max_norm);

}  // namespace semcon
