#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/losses/losses.hpp"
#include "semcon/nets/discriminator.hpp"
#include "semcon/nets/generator.hpp"
#include "semcon/nets/segmenter.hpp"
#include "semcon/toyworld/dataset.hpp"

namespace semcon {

struct OptimConfig {
  double lr = 1e-3;
  /// Multiplicative learning-rate factor applied per `decay_steps` (1 = constant).
  double decay_rate = 1.0;
  int64_t decay_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;

  double rate_at(int64_t step) const;
};

enum class PseudoLabelSource { Precomputed, Online };

/// Settings of the warm-up and segmentation phases (both train a student and an EMA teacher).
struct SegPhaseConfig {
  int64_t steps = 1000;
  int64_t batch_size = 8;
  OptimConfig optim{};
  double clip_norm = 5.0;
  double ema_decay = 0.99;
  double lambda_con = 1.0;
  int64_t con_warmup_steps = 150;
  /// Fraction of each supervised batch drawn from translated images; the rest is raw source.
  double translated_fraction = 0.5;
  int64_t log_interval = 50;
};

struct I2IPhaseConfig {
  int64_t steps = 600;
  int64_t batch_size = 8;
  OptimConfig g_optim{};
  OptimConfig d_optim{};
  double clip_norm = 5.0;
  double ema_decay = 0.99;
  PseudoLabelSource pseudo_labels = PseudoLabelSource::Precomputed;
  double lambda_max = 0.3;
  int64_t fade_start = 100;
  int64_t fade_end = 400;
  losses::GanObjective gan = losses::GanObjective::LeastSquares;
  bool class_gan = true;
  bool generator_seg = true;
  double identity_weight = 2.0;
  losses::SymCeParams sym_ce{};
  /// "pretrained": trunk trained briefly on source segmentation, then frozen. "random": frozen at init.
  std::string trunk = "pretrained";
  int64_t trunk_pretrain_steps = 300;
  double trunk_lr = 1e-3;
  /// Identity-only steps on source and target images before adversarial training starts.
  int64_t identity_pretrain_steps = 200;
  int64_t log_interval = 50;
};

struct PseudoLabelConfig {
  double threshold = 0.9;
};

struct EvalConfig {
  int64_t probe_steps = 500;
  double probe_lr = 1e-3;
  int64_t probe_batch = 8;
};

struct DataConfig {
  SplitRequest split{};
  int64_t crop = 64;
  /// Dataset directory; relative paths resolve against the run directory.
  std::string dir = "data";
};

struct ModelConfig {
  nets::SegmenterOptions segmenter{};
  nets::GeneratorOptions generator{};
  nets::DiscriminatorOptions discriminator{};
};

struct RunConfig {
  std::string experiment = "default";
  uint64_t seed = 1;
  DataConfig data{};
  ModelConfig model{};
  PerturbSpec perturb{};
  SegPhaseConfig warmup{};
  I2IPhaseConfig i2i{};
  PseudoLabelConfig pseudo{};
  SegPhaseConfig segmentation{};
  EvalConfig eval{};

  int num_classes() const { return model.segmenter.num_classes; }
  void validate() const;
};

/// Full default configuration as JSON; every tunable constant is a named key.
nlohmann::json default_config_json();

/// Merge `user` over the defaults. Unknown keys and type mismatches raise a config error
/// naming the dotted key path.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user);

/// Applies "a.b.c=value" overrides; the value is parsed as JSON, falling back to a string.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

RunConfig parse_config(const nlohmann::json& merged);
nlohmann::json config_to_json(const RunConfig& config);

/// Reads a config file (may be partial), merges defaults, applies overrides, parses.
RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

/// Small configuration for quick runs and tests: tiny splits and short phases.
nlohmann::json smoke_config_json();

}  // namespace semcon
