#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/eval/evaluate.hpp"
#include "semcon/trainer/config.hpp"
#include "semcon/trainer/phases.hpp"

namespace semcon {

/// Environment variable naming the directory under which relative run directories live.
inline constexpr const char* kRunRootEnv = "SEMCON_RUN_ROOT";

/// Resolves a run directory: absolute paths are kept, relative ones go under $SEMCON_RUN_ROOT
/// (or the working directory when unset).
std::filesystem::path resolve_run_dir(const std::filesystem::path& dir);

/// I2I ablation variants: full, no_cgan, sgan, online_pl, no_gseg.
const std::vector<std::string>& i2i_variants();
/// Component grid entries: seg_only, seg_ssl, seg_i2i, seg_ssl_i2i.
const std::vector<std::string>& component_variants();
/// Config of an I2I variant; raises a config error listing valid names for unknown ones.
RunConfig i2i_variant_config(const RunConfig& base, const std::string& variant);

/// Orchestrates phases inside one run directory. Every phase writes its outputs under its own
/// subdirectory and a done.json marker; finished phases are reused rather than recomputed.
///
///   config.json  data/  warmup/  pseudo/  i2i_<v>/  translated_<v>/  seg_<name>/  ablation/
class Pipeline {
 public:
  /// Writes config.json, or checks that an existing one matches `config`.
  Pipeline(RunConfig config, std::filesystem::path run_dir);

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path data_dir() const;
  void gen_data();
  /// Warm-up SSL training followed by pseudo-label generation from its teacher.
  nlohmann::json warmup();
  nlohmann::json i2i(const std::string& variant = "full");
  nlohmann::json translate(const std::string& variant = "full");
  /// name: source_only, i2i_<variant> (supervised on source + translated), ssl_i2i (full method).
  nlohmann::json seg(const std::string& name = "ssl_i2i");

  /// Target-val evaluation of the teacher of a finished phase ("warmup" or "seg_<name>").
  nlohmann::json evaluate_phase(const std::string& phase_dir);

  /// Runs every phase of the method and returns the final teacher's report.
  nlohmann::json run_all();

  /// One row per variant (I2I variants and component names), written to ablation/table.{json,txt}.
  nlohmann::json ablate(const std::vector<std::string>& variants);

  const ImageSet& source();
  const ImageSet& target();
  const ImageSet& target_val();

 private:
  bool done(const std::string& phase) const;
  nlohmann::json read_done(const std::string& phase) const;
  void mark_done(const std::string& phase, const nlohmann::json& summary) const;
  double variant_miou(const std::string& variant);

  RunConfig config_;
  std::filesystem::path dir_;
  ImageSet source_, target_, target_val_;
};

/// Plain-text table of rows {name, miou, ...}.
std::string format_table(const nlohmann::json& rows);

}  // namespace semcon
