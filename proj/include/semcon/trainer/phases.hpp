#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/core/types.hpp"
#include "semcon/nets/discriminator.hpp"
#include "semcon/nets/generator.hpp"
#include "semcon/nets/segmenter.hpp"
#include "semcon/toyworld/dataset.hpp"
#include "semcon/trainer/config.hpp"

namespace semcon {

/// Append-only JSON-lines writer for LossReports. A null path discards records.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& file);

  void write(const LossReport& report, const nlohmann::json& extra = nlohmann::json::object());
  const std::vector<LossReport>& history() const { return history_; }

 private:
  std::ofstream out_;
  std::vector<LossReport> history_;
};

/// Everything a segmentation-style phase (warm-up or final training) consumes.
struct SegPhaseData {
  const ImageSet* source = nullptr;      ///< labelled
  const ImageSet* translated = nullptr;  ///< labelled with the source masks; may be null
  const ImageSet* target = nullptr;      ///< unlabelled; may be null or empty
};

struct SegPhaseResult {
  nets::Segmenter student{nullptr};
  nets::Segmenter teacher{nullptr};
  std::vector<LossReport> metrics;
};

/// Mean-teacher training: supervised CE on source (and translated) crops, consistency between
/// the teacher on clean target crops and the student on perturbed ones. Used by the warm-up
/// (no translated images) and final segmentation phases.
SegPhaseResult train_segmenter(const SegPhaseData& data, const SegPhaseConfig& cfg, const RunConfig& run,
                               const std::string& phase, MetricsLog& log);

SegPhaseResult run_warmup(const ImageSet& source, const ImageSet& target, const RunConfig& run, MetricsLog& log);
SegPhaseResult run_segmentation(const ImageSet& source, const ImageSet& translated, const ImageSet& target,
                                const SegPhaseConfig& cfg, const RunConfig& run, MetricsLog& log);

struct PseudoLabelSet {
  torch::Tensor labels;  ///< [N,H,W] int64, one mask per target image
  nlohmann::json coverage;
};

/// Argmax of the teacher's softmax; pixels below `threshold` keep their argmax but are
/// counted in the coverage report.
PseudoLabelSet generate_pseudo_labels(nets::Segmenter& teacher, const ImageSet& targets, double threshold);

struct I2IResult {
  nets::Generator generator{nullptr};      ///< EMA weights, used for translation
  nets::Generator generator_raw{nullptr};  ///< last optimised weights
  nets::Discriminator discriminator{nullptr};
  std::vector<LossReport> metrics;
  nlohmann::json summary;
};

/// Adversarial training of G and D. `pseudo` must hold labels for `target` in precomputed
/// mode and is ignored in online mode. `held_out` (target images never trained on) is used
/// to track identity reconstruction error.
I2IResult run_i2i(const ImageSet& source, const ImageSet& target, const PseudoLabelSet* pseudo,
                  const ImageSet& held_out, const RunConfig& run, MetricsLog& log);

/// Trains the discriminator trunk on source segmentation through a throwaway 1x1 head.
void pretrain_trunk(nets::Discriminator& d, const ImageSet& source, const RunConfig& run);

/// Mean absolute error per pixel and channel between G(x) (noise-free) and x.
double identity_error(nets::Generator& g, const ImageSet& images);

/// Translates whole images noise-free; masks are the original source masks.
ImageSet translate_images(nets::Generator& g, const ImageSet& sources);

/// Per-channel intensity histograms (normalised to sum 1 per channel), [3, bins].
torch::Tensor channel_histogram(const torch::Tensor& images_u8, int64_t bins = 32);
/// Sum over channels of the L1 distance between two histograms.
double histogram_l1(const torch::Tensor& a, const torch::Tensor& b);

// Persistence helpers.
void save_segmenter(const std::filesystem::path& path, const nets::Segmenter& f, const nlohmann::json& meta = {});
nets::Segmenter load_segmenter(const std::filesystem::path& path, const nets::SegmenterOptions& options);
void save_generator(const std::filesystem::path& path, const nets::Generator& g, const nlohmann::json& meta = {});
nets::Generator load_generator(const std::filesystem::path& path, const nets::GeneratorOptions& options);
void save_discriminator(const std::filesystem::path& path, const nets::Discriminator& d);

void save_pseudo_labels(const std::filesystem::path& dir, const PseudoLabelSet& set, const Manifest& targets);
PseudoLabelSet load_pseudo_labels(const std::filesystem::path& dir, int num_classes);

/// Writes translated images plus copies of the source masks under `dir`; returns the manifest.
Manifest save_translated(const std::filesystem::path& dir, const ImageSet& translated, const Manifest& sources);

}  // namespace semcon
