#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/toyworld/toyworld.hpp"

namespace semcon {

/// One manifest line: image path, mask path (empty when unlabelled), domain tag, scene seed.
/// Paths are relative to the manifest's directory.
struct ManifestRecord {
  std::string image;
  std::string mask;
  std::string domain;
  uint64_t seed = 0;

  bool operator==(const ManifestRecord&) const = default;
};

/// Tab-separated, one record per line, no header.
class Manifest {
 public:
  Manifest() = default;
  Manifest(std::filesystem::path root, std::vector<ManifestRecord> records);

  static Manifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ManifestRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool labelled() const;

  std::filesystem::path image_path(std::size_t i) const { return root_ / records_[i].image; }
  std::filesystem::path mask_path(std::size_t i) const { return root_ / records_[i].mask; }

 private:
  std::filesystem::path root_;
  std::vector<ManifestRecord> records_;
};

/// Seed ranges per split: split k uses seeds base + offset_k + [0, n_k).
struct SeedOffsets {
  uint64_t source = 0;
  uint64_t target = 1u << 20;
  uint64_t target_val = 2u << 20;
};

struct SplitRequest {
  DomainSpec source = DomainSpec::source_default();
  DomainSpec target = DomainSpec::target_default();
  int64_t n_src = 1000;
  int64_t n_tgt = 1000;
  int64_t n_val_tgt = 200;
  uint64_t seed = 1;
  int64_t image_size = 96;
  SeedOffsets offsets{};
};

struct SplitFiles {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path target_val;
  std::filesystem::path histograms;
};

inline constexpr const char* kSourceManifest = "source.tsv";
inline constexpr const char* kTargetManifest = "target.tsv";
inline constexpr const char* kTargetValManifest = "target_val.tsv";

/// Renders and persists source (labelled), target (unlabelled) and target-val (labelled,
/// evaluation only) splits under out_dir, plus per-split class histograms.
SplitFiles make_split(const SplitRequest& request, const std::filesystem::path& out_dir);

/// Seeds assigned to each split; overlapping ranges raise a config error.
struct SplitSeeds {
  std::vector<uint64_t> source, target, target_val;
};
SplitSeeds plan_split_seeds(const SplitRequest& request);

/// Images held as bytes ([N,3,H,W] uint8) plus optional labels ([N,H,W] int64).
struct ImageSet {
  torch::Tensor images;
  torch::Tensor masks;
  std::vector<uint64_t> seeds;
  int num_classes = kToyClasses;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  bool labelled() const { return masks.defined(); }
  /// Float images in [-1, 1] for the given indices.
  torch::Tensor float_images(const std::vector<int64_t>& idx) const;
  torch::Tensor labels(const std::vector<int64_t>& idx) const;
};

ImageSet load_image_set(const Manifest& manifest, bool with_masks, int num_classes = kToyClasses);

/// Per-class pixel counts over a labelled set.
std::vector<int64_t> class_histogram(const ImageSet& set);

}  // namespace semcon
