#include "semcon/toyworld/dataset.hpp"

#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/core/image_io.hpp"

namespace semcon {

namespace fs = std::filesystem;

Manifest::Manifest(fs::path root, std::vector<ManifestRecord> records)
    : root_(std::move(root)), records_(std::move(records)) {}

Manifest Manifest::load(const fs::path& file) {
  std::ifstream in(file);
  require(in.good(), ErrorKind::Io, "cannot open manifest " + file.string());
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (!line.empty() && line.back() == '\t') fields.emplace_back();
    require(fields.size() == 4, ErrorKind::Io,
            file.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    ManifestRecord r;
    r.image = fields[0];
    r.mask = fields[1];
    r.domain = fields[2];
    try {
      r.seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      fail(ErrorKind::Io, file.string() + ":" + std::to_string(line_no) + ": bad seed field");
    }
    records.push_back(std::move(r));
  }
  return Manifest(file.parent_path(), std::move(records));
}

void Manifest::save(const fs::path& file) const {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write manifest " + file.string());
  for (const auto& r : records_) out << r.image << '\t' << r.mask << '\t' << r.domain << '\t' << r.seed << '\n';
}

bool Manifest::labelled() const {
  if (records_.empty()) return false;
  for (const auto& r : records_)
    if (r.mask.empty()) return false;
  return true;
}

SplitSeeds plan_split_seeds(const SplitRequest& req) {
  require(req.n_src > 0 && req.n_tgt > 0 && req.n_val_tgt > 0, ErrorKind::Config, "split counts must be positive");
  struct Range {
    const char* name;
    uint64_t lo, n;
  };
  const Range ranges[3] = {{"source", req.offsets.source, static_cast<uint64_t>(req.n_src)},
                           {"target", req.offsets.target, static_cast<uint64_t>(req.n_tgt)},
                           {"target_val", req.offsets.target_val, static_cast<uint64_t>(req.n_val_tgt)}};
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      const bool disjoint = ranges[a].lo + ranges[a].n <= ranges[b].lo || ranges[b].lo + ranges[b].n <= ranges[a].lo;
      require(disjoint, ErrorKind::Config,
              std::string("seed ranges of splits '") + ranges[a].name + "' and '" + ranges[b].name + "' overlap");
    }
  auto fill = [&](const Range& r) {
    std::vector<uint64_t> seeds(r.n);
    for (uint64_t i = 0; i < r.n; ++i) seeds[i] = req.seed * 100'000'000ULL + r.lo + i;
    return seeds;
  };
  return SplitSeeds{fill(ranges[0]), fill(ranges[1]), fill(ranges[2])};
}

namespace {

std::vector<int64_t> histogram_of(const SegMask& mask, std::vector<int64_t> counts) {
  auto flat = mask.tensor().flatten();
  const int64_t* p = flat.data_ptr<int64_t>();
  for (int64_t i = 0; i < flat.numel(); ++i) ++counts[static_cast<std::size_t>(p[i])];
  return counts;
}

}  // namespace

SplitFiles make_split(const SplitRequest& req, const fs::path& out_dir) {
  req.source.validate();
  req.target.validate();
  const SplitSeeds seeds = plan_split_seeds(req);
  fs::create_directories(out_dir);

  nlohmann::json histograms;
  auto render = [&](const std::vector<uint64_t>& split_seeds, const DomainSpec& spec, Domain domain,
                    const std::string& split, bool keep_masks) {
    std::vector<ManifestRecord> records;
    std::vector<int64_t> counts(kToyClasses, 0);
    for (uint64_t seed : split_seeds) {
      const auto scene = sample_scene(seed, spec, req.image_size, domain);
      const std::string stem = split + "/" + std::to_string(seed);
      write_image_png(out_dir / (stem + ".png"), scene.image);
      ManifestRecord r{stem + ".png", "", to_string(domain), seed};
      if (keep_masks) {
        write_mask_png(out_dir / (stem + "_mask.png"), scene.mask);
        r.mask = stem + "_mask.png";
      }
      // Histograms are recorded for every split, including the unlabelled one.
      counts = histogram_of(scene.mask, std::move(counts));
      records.push_back(std::move(r));
    }
    histograms[split] = counts;
    return Manifest(out_dir, std::move(records));
  };

  SplitFiles files{out_dir / kSourceManifest, out_dir / kTargetManifest, out_dir / kTargetValManifest,
                   out_dir / "class_histograms.json"};
  render(seeds.source, req.source, Domain::Source, "source", true).save(files.source);
  render(seeds.target, req.target, Domain::Target, "target", false).save(files.target);
  render(seeds.target_val, req.target, Domain::Target, "target_val", true).save(files.target_val);
  std::ofstream(files.histograms, std::ios::binary) << histograms.dump(2) << '\n';
  return files;
}

torch::Tensor ImageSet::float_images(const std::vector<int64_t>& idx) const {
  auto index = torch::tensor(idx, torch::kInt64);
  return bytes_to_float(images.index_select(0, index));
}

torch::Tensor ImageSet::labels(const std::vector<int64_t>& idx) const {
  require(labelled(), ErrorKind::Prerequisite, "image set carries no labels");
  return masks.index_select(0, torch::tensor(idx, torch::kInt64));
}

ImageSet load_image_set(const Manifest& manifest, bool with_masks, int num_classes) {
  require(manifest.size() > 0, ErrorKind::Io, "manifest under " + manifest.root().string() + " is empty");
  ImageSet set;
  set.num_classes = num_classes;
  std::vector<torch::Tensor> images, masks;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    images.push_back(read_image_png_bytes(manifest.image_path(i)));
    if (with_masks) {
      require(!manifest.records()[i].mask.empty(), ErrorKind::Prerequisite,
              "record " + manifest.records()[i].image + " has no mask");
      masks.push_back(read_mask_png(manifest.mask_path(i), num_classes).tensor());
    }
    set.seeds.push_back(manifest.records()[i].seed);
  }
  set.images = torch::stack(images);
  if (with_masks) set.masks = torch::stack(masks);
  return set;
}

std::vector<int64_t> class_histogram(const ImageSet& set) {
  require(set.labelled(), ErrorKind::Prerequisite, "histogram needs labels");
  auto counts = torch::bincount(set.masks.flatten(), {}, set.num_classes);
  std::vector<int64_t> out(static_cast<std::size_t>(set.num_classes));
  for (int c = 0; c < set.num_classes; ++c) out[static_cast<std::size_t>(c)] = counts[c].item<int64_t>();
  return out;
}

}  // namespace semcon
