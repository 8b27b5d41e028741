#include "semcon/eval/evaluate.hpp"

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/core/image_io.hpp"
#include "semcon/losses/losses.hpp"
#include "semcon/toyworld/rng.hpp"
#include "semcon/trainer/batching.hpp"

namespace semcon {

nlohmann::json EvalResult::to_json(const ClassSet& subset) const {
  auto per_class = nlohmann::json::array();
  for (const auto& v : ious) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"miou", miou}, {"subset", subset.ids()}, {"iou", per_class}, {"confusion", cm.to_json()}};
}

torch::Tensor predict(nets::Segmenter& f, const torch::Tensor& images, int64_t chunk) {
  torch::NoGradGuard guard;
  const bool was_training = f->is_training();
  f->eval();
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    auto logits = f->forward(images.slice(0, i, std::min(i + chunk, images.size(0))));
    out.push_back(logits.argmax(1));
  }
  f->train(was_training);
  return torch::cat(out);
}

EvalResult evaluate_model(nets::Segmenter& f, const ImageSet& split, const ClassSet& subset,
                          const std::vector<int64_t>& indices) {
  require(split.labelled(), ErrorKind::Prerequisite, "evaluation split has no ground-truth masks");
  std::vector<int64_t> idx = indices;
  if (idx.empty())
    for (int64_t i = 0; i < split.size(); ++i) idx.push_back(i);
  EvalResult r{ConfusionMatrix(split.num_classes), {}, 0};
  for (std::size_t start = 0; start < idx.size(); start += 16) {
    std::vector<int64_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                              idx.begin() + static_cast<std::ptrdiff_t>(std::min(start + 16, idx.size())));
    r.cm = accumulate_cm(predict(f, split.float_images(part)), split.labels(part), std::move(r.cm));
  }
  r.ious = iou_per_class(r.cm);
  r.miou = miou(r.ious, subset);
  return r;
}

nets::Segmenter linear_probe(const nets::Segmenter& f, const ImageSet& labelled,
                             const std::vector<int64_t>& train_idx, const ProbeConfig& cfg) {
  auto probed = nets::clone_segmenter(f);
  if (cfg.steps == 0) return probed;
  require(labelled.labelled() && !train_idx.empty(), ErrorKind::Prerequisite, "linear probe needs labelled images");
  const std::string prefix = nets::SegmenterImpl::kClassifierPrefix;
  std::vector<torch::Tensor> head;
  for (auto& item : probed->named_parameters()) {
    const bool is_head = item.key().rfind(prefix, 0) == 0;
    item.value().set_requires_grad(is_head);
    if (is_head) head.push_back(item.value());
  }
  torch::optim::Adam opt(head, torch::optim::AdamOptions(cfg.lr));
  ImageSet subset{labelled.images.index_select(0, torch::tensor(train_idx)),
                  labelled.masks.index_select(0, torch::tensor(train_idx)), {}, labelled.num_classes};
  Rng rng(derive_seed(cfg.seed, seed_tag("probe")));
  probed->train();
  for (int64_t step = 0; step < cfg.steps; ++step) {
    auto batch = sample_batch(subset, cfg.batch_size, cfg.crop, rng);
    torch::Tensor feats;
    {
      torch::NoGradGuard guard;
      feats = probed->features(batch.images);
    }
    auto logits = probed->classify(feats, cfg.crop, cfg.crop);
    auto loss = losses::seg_ce(logits, onehot_batch(batch.labels, labelled.num_classes));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  for (auto& p : probed->parameters()) p.set_requires_grad(true);
  return probed;
}

std::pair<std::vector<int64_t>, std::vector<int64_t>> probe_halves(int64_t n) {
  std::vector<int64_t> train, held;
  for (int64_t i = 0; i < n; ++i) (i < n / 2 ? train : held).push_back(i);
  return {train, held};
}

void dump_predictions(nets::Segmenter& f, const ImageSet& split, const std::filesystem::path& dir, int64_t count) {
  std::filesystem::create_directories(dir);
  count = std::min(count, split.size());
  // Fixed colours per class for the mask panels.
  const float palette[][3] = {{0.2f, 0.4f, 1.0f}, {-0.6f, -0.6f, -0.6f}, {1.0f, -0.8f, -0.8f},
                              {1.0f, 0.8f, -0.6f}, {-0.2f, 1.0f, -0.2f}, {1.0f, 1.0f, 1.0f}};
  auto colourise = [&](const torch::Tensor& mask) {
    auto out = torch::empty({3, mask.size(0), mask.size(1)});
    for (int c = 0; c < 3; ++c) {
      auto lut = torch::empty({split.num_classes});
      for (int k = 0; k < split.num_classes; ++k) lut[k] = palette[k % 6][c];
      out[c] = lut.index({mask});
    }
    return out;
  };
  for (int64_t i = 0; i < count; ++i) {
    auto img = split.float_images({i});
    auto pred = predict(f, img)[0];
    std::vector<torch::Tensor> panels{img[0], colourise(pred)};
    if (split.labelled()) panels.push_back(colourise(split.labels({i})[0]));
    write_image_png(dir / ("sample_" + std::to_string(i) + ".png"), Image(torch::cat(panels, 2)));
  }
}

}  // namespace semcon
