#include "semcon/trainer/phases.hpp"

#include <cmath>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/core/image_io.hpp"
#include "semcon/losses/losses.hpp"
#include "semcon/nets/checkpoint.hpp"
#include "semcon/toyworld/rng.hpp"
#include "semcon/trainer/batching.hpp"
#include "semcon/trainer/schedule.hpp"

namespace semcon {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

MetricsLog::MetricsLog(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  out_.open(file, std::ios::binary | std::ios::trunc);
  require(out_.good(), ErrorKind::Io, "cannot write metrics log " + file.string());
}

void MetricsLog::write(const LossReport& report, const nlohmann::json& extra) {
  history_.push_back(report);
  if (!out_.is_open()) return;
  auto j = report.to_json();
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  out_ << j.dump() << '\n';
  out_.flush();
}

namespace {

// Checks a scalar loss term; names it in the fault report.
void require_finite(const torch::Tensor& value, const std::string& phase, int64_t step, const std::string& term) {
  const double v = value.item<double>();
  require(std::isfinite(v), ErrorKind::NumericalFault,
          phase + " step " + std::to_string(step) + ": loss term '" + term + "' is not finite (" + std::to_string(v) + ")");
}

std::vector<torch::Tensor> trainable(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (auto& p : m.parameters())
    if (p.requires_grad()) out.push_back(p);
  return out;
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& params, const OptimConfig& o) {
  return torch::optim::Adam(params, torch::optim::AdamOptions(o.lr).betas({o.beta1, o.beta2}));
}


}  // namespace

SegPhaseResult train_segmenter(const SegPhaseData& data, const SegPhaseConfig& cfg, const RunConfig& run,
                               const std::string& phase, MetricsLog& log) {
  require(data.source != nullptr && data.source->labelled(), ErrorKind::Prerequisite,
          phase + ": labelled source images required");
  const int k = run.num_classes();
  const uint64_t seed = derive_seed(run.seed, seed_tag(phase));
  torch::manual_seed(seed);
  SegPhaseResult r;
  r.student = nets::Segmenter(run.model.segmenter);
  r.teacher = nets::clone_segmenter(r.student);
  for (auto& p : r.teacher->parameters()) p.set_requires_grad(false);
  r.student->train();
  r.teacher->eval();

  const bool use_translated = data.translated != nullptr && data.translated->size() > 0;
  const bool use_target = data.target != nullptr && data.target->size() > 0;
  const auto [n_trans, n_src] = batch_split(cfg.batch_size, use_translated ? cfg.translated_fraction : 0.0);
  Schedule sched;
  sched.con_warmup_steps = cfg.con_warmup_steps;

  auto params = trainable(*r.student);
  auto opt = make_adam(params, cfg.optim);
  Rng rng(seed);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = cfg.optim.rate_at(step);
    set_lr(opt, lr);
    std::vector<torch::Tensor> imgs, labels;
    if (n_src > 0) {
      auto b = sample_batch(*data.source, n_src, run.data.crop, rng);
      imgs.push_back(b.images);
      labels.push_back(b.labels);
    }
    if (n_trans > 0) {
      auto b = sample_batch(*data.translated, n_trans, run.data.crop, rng);
      imgs.push_back(b.images);
      labels.push_back(b.labels);
    }
    auto logits = r.student->forward(torch::cat(imgs));
    auto sup = losses::seg_ce(logits, onehot_batch(torch::cat(labels), k));
    require_finite(sup, phase, step, "sup");

    const double lambda_con = use_target ? lambda_con_at(step, sched, cfg.lambda_con) : 0.0;
    auto con = torch::zeros({}, sup.options());
    if (lambda_con > 0.0) {
      auto tb = sample_batch(*data.target, cfg.batch_size, run.data.crop, rng);
      torch::Tensor teacher_logits;
      {
        torch::NoGradGuard guard;
        teacher_logits = r.teacher->forward(tb.images);
      }
      const uint64_t pseed = derive_seed(seed, static_cast<uint64_t>(step));
      auto student_logits = r.student->forward(perturb_batch(tb.images, run.perturb, pseed));
      con = losses::consistency_loss(teacher_logits, student_logits);
      require_finite(con, phase, step, "con");
    }
    auto total = losses::student_total(sup, con, lambda_con);
    opt.zero_grad();
    total.backward();
    const double grad_norm = clip_gradients(params, cfg.clip_norm);
    opt.step();
    ema_update_module(*r.teacher, *r.student, ema_decay_at(step, cfg.ema_decay));

    if (step % cfg.log_interval == 0 || step + 1 == cfg.steps) {
      LossReport rep{step, phase, {}};
      rep.set("sup", sup.item<double>());
      rep.set("con", con.item<double>());
      rep.set("total", total.item<double>());
      rep.set("grad_norm", grad_norm);
      log.write(rep, {{"lambda_con", lambda_con}, {"lr", lr}});
    }
  }
  r.metrics = log.history();
  return r;
}

SegPhaseResult run_warmup(const ImageSet& source, const ImageSet& target, const RunConfig& run, MetricsLog& log) {
  SegPhaseData data{&source, nullptr, &target};
  return train_segmenter(data, run.warmup, run, "warmup", log);
}

SegPhaseResult run_segmentation(const ImageSet& source, const ImageSet& translated, const ImageSet& target,
                                const SegPhaseConfig& cfg, const RunConfig& run, MetricsLog& log) {
  SegPhaseData data{&source, &translated, &target};
  return train_segmenter(data, cfg, run, "segmentation", log);
}

PseudoLabelSet generate_pseudo_labels(nets::Segmenter& teacher, const ImageSet& targets, double threshold) {
  require(threshold >= 0 && threshold <= 1, ErrorKind::Config, "pseudo-label threshold must lie in [0,1]");
  require(targets.size() > 0, ErrorKind::Io, "no target images to pseudo-label");
  torch::NoGradGuard guard;
  teacher->eval();
  std::vector<torch::Tensor> labels;
  double sum_max = 0, min_max = 1, below = 0, pixels = 0;
  auto per_image = nlohmann::json::array();
  for (int64_t i = 0; i < targets.size(); i += 16) {
    std::vector<int64_t> idx;
    for (int64_t j = i; j < std::min(i + 16, targets.size()); ++j) idx.push_back(j);
    auto prob = torch::softmax(teacher->forward(targets.float_images(idx)), 1);
    auto [max_p, arg] = prob.max(1);
    labels.push_back(arg);
    for (int64_t j = 0; j < max_p.size(0); ++j) {
      auto m = max_p[j];
      const double frac = (m < threshold).to(torch::kFloat64).mean().item<double>();
      per_image.push_back({{"mean_max_prob", m.mean().item<double>()}, {"below_threshold", frac}});
    }
    sum_max += max_p.to(torch::kFloat64).sum().item<double>();
    min_max = std::min(min_max, max_p.min().item<double>());
    below += (max_p < threshold).sum().item<double>();
    pixels += static_cast<double>(max_p.numel());
  }
  PseudoLabelSet out;
  out.labels = torch::cat(labels).contiguous();
  out.coverage = {{"threshold", threshold},
                  {"mean_max_prob", sum_max / pixels},
                  {"min_max_prob", min_max},
                  {"below_threshold", below / pixels},
                  {"images", per_image}};
  return out;
}

void pretrain_trunk(nets::Discriminator& d, const ImageSet& source, const RunConfig& run) {
  const auto& cfg = run.i2i;
  const int k = run.num_classes();
  torch::manual_seed(derive_seed(run.seed, seed_tag("trunk-head")));
  torch::nn::Conv2d head(torch::nn::Conv2dOptions(d->trunk->out_width, k, 1));
  std::vector<torch::Tensor> params = d->trunk->parameters();
  for (auto& p : head->parameters()) params.push_back(p);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.trunk_lr));
  Rng rng(derive_seed(run.seed, seed_tag("trunk")));
  for (int64_t step = 0; step < cfg.trunk_pretrain_steps; ++step) {
    auto b = sample_batch(source, cfg.batch_size, run.data.crop, rng);
    auto logits = F::interpolate(head->forward(d->trunk->forward(b.images)),
                                 F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{run.data.crop, run.data.crop})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
    auto loss = losses::seg_ce(logits, onehot_batch(b.labels, k));
    require_finite(loss, "trunk-pretrain", step, "seg");
    opt.zero_grad();
    loss.backward();
    clip_gradients(params, cfg.clip_norm);
    opt.step();
  }
}

double identity_error(nets::Generator& g, const ImageSet& images) {
  torch::NoGradGuard guard;
  double sum = 0, n = 0;
  for (int64_t i = 0; i < images.size(); i += 16) {
    std::vector<int64_t> idx;
    for (int64_t j = i; j < std::min(i + 16, images.size()); ++j) idx.push_back(j);
    auto x = images.float_images(idx);
    sum += (g->forward(x) - x).abs().to(torch::kFloat64).sum().item<double>();
    n += static_cast<double>(x.numel());
  }
  return n > 0 ? sum / n : 0.0;
}

I2IResult run_i2i(const ImageSet& source, const ImageSet& target, const PseudoLabelSet* pseudo,
                  const ImageSet& held_out, const RunConfig& run, MetricsLog& log) {
  const auto& cfg = run.i2i;
  const int k = run.num_classes();
  const bool online = cfg.pseudo_labels == PseudoLabelSource::Online;
  require(source.labelled(), ErrorKind::Prerequisite, "i2i: labelled source images required");
  require(target.size() > 0, ErrorKind::Prerequisite, "i2i: target images required");
  if (!online) {
    require(pseudo != nullptr && pseudo->labels.defined(), ErrorKind::Prerequisite,
            "i2i: precomputed pseudo-labels required (run warmup first)");
    require(pseudo->labels.size(0) == target.size(), ErrorKind::Prerequisite,
            "i2i: pseudo-label count does not match target images");
  }
  const uint64_t seed = derive_seed(run.seed, seed_tag("i2i"));
  torch::manual_seed(seed);
  I2IResult r;
  r.generator_raw = nets::Generator(run.model.generator);
  r.discriminator = nets::Discriminator(run.model.discriminator);
  auto& g = r.generator_raw;
  auto& d = r.discriminator;

  if (cfg.trunk == "pretrained") pretrain_trunk(d, source, run);
  d->freeze_trunk();
  const NetParams trunk_before = d->trunk_params();

  r.summary["identity_error_init"] = identity_error(g, held_out);
  auto g_params = trainable(*g);
  auto g_opt = make_adam(g_params, cfg.g_optim);
  auto d_params = d->trainable_parameters();
  auto d_opt = make_adam(d_params, cfg.d_optim);
  Rng rng(seed);

  // Identity-only steps so that G starts from (approximately) the identity mapping.
  for (int64_t step = 0; step < cfg.identity_pretrain_steps; ++step) {
    auto xs = sample_batch(source, cfg.batch_size / 2 + 1, run.data.crop, rng).images;
    auto xt = sample_batch(target, cfg.batch_size / 2 + 1, run.data.crop, rng).images;
    auto x = torch::cat({xs, xt});
    auto loss = losses::identity_loss(g->forward(x, derive_seed(seed, seed_tag("id") + static_cast<uint64_t>(step))), x) /
                static_cast<double>(x.size(0) * x.size(2) * x.size(3));
    require_finite(loss, "i2i-identity", step, "id");
    g_opt.zero_grad();
    loss.backward();
    clip_gradients(g_params, cfg.clip_norm);
    g_opt.step();
  }
  r.summary["identity_error_after_pretrain"] = identity_error(g, held_out);
  r.generator = nets::Generator(run.model.generator);
  NetParams::from_module(*g).load_into(*r.generator);
  for (auto& p : r.generator->parameters()) p.set_requires_grad(false);

  Schedule sched{cfg.fade_start, cfg.fade_end, cfg.lambda_max, 0};
  const torch::Tensor empty_pl;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    set_lr(g_opt, cfg.g_optim.rate_at(step));
    set_lr(d_opt, cfg.d_optim.rate_at(step));
    const double lambda = online ? lambda_fade(step, sched) : cfg.lambda_max;
    const double lambda_cgan = cfg.class_gan ? lambda : 0.0;
    auto sb = sample_batch(source, cfg.batch_size, run.data.crop, rng);
    auto tb = sample_batch(target, cfg.batch_size, run.data.crop, rng, online ? empty_pl : pseudo->labels);
    auto y_s = onehot_batch(sb.labels, k);
    const int64_t h = sb.images.size(2), w = sb.images.size(3);

    auto fake = g->forward(sb.images, derive_seed(seed, static_cast<uint64_t>(step)));

    // Discriminator step.
    auto d_fake = d->forward(fake.detach());
    auto d_real = d->forward(tb.images);
    torch::Tensor y_t;
    if (online) y_t = onehot_batch(d_real.ac_logits.detach().argmax(1), k);
    else y_t = onehot_batch(tb.labels, k);
    auto d_seg = losses::total_seg_loss_d(d_fake.ac_logits, y_s, d_real.ac_logits, y_t, lambda, cfg.sym_ce);
    auto d_dgan = losses::dgan_loss_d(d_fake.domain_map(), d_real.domain_map(), cfg.gan);
    auto d_cgan = losses::cgan_loss_d(d_fake.class_maps(), y_s, d_real.class_maps(), y_t, cfg.gan);
    auto d_gan = losses::gan_mean(d_dgan, d_cgan, lambda_cgan, k);
    auto d_total = d_seg + d_gan;
    require_finite(d_seg, "i2i", step, "d_seg");
    require_finite(d_gan, "i2i", step, "d_gan");
    d_opt.zero_grad();
    d_total.backward();
    const double d_norm = clip_gradients(d_params, cfg.clip_norm);
    d_opt.step();

    // Generator step against the updated discriminator.
    auto d_gen = d->forward(fake);
    auto g_gan = losses::gan_mean(losses::dgan_loss_g(d_gen.domain_map(), cfg.gan),
                                  losses::cgan_loss_g(d_gen.class_maps(), y_s, cfg.gan), lambda_cgan, k);
    auto g_seg = cfg.generator_seg ? losses::seg_ce(d_gen.ac_logits, y_s) : torch::zeros({}, g_gan.options());
    auto xt = tb.images;
    auto g_id = losses::identity_loss(g->forward(xt, derive_seed(seed, seed_tag("id-main") + static_cast<uint64_t>(step))), xt) /
                static_cast<double>(xt.size(0) * h * w);
    auto g_total = g_seg + g_gan + cfg.identity_weight * g_id;
    require_finite(g_seg, "i2i", step, "g_seg");
    require_finite(g_gan, "i2i", step, "g_gan");
    require_finite(g_id, "i2i", step, "g_id");
    g_opt.zero_grad();
    g_total.backward();
    const double g_norm = clip_gradients(g_params, cfg.clip_norm);
    g_opt.step();
    ema_update_module(*r.generator, *g, ema_decay_at(step, cfg.ema_decay));

    if (step % cfg.log_interval == 0 || step + 1 == cfg.steps) {
      LossReport rep{step, "i2i", {}};
      rep.set("d_seg", d_seg.item<double>());
      rep.set("d_gan", d_gan.item<double>());
      rep.set("d_total", d_total.item<double>());
      rep.set("g_seg", g_seg.item<double>());
      rep.set("g_gan", g_gan.item<double>());
      rep.set("g_id", g_id.item<double>());
      rep.set("g_total", g_total.item<double>());
      rep.set("d_grad_norm", d_norm);
      rep.set("g_grad_norm", g_norm);
      log.write(rep, {{"lambda_pl", lambda}, {"lambda_cgan", lambda_cgan}});
    }
  }
  // Parameters that D exposes to its optimiser never include the trunk; verify that nothing
  // else touched it either.
  r.summary["trunk_unchanged"] = d->trunk_params().bitwise_equal(trunk_before);
  r.summary["identity_error_final"] = identity_error(r.generator, held_out);
  r.summary["identity_error_final_raw"] = identity_error(g, held_out);
  r.metrics = log.history();
  return r;
}

ImageSet translate_images(nets::Generator& g, const ImageSet& sources) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < sources.size(); i += 16) {
    std::vector<int64_t> idx;
    for (int64_t j = i; j < std::min(i + 16, sources.size()); ++j) idx.push_back(j);
    auto y = g->forward(sources.float_images(idx));
    out.push_back(torch::round((y.clamp(-1, 1) + 1.0) * 127.5).to(torch::kUInt8));
  }
  ImageSet t;
  t.images = torch::cat(out);
  t.masks = sources.masks;
  t.seeds = sources.seeds;
  t.num_classes = sources.num_classes;
  return t;
}

torch::Tensor channel_histogram(const torch::Tensor& images_u8, int64_t bins) {
  require(images_u8.dim() == 4 && images_u8.size(1) == 3, ErrorKind::Shape, "channel_histogram expects [N,3,H,W]");
  auto hist = torch::zeros({3, bins}, torch::kFloat64);
  for (int64_t c = 0; c < 3; ++c) {
    auto v = torch::div(images_u8.select(1, c).reshape(-1).to(torch::kInt64) * bins, 256, "floor");
    auto counts = torch::bincount(v, std::nullopt, bins).to(torch::kFloat64);
    hist[c] = counts / counts.sum();
  }
  return hist;
}

double histogram_l1(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), ErrorKind::Shape, "histogram_l1: shape mismatch");
  return (a - b).abs().sum().item<double>();
}

void save_segmenter(const fs::path& path, const nets::Segmenter& f, const nlohmann::json& meta) {
  nets::Checkpoint c{f->options().fingerprint(), NetParams::from_module(*f), meta.is_null() ? nlohmann::json::object() : meta};
  nets::save_checkpoint(path, c);
}

nets::Segmenter load_segmenter(const fs::path& path, const nets::SegmenterOptions& options) {
  auto c = nets::load_checkpoint(path, options.fingerprint());
  nets::Segmenter f(options);
  c.params.load_into(*f);
  return f;
}

void save_generator(const fs::path& path, const nets::Generator& g, const nlohmann::json& meta) {
  nets::Checkpoint c{g->options().fingerprint(), NetParams::from_module(*g), meta.is_null() ? nlohmann::json::object() : meta};
  nets::save_checkpoint(path, c);
}

nets::Generator load_generator(const fs::path& path, const nets::GeneratorOptions& options) {
  auto c = nets::load_checkpoint(path, options.fingerprint());
  nets::Generator g(options);
  c.params.load_into(*g);
  return g;
}

void save_discriminator(const fs::path& path, const nets::Discriminator& d) {
  nets::save_checkpoint(path, {d->options().fingerprint(), NetParams::from_module(*d), {{"trunk_frozen", d->trunk_frozen()}}});
}

void save_pseudo_labels(const fs::path& dir, const PseudoLabelSet& set, const Manifest& targets) {
  fs::create_directories(dir);
  require(static_cast<std::size_t>(set.labels.size(0)) == targets.size(), ErrorKind::Shape,
          "pseudo-label count does not match target manifest");
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = targets.records()[i];
    const std::string name = "pl_" + std::to_string(i) + ".png";
    write_mask_png(dir / name, SegMask(set.labels[static_cast<int64_t>(i)], kToyClasses));
    records.push_back({fs::relative(targets.image_path(i), dir).string(), name, src.domain, src.seed});
  }
  Manifest(dir, records).save(dir / "pseudo.tsv");
  std::ofstream(dir / "coverage.json") << set.coverage.dump(2) << '\n';
}

PseudoLabelSet load_pseudo_labels(const fs::path& dir, int num_classes) {
  require(fs::exists(dir / "pseudo.tsv"), ErrorKind::Prerequisite,
          "pseudo-labels not found under " + dir.string() + " (run warmup first)");
  auto m = Manifest::load(dir / "pseudo.tsv");
  std::vector<torch::Tensor> labels;
  for (std::size_t i = 0; i < m.size(); ++i) labels.push_back(read_mask_png(m.mask_path(i), num_classes).tensor());
  PseudoLabelSet out;
  out.labels = torch::stack(labels);
  std::ifstream in(dir / "coverage.json");
  if (in.good()) out.coverage = nlohmann::json::parse(in, nullptr, false);
  return out;
}

Manifest save_translated(const fs::path& dir, const ImageSet& translated, const Manifest& sources) {
  fs::create_directories(dir);
  require(static_cast<std::size_t>(translated.size()) == sources.size(), ErrorKind::Shape,
          "translated image count does not match source manifest");
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& src = sources.records()[i];
    const std::string stem = "t_" + std::to_string(src.seed);
    write_image_png(dir / (stem + ".png"), Image(bytes_to_float(translated.images[static_cast<int64_t>(i)])));
    fs::copy_file(sources.mask_path(i), dir / (stem + "_mask.png"), fs::copy_options::overwrite_existing);
    records.push_back({stem + ".png", stem + "_mask.png", "translated", src.seed});
  }
  Manifest m(dir, records);
  m.save(dir / "translated.tsv");
  return m;
}

}  // namespace semcon
