#include "semcon/trainer/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <cstdio>
#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_run_dir(const fs::path& dir) {
  if (dir.is_absolute()) return dir;
  const char* root = std::getenv(kRunRootEnv);
  return root != nullptr && *root != '\0' ? fs::path(root) / dir : dir;
}

const std::vector<std::string>& i2i_variants() {
  static const std::vector<std::string> names{"full", "no_cgan", "sgan", "online_pl", "no_gseg"};
  return names;
}

const std::vector<std::string>& component_variants() {
  static const std::vector<std::string> names{"seg_only", "seg_ssl", "seg_i2i", "seg_ssl_i2i"};
  return names;
}

namespace {

std::string valid_names() {
  std::string s;
  for (const auto* list : {&i2i_variants(), &component_variants()})
    for (const auto& n : *list) s += (s.empty() ? "" : ", ") + n;
  return s;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  require(in.good(), ErrorKind::Io, "cannot read " + file.string());
  auto j = json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorKind::Io, file.string() + " is not valid JSON");
  return j;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

}  // namespace

RunConfig i2i_variant_config(const RunConfig& base, const std::string& variant) {
  RunConfig c = base;
  if (variant == "full") return c;
  if (variant == "no_cgan") c.i2i.class_gan = false;
  else if (variant == "sgan") c.i2i.gan = losses::GanObjective::Standard;
  else if (variant == "online_pl") c.i2i.pseudo_labels = PseudoLabelSource::Online;
  else if (variant == "no_gseg") c.i2i.generator_seg = false;
  else fail(ErrorKind::Config, "unknown variant '" + variant + "'; valid names: " + valid_names());
  return c;
}

Pipeline::Pipeline(RunConfig config, fs::path run_dir) : config_(std::move(config)), dir_(std::move(run_dir)) {
  config_.validate();
  fs::create_directories(dir_);
  const auto file = dir_ / "config.json";
  const json current = config_to_json(config_);
  if (fs::exists(file)) {
    require(read_json(file) == current, ErrorKind::Config,
            "run directory " + dir_.string() + " was created with a different config; use a fresh directory");
  } else {
    write_json(file, current);
  }
}

fs::path Pipeline::data_dir() const {
  fs::path d(config_.data.dir);
  return d.is_absolute() ? d : dir_ / d;
}

bool Pipeline::done(const std::string& phase) const { return fs::exists(dir_ / phase / "done.json"); }
json Pipeline::read_done(const std::string& phase) const { return read_json(dir_ / phase / "done.json"); }
void Pipeline::mark_done(const std::string& phase, const json& summary) const {
  write_json(dir_ / phase / "done.json", summary);
}

void Pipeline::gen_data() {
  if (fs::exists(data_dir() / "done.json")) return;
  make_split(config_.data.split, data_dir());
  write_json(data_dir() / "done.json", {{"split", config_to_json(config_)["data"]}});
}

const ImageSet& Pipeline::source() {
  if (source_.size() == 0) {
    gen_data();
    source_ = load_image_set(Manifest::load(data_dir() / kSourceManifest), true, config_.num_classes());
  }
  return source_;
}

const ImageSet& Pipeline::target() {
  if (target_.size() == 0) {
    gen_data();
    target_ = load_image_set(Manifest::load(data_dir() / kTargetManifest), false, config_.num_classes());
  }
  return target_;
}

const ImageSet& Pipeline::target_val() {
  if (target_val_.size() == 0) {
    gen_data();
    target_val_ = load_image_set(Manifest::load(data_dir() / kTargetValManifest), true, config_.num_classes());
  }
  return target_val_;
}

json Pipeline::warmup() {
  if (done("warmup") && done("pseudo")) return read_done("warmup");
  const auto wdir = dir_ / "warmup";
  MetricsLog log(wdir / "metrics.jsonl");
  auto r = run_warmup(source(), target(), config_, log);
  save_segmenter(wdir / "student.ckpt", r.student);
  save_segmenter(wdir / "teacher.ckpt", r.teacher);
  auto pl = generate_pseudo_labels(r.teacher, target(), config_.pseudo.threshold);
  save_pseudo_labels(dir_ / "pseudo", pl, Manifest::load(data_dir() / kTargetManifest));
  mark_done("pseudo", {{"mean_max_prob", pl.coverage["mean_max_prob"]}, {"below_threshold", pl.coverage["below_threshold"]}});
  const auto ev = evaluate_model(r.teacher, target_val(), ClassSet::all(config_.num_classes()));
  json summary{{"teacher_miou", ev.miou}, {"steps", config_.warmup.steps}};
  write_json(wdir / "eval.json", ev.to_json(ClassSet::all(config_.num_classes())));
  mark_done("warmup", summary);
  return summary;
}

json Pipeline::i2i(const std::string& variant) {
  const auto cfg = i2i_variant_config(config_, variant);
  const std::string phase = "i2i_" + variant;
  if (done(phase)) return read_done(phase);
  PseudoLabelSet pl;
  if (cfg.i2i.pseudo_labels == PseudoLabelSource::Precomputed) {
    require(done("pseudo"), ErrorKind::Prerequisite,
            "i2i with precomputed pseudo-labels needs the warmup phase first (no " + (dir_ / "pseudo").string() + ")");
    pl = load_pseudo_labels(dir_ / "pseudo", config_.num_classes());
  }
  MetricsLog log(dir_ / phase / "metrics.jsonl");
  auto r = run_i2i(source(), target(), pl.labels.defined() ? &pl : nullptr, target_val(), cfg, log);
  save_generator(dir_ / phase / "generator.ckpt", r.generator, {{"variant", variant}, {"ema", true}});
  save_generator(dir_ / phase / "generator_raw.ckpt", r.generator_raw, {{"variant", variant}, {"ema", false}});
  save_discriminator(dir_ / phase / "discriminator.ckpt", r.discriminator);
  mark_done(phase, r.summary);
  return r.summary;
}

json Pipeline::translate(const std::string& variant) {
  const std::string phase = "translated_" + variant;
  if (done(phase)) return read_done(phase);
  require(done("i2i_" + variant), ErrorKind::Prerequisite,
          "translate needs a trained generator (run i2i for variant '" + variant + "' first)");
  auto g = load_generator(dir_ / ("i2i_" + variant) / "generator.ckpt", config_.model.generator);
  g->eval();
  auto translated = translate_images(g, source());
  save_translated(dir_ / phase, translated, Manifest::load(data_dir() / kSourceManifest));
  const auto target_hist = channel_histogram(target().images);
  json summary{{"count", translated.size()},
               {"hist_l1_source_to_target", histogram_l1(channel_histogram(source().images), target_hist)},
               {"hist_l1_translated_to_target", histogram_l1(channel_histogram(translated.images), target_hist)}};
  mark_done(phase, summary);
  return summary;
}

json Pipeline::seg(const std::string& name) {
  const std::string phase = "seg_" + name;
  if (done(phase)) return read_done(phase);
  SegPhaseConfig cfg = config_.segmentation;
  ImageSet translated;
  ImageSet no_target;
  const ImageSet* target_set = &target();
  if (name == "source_only") {
    cfg.lambda_con = 0.0;
    cfg.translated_fraction = 0.0;
    target_set = &no_target;
  } else {
    std::string variant = "full";
    if (name.rfind("i2i_", 0) == 0) {
      variant = name.substr(4);
      cfg.lambda_con = 0.0;
      target_set = &no_target;
    } else {
      require(name == "ssl_i2i", ErrorKind::Config,
              "unknown segmentation run '" + name + "' (expected source_only, ssl_i2i or i2i_<variant>)");
    }
    i2i_variant_config(config_, variant);
    require(done("translated_" + variant), ErrorKind::Prerequisite,
            "segmentation run '" + name + "' needs translated images (run translate for '" + variant + "' first)");
    translated = load_image_set(Manifest::load(dir_ / ("translated_" + variant) / "translated.tsv"), true,
                                config_.num_classes());
  }
  MetricsLog log(dir_ / phase / "metrics.jsonl");
  auto r = run_segmentation(source(), translated, *target_set, cfg, config_, log);
  save_segmenter(dir_ / phase / "student.ckpt", r.student);
  save_segmenter(dir_ / phase / "teacher.ckpt", r.teacher);
  const auto subset = ClassSet::all(config_.num_classes());
  const auto ev = evaluate_model(r.teacher, target_val(), subset);
  const auto ev_student = evaluate_model(r.student, target_val(), subset);
  write_json(dir_ / phase / "eval.json", ev.to_json(subset));
  json summary{{"teacher_miou", ev.miou}, {"student_miou", ev_student.miou}, {"steps", cfg.steps}};
  mark_done(phase, summary);
  return summary;
}

json Pipeline::evaluate_phase(const std::string& phase_dir) {
  const auto ckpt = dir_ / phase_dir / "teacher.ckpt";
  auto f = load_segmenter(ckpt, config_.model.segmenter);
  const auto subset = ClassSet::all(config_.num_classes());
  return evaluate_model(f, target_val(), subset).to_json(subset);
}

json Pipeline::run_all() {
  gen_data();
  warmup();
  i2i("full");
  json translation = translate("full");
  json final_seg = seg("ssl_i2i");
  json report{{"final_teacher_miou", final_seg["teacher_miou"]},
              {"warmup_teacher_miou", read_done("warmup")["teacher_miou"]},
              {"translation", translation},
              {"i2i", read_done("i2i_full")}};
  write_json(dir_ / "report.json", report);
  return report;
}

double Pipeline::variant_miou(const std::string& variant) {
  if (contains(i2i_variants(), variant)) {
    if (i2i_variant_config(config_, variant).i2i.pseudo_labels == PseudoLabelSource::Precomputed) warmup();
    i2i(variant);
    translate(variant);
    return seg("i2i_" + variant)["teacher_miou"].get<double>();
  }
  if (variant == "seg_only") return seg("source_only")["teacher_miou"].get<double>();
  if (variant == "seg_ssl") return warmup()["teacher_miou"].get<double>();
  if (variant == "seg_i2i") return variant_miou("full");
  if (variant == "seg_ssl_i2i") {
    warmup();
    i2i("full");
    translate("full");
    return seg("ssl_i2i")["teacher_miou"].get<double>();
  }
  fail(ErrorKind::Config, "unknown variant '" + variant + "'; valid names: " + valid_names());
}

json Pipeline::ablate(const std::vector<std::string>& variants) {
  require(!variants.empty(), ErrorKind::Config, "ablate needs at least one variant; valid names: " + valid_names());
  for (const auto& v : variants)
    require(contains(i2i_variants(), v) || contains(component_variants(), v), ErrorKind::Config,
            "unknown variant '" + v + "'; valid names: " + valid_names());
  gen_data();
  json rows = json::array();
  for (const auto& v : variants) rows.push_back({{"name", v}, {"miou", variant_miou(v)}});
  write_json(dir_ / "ablation" / "table.json", rows);
  std::ofstream(dir_ / "ablation" / "table.txt") << format_table(rows);
  return rows;
}

std::string format_table(const json& rows) {
  std::ostringstream out;
  char line[96];
  std::snprintf(line, sizeof(line), "%-16s %8s\n", "variant", "mIoU");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-16s %8.2f\n", r.at("name").get<std::string>().c_str(),
                  100.0 * r.at("miou").get<double>());
    out << line;
  }
  return out.str();
}

}  // namespace semcon
