// Command-line front end: data generation, training phases, evaluation and ablations.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/core/image_io.hpp"
#include "semcon/eval/evaluate.hpp"
#include "semcon/trainer/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semcon;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kPrerequisite = 3, kNumerical = 4, kIo = 5 };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Schema: return kConfig;
    case ErrorKind::Prerequisite: return kPrerequisite;
    case ErrorKind::NumericalFault: return kNumerical;
    case ErrorKind::Io: return kIo;
    default: return kOther;
  }
}

struct Common {
  std::string config_file;
  std::string run_dir;
  std::vector<std::string> overrides;
  bool smoke = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file (partial configs are merged over defaults)");
  cmd->add_option("-r,--run-dir", c.run_dir,
                  "run directory; relative paths resolve under $SEMCON_RUN_ROOT (default: runs/<experiment>)");
  cmd->add_option("-s,--set", c.overrides, "override a config key, e.g. --set i2i.steps=100")->take_all();
  cmd->add_flag("--smoke", c.smoke, "start from the small smoke-test configuration");
}

RunConfig load(const Common& c) {
  if (!c.smoke) return load_config(c.config_file, c.overrides);
  json j = smoke_config_json();
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    require(in.good(), ErrorKind::Config, "cannot open config " + c.config_file);
    json user = json::parse(in, nullptr, false, true);
    require(!user.is_discarded(), ErrorKind::Config, "config " + c.config_file + " is not valid JSON");
    j = merge_config(j, user);
  }
  apply_overrides(j, c.overrides);
  return parse_config(j);
}

Pipeline open(const Common& c) {
  auto cfg = load(c);
  const fs::path dir = c.run_dir.empty() ? fs::path("runs") / cfg.experiment : fs::path(c.run_dir);
  return Pipeline(cfg, resolve_run_dir(dir));
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<int> parse_subset(const std::string& text, int k) {
  std::vector<int> ids;
  if (text.empty()) {
    for (int c = 0; c < k; ++c) ids.push_back(c);
    return ids;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      ids.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "subset entry '" + item + "' is not a class id");
    }
  }
  return ids;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string predictions;
  std::string subset;
  std::string out;
  bool probe = false;
  std::optional<double> upper, source, method;
  int64_t dump = 0;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
  auto pipe = open(common);
  const auto& cfg = pipe.config();
  const int k = cfg.num_classes();
  const ClassSet subset(k, parse_subset(a.subset, k));
  const fs::path manifest = a.manifest.empty() ? pipe.data_dir() / kTargetValManifest : fs::path(a.manifest);
  if (a.manifest.empty()) pipe.gen_data();
  const auto split = load_image_set(Manifest::load(manifest), true, k);
  json report;

  if (!a.predictions.empty()) {
    // Precomputed masks: compare a manifest of predicted masks against the split's ground truth.
    const auto preds = Manifest::load(a.predictions);
    require(preds.size() == static_cast<std::size_t>(split.size()), ErrorKind::Shape,
            "prediction manifest and split differ in length");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < preds.size(); ++i)
      cm = accumulate_cm(read_mask_png(preds.mask_path(i), k).tensor(), split.masks[static_cast<int64_t>(i)], cm);
    const auto ious = iou_per_class(cm);
    EvalResult r{cm, ious, miou(ious, subset)};
    report = r.to_json(subset);
  } else {
    require(!a.checkpoint.empty(), ErrorKind::Config, "eval needs --checkpoint or --predictions");
    auto f = load_segmenter(a.checkpoint, cfg.model.segmenter);
    if (a.probe) {
      const auto [train_idx, held_idx] = probe_halves(split.size());
      ProbeConfig pc{cfg.eval.probe_steps, cfg.eval.probe_lr, cfg.eval.probe_batch, cfg.data.crop, cfg.seed};
      auto probed = linear_probe(f, split, train_idx, pc);
      const auto before = evaluate_model(f, split, subset, held_idx);
      const auto after = evaluate_model(probed, split, subset, held_idx);
      report = {{"unprobed", before.to_json(subset)}, {"probed", after.to_json(subset)}};
      if (a.upper && a.source) {
        const double method = a.method ? *a.method : 100.0 * after.miou;
        report["gap"] = gap_report(*a.upper, *a.source, method).to_json();
      }
    } else {
      report = evaluate_model(f, split, subset).to_json(subset);
    }
    if (a.dump > 0) dump_predictions(f, split, pipe.dir() / "eval" / "samples", a.dump);
  }
  const fs::path out = a.out.empty() ? pipe.dir() / "eval" / "report.json" : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(out) << report.dump(2) << '\n';
  print(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semcon: toy-scale domain adaptation for semantic segmentation"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "render the source / target / target-val splits");
  add_common(gen, common);

  std::string phase, variant = "full", seg_name = "ssl_i2i";
  auto* run = app.add_subcommand("run", "run one training phase");
  add_common(run, common);
  run->add_option("phase", phase, "warmup | i2i | translate | seg")
      ->required()
      ->check(CLI::IsMember({"warmup", "i2i", "translate", "seg"}));
  run->add_option("--variant", variant, "I2I variant for i2i/translate");
  run->add_option("--name", seg_name, "segmentation run: ssl_i2i, source_only or i2i_<variant>");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "evaluate a segmenter checkpoint on a labelled split");
  add_common(ev, common);
  ev->add_option("--checkpoint", eval_args.checkpoint, "segmenter checkpoint");
  ev->add_option("--manifest", eval_args.manifest, "labelled manifest (default: the run's target-val split)");
  ev->add_option("--predictions", eval_args.predictions, "manifest of predicted masks to score instead of a model");
  ev->add_option("--subset", eval_args.subset, "comma-separated class ids (default: all)");
  ev->add_option("--out", eval_args.out, "report path");
  ev->add_flag("--probe", eval_args.probe, "retrain the final linear layer on half of the split first");
  ev->add_option("--upper", eval_args.upper, "target-supervised reference mIoU (percent)");
  ev->add_option("--source", eval_args.source, "source-only reference mIoU (percent)");
  ev->add_option("--method", eval_args.method, "use this mIoU (percent) instead of the probed one in the gap report");
  ev->add_option("--dump", eval_args.dump, "write input | prediction | truth strips for the first N images");

  std::vector<std::string> variants;
  auto* ab = app.add_subcommand("ablate", "run variants with shared seeds and tabulate final mIoU");
  add_common(ab, common);
  ab->add_option("--variants", variants, "full, no_cgan, sgan, online_pl, no_gseg, seg_only, seg_ssl, seg_i2i, seg_ssl_i2i")
      ->delimiter(',')
      ->required();

  auto* pipeline = app.add_subcommand("pipeline", "run every phase of the method");
  add_common(pipeline, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) {
      auto pipe = open(common);
      pipe.gen_data();
      print({{"data_dir", pipe.data_dir().string()}});
    } else if (run->parsed()) {
      auto pipe = open(common);
      if (phase == "warmup") print(pipe.warmup());
      else if (phase == "i2i") print(pipe.i2i(variant));
      else if (phase == "translate") print(pipe.translate(variant));
      else print(pipe.seg(seg_name));
    } else if (ev->parsed()) {
      return cmd_eval(common, eval_args);
    } else if (ab->parsed()) {
      auto pipe = open(common);
      const auto rows = pipe.ablate(variants);
      std::cout << format_table(rows);
    } else if (pipeline->parsed()) {
      auto pipe = open(common);
      print(pipe.run_all());
    }
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
