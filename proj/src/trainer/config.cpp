#include "semcon/trainer/config.hpp"

#include <cmath>
#include <fstream>

#include "semcon/core/errors.hpp"

namespace semcon {

using nlohmann::json;

double OptimConfig::rate_at(int64_t step) const {
  if (decay_rate == 1.0 || decay_steps <= 0) return lr;
  return lr * std::pow(decay_rate, static_cast<double>(step) / static_cast<double>(decay_steps));
}

namespace {

json optim_json(const OptimConfig& o) {
  return {{"lr", o.lr}, {"decay_rate", o.decay_rate}, {"decay_steps", o.decay_steps}, {"beta1", o.beta1}, {"beta2", o.beta2}};
}

OptimConfig parse_optim(const json& j) {
  OptimConfig o;
  j.at("lr").get_to(o.lr);
  j.at("decay_rate").get_to(o.decay_rate);
  j.at("decay_steps").get_to(o.decay_steps);
  j.at("beta1").get_to(o.beta1);
  j.at("beta2").get_to(o.beta2);
  return o;
}

json seg_phase_json(const SegPhaseConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"optim", optim_json(c.optim)},
          {"clip_norm", c.clip_norm},
          {"ema_decay", c.ema_decay},
          {"lambda_con", c.lambda_con},
          {"con_warmup_steps", c.con_warmup_steps},
          {"translated_fraction", c.translated_fraction},
          {"log_interval", c.log_interval}};
}

SegPhaseConfig parse_seg_phase(const json& j) {
  SegPhaseConfig c;
  j.at("steps").get_to(c.steps);
  j.at("batch_size").get_to(c.batch_size);
  c.optim = parse_optim(j.at("optim"));
  j.at("clip_norm").get_to(c.clip_norm);
  j.at("ema_decay").get_to(c.ema_decay);
  j.at("lambda_con").get_to(c.lambda_con);
  j.at("con_warmup_steps").get_to(c.con_warmup_steps);
  j.at("translated_fraction").get_to(c.translated_fraction);
  j.at("log_interval").get_to(c.log_interval);
  return c;
}

json i2i_json(const I2IPhaseConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"g_optim", optim_json(c.g_optim)},
          {"d_optim", optim_json(c.d_optim)},
          {"clip_norm", c.clip_norm},
          {"ema_decay", c.ema_decay},
          {"pseudo_labels", c.pseudo_labels == PseudoLabelSource::Precomputed ? "precomputed" : "online"},
          {"lambda_max", c.lambda_max},
          {"fade_start", c.fade_start},
          {"fade_end", c.fade_end},
          {"gan", losses::to_string(c.gan)},
          {"class_gan", c.class_gan},
          {"generator_seg", c.generator_seg},
          {"identity_weight", c.identity_weight},
          {"sym_ce", {{"alpha", c.sym_ce.alpha}, {"beta", c.sym_ce.beta}, {"log_clamp", c.sym_ce.log_clamp}}},
          {"trunk", c.trunk},
          {"trunk_pretrain_steps", c.trunk_pretrain_steps},
          {"trunk_lr", c.trunk_lr},
          {"identity_pretrain_steps", c.identity_pretrain_steps},
          {"log_interval", c.log_interval}};
}

I2IPhaseConfig parse_i2i(const json& j) {
  I2IPhaseConfig c;
  j.at("steps").get_to(c.steps);
  j.at("batch_size").get_to(c.batch_size);
  c.g_optim = parse_optim(j.at("g_optim"));
  c.d_optim = parse_optim(j.at("d_optim"));
  j.at("clip_norm").get_to(c.clip_norm);
  j.at("ema_decay").get_to(c.ema_decay);
  const auto pl = j.at("pseudo_labels").get<std::string>();
  require(pl == "precomputed" || pl == "online", ErrorKind::Config,
          "i2i.pseudo_labels must be 'precomputed' or 'online', got '" + pl + "'");
  c.pseudo_labels = pl == "precomputed" ? PseudoLabelSource::Precomputed : PseudoLabelSource::Online;
  j.at("lambda_max").get_to(c.lambda_max);
  j.at("fade_start").get_to(c.fade_start);
  j.at("fade_end").get_to(c.fade_end);
  c.gan = losses::parse_gan_objective(j.at("gan").get<std::string>());
  j.at("class_gan").get_to(c.class_gan);
  j.at("generator_seg").get_to(c.generator_seg);
  j.at("identity_weight").get_to(c.identity_weight);
  j.at("sym_ce").at("alpha").get_to(c.sym_ce.alpha);
  j.at("sym_ce").at("beta").get_to(c.sym_ce.beta);
  j.at("sym_ce").at("log_clamp").get_to(c.sym_ce.log_clamp);
  j.at("trunk").get_to(c.trunk);
  j.at("trunk_pretrain_steps").get_to(c.trunk_pretrain_steps);
  j.at("trunk_lr").get_to(c.trunk_lr);
  j.at("identity_pretrain_steps").get_to(c.identity_pretrain_steps);
  j.at("log_interval").get_to(c.log_interval);
  return c;
}

std::string type_name(const json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

bool compatible(const json& def, const json& user) {
  if (def.is_number() && user.is_number()) {
    // Integers stay integers; floats accept either.
    return def.is_number_float() || user.is_number_integer();
  }
  return def.type() == user.type();
}

void merge_into(json& out, const json& user, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    require(out.contains(it.key()), ErrorKind::Config, "unknown config key '" + key + "'");
    json& slot = out[it.key()];
    if (slot.is_object()) {
      require(it.value().is_object(), ErrorKind::Config, "config key '" + key + "' must be an object");
      merge_into(slot, it.value(), key);
    } else {
      require(compatible(slot, it.value()), ErrorKind::Config,
              "config key '" + key + "' expects a " + type_name(slot) + ", got " + type_name(it.value()));
      slot = it.value();
    }
  }
}

}  // namespace

json default_config_json() { return config_to_json(RunConfig{}); }

json config_to_json(const RunConfig& c) {
  json data{{"image_size", c.data.split.image_size},
            {"crop", c.data.crop},
            {"n_src", c.data.split.n_src},
            {"n_tgt", c.data.split.n_tgt},
            {"n_val_tgt", c.data.split.n_val_tgt},
            {"dir", c.data.dir},
            {"seed_offsets",
             {{"source", c.data.split.offsets.source},
              {"target", c.data.split.offsets.target},
              {"target_val", c.data.split.offsets.target_val}}},
            {"source", c.data.split.source},
            {"target", c.data.split.target}};
  json model{{"num_classes", c.model.segmenter.num_classes},
             {"segmenter", c.model.segmenter},
             {"generator", c.model.generator},
             {"discriminator", c.model.discriminator}};
  return json{{"experiment", c.experiment},
              {"seed", c.seed},
              {"data", data},
              {"model", model},
              {"perturb", c.perturb},
              {"warmup", seg_phase_json(c.warmup)},
              {"i2i", i2i_json(c.i2i)},
              {"pseudo", {{"threshold", c.pseudo.threshold}}},
              {"segmentation", seg_phase_json(c.segmentation)},
              {"eval", {{"probe_steps", c.eval.probe_steps}, {"probe_lr", c.eval.probe_lr}, {"probe_batch", c.eval.probe_batch}}}};
}

json merge_config(const json& defaults, const json& user) {
  require(user.is_object(), ErrorKind::Config, "config root must be an object");
  json out = defaults;
  merge_into(out, user, "");
  return out;
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::Config, "override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = raw;
    // Build a nested object for the dotted key and merge it, which reuses the key checks.
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
      parts.push_back(rest.substr(0, pos));
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    config = merge_config(config, patch);
  }
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  try {
    j.at("experiment").get_to(c.experiment);
    j.at("seed").get_to(c.seed);
    const auto& d = j.at("data");
    d.at("image_size").get_to(c.data.split.image_size);
    d.at("crop").get_to(c.data.crop);
    d.at("n_src").get_to(c.data.split.n_src);
    d.at("n_tgt").get_to(c.data.split.n_tgt);
    d.at("n_val_tgt").get_to(c.data.split.n_val_tgt);
    d.at("dir").get_to(c.data.dir);
    d.at("seed_offsets").at("source").get_to(c.data.split.offsets.source);
    d.at("seed_offsets").at("target").get_to(c.data.split.offsets.target);
    d.at("seed_offsets").at("target_val").get_to(c.data.split.offsets.target_val);
    d.at("source").get_to(c.data.split.source);
    d.at("target").get_to(c.data.split.target);
    c.data.split.seed = c.seed;
    const auto& m = j.at("model");
    m.at("segmenter").get_to(c.model.segmenter);
    m.at("generator").get_to(c.model.generator);
    m.at("discriminator").get_to(c.model.discriminator);
    c.model.segmenter.num_classes = m.at("num_classes").get<int>();
    c.model.discriminator.num_classes = c.model.segmenter.num_classes;
    j.at("perturb").get_to(c.perturb);
    c.warmup = parse_seg_phase(j.at("warmup"));
    c.i2i = parse_i2i(j.at("i2i"));
    j.at("pseudo").at("threshold").get_to(c.pseudo.threshold);
    c.segmentation = parse_seg_phase(j.at("segmentation"));
    j.at("eval").at("probe_steps").get_to(c.eval.probe_steps);
    j.at("eval").at("probe_lr").get_to(c.eval.probe_lr);
    j.at("eval").at("probe_batch").get_to(c.eval.probe_batch);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  require(num_classes() == kToyClasses, ErrorKind::Config,
          "model.num_classes must equal the toy class count " + std::to_string(kToyClasses));
  require(data.split.image_size % 8 == 0 && data.split.image_size >= 16, ErrorKind::Config,
          "data.image_size must be >= 16 and divisible by 8");
  require(data.crop % 8 == 0 && data.crop >= 16 && data.crop <= data.split.image_size, ErrorKind::Config,
          "data.crop must be divisible by 8 and no larger than data.image_size");
  data.split.source.validate();
  data.split.target.validate();
  perturb.validate();
  for (const auto* phase : {&warmup, &segmentation}) {
    const std::string name = phase == &warmup ? "warmup" : "segmentation";
    require(phase->steps >= 0 && phase->batch_size > 0, ErrorKind::Config, name + ": steps >= 0 and batch_size > 0");
    require(phase->clip_norm > 0, ErrorKind::Config, name + ".clip_norm must be positive");
    require(phase->ema_decay >= 0 && phase->ema_decay <= 1, ErrorKind::Config, name + ".ema_decay must lie in [0,1]");
    require(phase->lambda_con >= 0, ErrorKind::Config, name + ".lambda_con must be non-negative");
    require(phase->translated_fraction >= 0 && phase->translated_fraction <= 1, ErrorKind::Config,
            name + ".translated_fraction must lie in [0,1]");
    require(phase->log_interval > 0, ErrorKind::Config, name + ".log_interval must be positive");
  }
  require(i2i.steps >= 0 && i2i.batch_size > 0, ErrorKind::Config, "i2i: steps >= 0 and batch_size > 0");
  require(i2i.clip_norm > 0, ErrorKind::Config, "i2i.clip_norm must be positive");
  require(i2i.ema_decay >= 0 && i2i.ema_decay <= 1, ErrorKind::Config, "i2i.ema_decay must lie in [0,1]");
  require(i2i.fade_start <= i2i.fade_end, ErrorKind::Config, "i2i.fade_start must not exceed i2i.fade_end");
  require(i2i.lambda_max >= 0, ErrorKind::Config, "i2i.lambda_max must be non-negative");
  require(i2i.trunk == "pretrained" || i2i.trunk == "random", ErrorKind::Config,
          "i2i.trunk must be 'pretrained' or 'random'");
  require(i2i.log_interval > 0, ErrorKind::Config, "i2i.log_interval must be positive");
  require(pseudo.threshold >= 0 && pseudo.threshold <= 1, ErrorKind::Config, "pseudo.threshold must lie in [0,1]");
}

RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    require(in.good(), ErrorKind::Config, "cannot open config " + file.string());
    user = json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
    require(!user.is_discarded(), ErrorKind::Config, "config " + file.string() + " is not valid JSON");
  }
  json merged = merge_config(default_config_json(), user);
  apply_overrides(merged, overrides);
  return parse_config(merged);
}

json smoke_config_json() {
  json j = default_config_json();
  j["experiment"] = "smoke";
  j["data"]["n_src"] = 24;
  j["data"]["n_tgt"] = 24;
  j["data"]["n_val_tgt"] = 8;
  for (const char* phase : {"warmup", "segmentation"}) {
    j[phase]["steps"] = 30;
    j[phase]["batch_size"] = 4;
    j[phase]["con_warmup_steps"] = 5;
    j[phase]["log_interval"] = 5;
  }
  j["i2i"]["steps"] = 20;
  j["i2i"]["batch_size"] = 4;
  j["i2i"]["fade_start"] = 4;
  j["i2i"]["fade_end"] = 16;
  j["i2i"]["trunk_pretrain_steps"] = 10;
  j["i2i"]["identity_pretrain_steps"] = 10;
  j["i2i"]["log_interval"] = 5;
  j["eval"]["probe_steps"] = 10;
  return j;
}

}  // namespace semcon
