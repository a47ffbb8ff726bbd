#include "roar/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return i;
}

std::uint64_t to_u64(const std::string& v) {
  if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
  std::size_t used = 0;
  const auto u = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return u;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument(v);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Section = std::map<std::string, Setter>;

#define ROAR_D(expr) [](RunConfig& c, const std::string& v) { c.expr = to_double(v); }
#define ROAR_I(expr) [](RunConfig& c, const std::string& v) { c.expr = static_cast<int>(to_int(v)); }
#define ROAR_U(expr) [](RunConfig& c, const std::string& v) { c.expr = to_u64(v); }
#define ROAR_B(expr) [](RunConfig& c, const std::string& v) { c.expr = to_bool(v); }

const std::map<std::string, Section>& sections() {
  static const std::map<std::string, Section> table = {
      {"synth",
       {{"image_size", ROAR_I(synth.image_size)},
        {"n_patients", ROAR_I(synth.n_patients)},
        {"images_per_eye", ROAR_I(synth.images_per_eye)},
        {"disc_fraction", ROAR_D(synth.disc_fraction)},
        {"disc_aspect", ROAR_D(synth.disc_aspect)},
        {"disc_jitter", ROAR_D(synth.disc_jitter)},
        {"image_jitter_px", ROAR_D(synth.image_jitter_px)},
        {"vcdr_mean", ROAR_D(synth.vcdr_mean)},
        {"vcdr_spread", ROAR_D(synth.vcdr_spread)},
        {"vcdr_min", ROAR_D(synth.vcdr_min)},
        {"vcdr_max", ROAR_D(synth.vcdr_max)},
        {"eye_correlation", ROAR_D(synth.eye_correlation)},
        {"glaucoma_rate", ROAR_D(synth.glaucoma_rate)},
        {"peripheral_signal_strength", ROAR_D(synth.peripheral_signal_strength)},
        {"band_contrast", ROAR_D(synth.band_contrast)},
        {"band_center_deg", ROAR_D(synth.band_center_deg)},
        {"band_half_width_deg", ROAR_D(synth.band_half_width_deg)},
        {"band_inner", ROAR_D(synth.band_inner)},
        {"band_outer", ROAR_D(synth.band_outer)},
        {"stripe_period_deg", ROAR_D(synth.stripe_period_deg)},
        {"texture_amplitude", ROAR_D(synth.texture_amplitude)},
        {"noise_sd", ROAR_D(synth.noise_sd)},
        {"seed", ROAR_U(synth.seed)}}},
      {"preprocess",
       {{"output_size", ROAR_I(preprocess.output_size)},
        {"enhance", ROAR_B(preprocess.enhance)},
        {"enhance_sigma_fraction", ROAR_D(preprocess.enhance_sigma_fraction)},
        {"enhance_alpha", ROAR_D(preprocess.enhance_alpha)},
        {"roi_clip", ROAR_B(preprocess.roi_clip)},
        {"roi_radius_fraction", ROAR_D(preprocess.roi_radius_fraction)},
        {"clip_margin_px", ROAR_D(preprocess.clip_margin_px)},
        {"clip_reference_width", ROAR_D(preprocess.clip_reference_width)},
        {"disc_blur_sigma_fraction", ROAR_D(preprocess.disc.blur_sigma_fraction)},
        {"disc_min_contrast", ROAR_D(preprocess.disc.min_contrast)},
        {"disc_level", ROAR_D(preprocess.disc.level)}}},
      {"model",
       {{"stages", [](RunConfig& c, const std::string& v) { c.experiment.network.stages = parse_stages(v); }},
        {"residual_blocks", ROAR_I(experiment.network.residual_blocks)}}},
      {"train",
       {{"base_lr", ROAR_D(experiment.train.base_lr)},
        {"beta1", ROAR_D(experiment.train.adam.beta1)},
        {"beta2", ROAR_D(experiment.train.adam.beta2)},
        {"epsilon", ROAR_D(experiment.train.adam.epsilon)},
        {"batch_size", ROAR_I(experiment.train.batch_size)},
        {"max_epochs", ROAR_I(experiment.train.max_epochs)},
        {"plateau_patience", ROAR_I(experiment.train.plateau_patience)},
        {"plateau_factor", ROAR_D(experiment.train.plateau_factor)},
        {"min_lr", ROAR_D(experiment.train.min_lr)},
        {"early_stop_patience", ROAR_I(experiment.train.early_stop_patience)},
        {"augment", [](RunConfig& c, const std::string& v) { c.augment.names = v; }},
        {"augment_probability", ROAR_D(augment.probability)},
        {"elastic_amplitude", ROAR_D(augment.magnitudes.elastic_amplitude)},
        {"elastic_smoothing", ROAR_D(augment.magnitudes.elastic_smoothing)},
        {"brightness_delta", ROAR_D(augment.magnitudes.brightness_delta)},
        {"cutout_side", ROAR_I(augment.magnitudes.cutout_side)}}},
      {"grid",
       {{"task", [](RunConfig& c, const std::string& v) { c.experiment.task = parse_task(v); }},
        {"policy", [](RunConfig& c, const std::string& v) { c.experiment.policy = parse_crop_kind(v); }},
        {"fractions", [](RunConfig& c, const std::string& v) { c.experiment.fractions = parse_double_list(v); }},
        {"retrain", ROAR_B(experiment.retrain_arm)},
        {"occlusion", ROAR_B(experiment.occlusion_arm)},
        {"repeats", ROAR_I(experiment.repeats)},
        {"split",
         [](RunConfig& c, const std::string& v) {
           const auto r = parse_double_list(v);
           if (r.size() != 3) throw std::invalid_argument(v);
           c.experiment.split_ratios = {r[0], r[1], r[2]};
         }},
        {"split_seed", ROAR_U(experiment.split_seed)},
        {"train_seed", ROAR_U(experiment.train_seed)},
        {"workers", ROAR_I(experiment.workers)},
        {"work_dir", [](RunConfig& c, const std::string& v) { c.experiment.work_dir = v; }},
        {"results", [](RunConfig& c, const std::string& v) { c.experiment.results_name = v; }}}},
      {"bootstrap",
       {{"iterations", ROAR_I(experiment.bootstrap_iterations)},
        {"seed", ROAR_U(experiment.bootstrap_seed)},
        {"pooled", ROAR_B(experiment.pooled_ci)}}},
      {"saliency",
       {{"normalize", ROAR_B(saliency.normalize_per_image)}, {"sector_inner", ROAR_D(saliency.sector_inner)}}},
  };
  return table;
}

#undef ROAR_D
#undef ROAR_I
#undef ROAR_U
#undef ROAR_B

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(to_double(item));
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("not a number: '{}'", item));
    }
  }
  return out;
}

std::vector<ConvStage> parse_stages(const std::string& text) {
  std::vector<ConvStage> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    ConvStage st;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> st.out_channels >> c1 >> st.kernel >> c2 >> st.stride) || c1 != ':' || c2 != ':' || !is.eof()) {
      throw ConfigError(fmt::format("stage '{}' is not channels:kernel:stride", item));
    }
    out.push_back(st);
  }
  if (out.empty()) throw ConfigError("model stages list is empty");
  return out;
}

std::vector<AugmentOption> parse_augmentations(const std::string& text, const AugmentSpec& magnitudes,
                                               double probability) {
  std::vector<AugmentOption> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item == "none") continue;
    AugmentOption opt;
    opt.probability = probability;
    if (item == "hmirror") {
      opt.spec = AugmentSpec::hmirror();
    } else if (item == "elastic") {
      opt.spec = AugmentSpec::elastic(magnitudes.elastic_amplitude, magnitudes.elastic_smoothing);
    } else if (item == "brightness") {
      opt.spec = AugmentSpec::brightness(magnitudes.brightness_delta);
    } else if (item == "cutout") {
      opt.spec = AugmentSpec::cutout(magnitudes.cutout_side);
    } else {
      throw ConfigError(fmt::format("unknown augmentation '{}'", item));
    }
    out.push_back(opt);
  }
  return out;
}

void RunConfig::sync() {
  experiment.network.input_size = preprocess.output_size;
  experiment.network.head =
      experiment.task == Task::GlaucomaClassification ? HeadKind::SigmoidBinary : HeadKind::LinearRegression;
  experiment.train.augmentations = parse_augmentations(augment.names, augment.magnitudes, augment.probability);
}

void RunConfig::validate() const {
  synth.validate();
  preprocess.validate();
  experiment.validate();
  if (experiment.network.input_size != preprocess.output_size) {
    throw ConfigError("model input size must equal preprocess output_size");
  }
  if (!(saliency.sector_inner >= 0.0 && saliency.sector_inner < 0.5)) {
    throw ConfigError("saliency sector_inner must be in [0, 0.5)");
  }
}

RunConfig default_run_config(Task task, CropKind policy) {
  RunConfig cfg;
  cfg.experiment = default_spec(task, policy);
  cfg.sync();
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const auto& table = sections();
  const auto sec = table.find(section);
  if (sec == table.end()) throw ConfigError(fmt::format("unknown config section [{}]", section));
  const auto setter = sec->second.find(key);
  if (setter == sec->second.end()) throw ConfigError(fmt::format("unknown config key '{}' in [{}]", key, section));
  try {
    setter->second(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("[{}] {}: {}", section, key, e.what()));
  } catch (const Error& e) {
    throw ConfigError(fmt::format("[{}] {}: {}", section, key, e.what()));
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("[{}] {}: invalid value '{}'", section, key, value));
  }
  cfg.sync();
}

RunConfig parse_config(const std::string& text, std::optional<Task> task_override,
                       std::optional<CropKind> policy_override) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("malformed config at line {}: {}", e.line(), e.message()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("config key '{}' outside of any section", section));
    }
  }
  Task task = Task::GlaucomaClassification;
  CropKind policy = CropKind::OnhCrop;
  if (const auto grid = tree.get_child_optional("grid")) {
    try {
      if (const auto t = grid->get_optional<std::string>("task")) task = parse_task(trim(*t));
      if (const auto p = grid->get_optional<std::string>("policy")) policy = parse_crop_kind(trim(*p));
    } catch (const Error& e) {
      throw ConfigError(fmt::format("[grid] {}", e.what()));
    }
  }
  if (task_override) task = *task_override;
  if (policy_override) policy = *policy_override;
  RunConfig cfg = default_run_config(task, policy);
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) apply_override(cfg, section, key, value.data());
  }
  cfg.experiment.task = task;
  cfg.experiment.policy = policy;
  cfg.sync();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<Task> task, std::optional<CropKind> policy) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("config file not found: '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), task, policy);
}

}  // namespace roar
