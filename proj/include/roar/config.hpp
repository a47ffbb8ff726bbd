#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "roar/experiment.hpp"
#include "roar/synth.hpp"

namespace roar {

struct SaliencyOptions {
  bool normalize_per_image = false;
  double sector_inner = 0.0;
};

/// Everything a CLI run can configure, organised by INI section:
/// [synth] [preprocess] [model] [train] [grid] [bootstrap] [saliency].
struct AugmentSettings {
  std::string names;  // comma list of hmirror, elastic, brightness, cutout
  double probability = 0.5;
  AugmentSpec magnitudes{AugmentKind::HMirror, 4.0, 16.0, 0.1, 8};
};

struct RunConfig {
  SynthConfig synth;
  PreprocessConfig preprocess;
  ExperimentSpec experiment;
  SaliencyOptions saliency;
  AugmentSettings augment;

  /// Propagates derived fields: model input size, head, augmentation list.
  void sync();
  void validate() const;
};

/// Defaults for a task and policy with model input size tied to preprocessing.
RunConfig default_run_config(Task task = Task::GlaucomaClassification, CropKind policy = CropKind::OnhCrop);

/// Parses INI text. Unknown sections or keys and unparsable values raise
/// ConfigError. [grid] task and policy are applied first so that their
/// dependent defaults (fractions, repeats, head) can be overridden.
/// `task` and `policy`, when given, take precedence over the file.
RunConfig parse_config(const std::string& text, std::optional<Task> task = std::nullopt,
                       std::optional<CropKind> policy = std::nullopt);
RunConfig load_config(const std::filesystem::path& path, std::optional<Task> task = std::nullopt,
                      std::optional<CropKind> policy = std::nullopt);

/// Applies one "section.key=value" override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

std::vector<double> parse_double_list(const std::string& text);
std::vector<ConvStage> parse_stages(const std::string& text);
std::vector<AugmentOption> parse_augmentations(const std::string& text, const AugmentSpec& magnitudes,
                                               double probability);

}  // namespace roar
