#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "roar/cropping.hpp"
#include "roar/imaging.hpp"
#include "roar/manifest.hpp"
#include "roar/metrics.hpp"
#include "roar/network.hpp"
#include "roar/saliency.hpp"
#include "roar/training.hpp"

namespace roar {

// Preprocessing -------------------------------------------------------------------

struct PreprocessConfig {
  int output_size = 64;
  bool enhance = true;
  double enhance_sigma_fraction = 1.0 / 30.0;  // of the square width
  double enhance_alpha = 4.0;
  bool roi_clip = true;
  double roi_radius_fraction = 0.5;     // ROI radius over square width
  double clip_margin_px = 10.0;         // measured at clip_reference_width
  double clip_reference_width = 1444.0;
  DiscHeuristicOptions disc;

  void validate() const;
};

struct PreparedImage {
  RasterImage image;  // output_size x output_size
  DiscLocation disc;  // in output coordinates
};

/// Square crop, contrast enhancement, ROI clip, resize. The disc location is
/// mapped through each step; without one, it is located heuristically on the
/// square crop before enhancement (NoDiscFound propagates).
PreparedImage preprocess(const RasterImage& raw, std::optional<DiscLocation> disc, const PreprocessConfig& cfg);

// Data sets -------------------------------------------------------------------------

enum class Task { VcdrRegression, GlaucomaClassification };

std::string to_string(Task task);
Task parse_task(const std::string& text);

struct EvalImage {
  RasterImage image;
  std::optional<DiscLocation> disc;
  ImageMeta meta;
};

using ImageLoader = std::function<RasterImage(const ManifestRow&)>;

/// Loads and preprocesses every row. Rows where no disc can be found are
/// dropped and counted.
struct PreparedSet {
  std::vector<EvalImage> items;
  std::size_t dropped_no_disc = 0;
};

PreparedSet prepare_images(const Manifest& manifest, const PreprocessConfig& cfg);
PreparedSet prepare_images(const Manifest& manifest, const PreprocessConfig& cfg, const ImageLoader& loader);

struct SplitManifests {
  Manifest train;
  Manifest val;
  Manifest test;
};

/// Random patient-level partition with largest-remainder rounding.
SplitManifests split_by_patient(const Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);

/// Patient counts per subset for `n` patients.
std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios);

struct ExperimentData {
  PreparedSet train;
  PreparedSet val;
  PreparedSet test;
};

/// Applies a crop policy to every image of a set (no-op policies copy).
std::vector<RasterImage> cropped_images(const PreparedSet& set, const CropPolicy& policy);
Dataset make_dataset(const PreparedSet& set, const CropPolicy& policy, Task task);

// Experiment grid ----------------------------------------------------------------

struct ExperimentSpec {
  Task task = Task::GlaucomaClassification;
  CropKind policy = CropKind::OnhCrop;
  std::vector<double> fractions = default_onh_fractions();
  bool retrain_arm = true;
  bool occlusion_arm = false;
  int repeats = 3;
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
  std::uint64_t split_seed = 11;
  std::uint64_t train_seed = 23;
  std::uint64_t bootstrap_seed = 37;
  int bootstrap_iterations = 5000;
  bool pooled_ci = true;  // repeat-mean CI from pooled predictions (else mean of repeat CIs)
  NetworkConfig network;
  TrainConfig train;
  int workers = 1;
  std::filesystem::path work_dir = "roar_run";
  std::string results_name = "results.csv";

  void validate() const;
  std::filesystem::path results_path() const { return work_dir / results_name; }
};

/// Repeats default to 3 for classification and 1 for regression.
ExperimentSpec default_spec(Task task, CropKind policy);

struct RunResult {
  Task task = Task::GlaucomaClassification;
  CropKind policy = CropKind::OnhCrop;
  double fraction = 0.0;
  bool retrain = true;
  int repeat = 0;  // -1 marks the across-repeat mean row
  std::string metric;
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;

  bool operator==(const RunResult&) const = default;
};

inline constexpr const char* kResultsHeader = "task,policy,fraction,retrain,repeat,metric,value,ci_lo,ci_hi,n";

std::string format_result_row(const RunResult& r);
std::vector<RunResult> read_results(const std::filesystem::path& path);

struct CellSpec {
  double fraction = 0.0;
  bool retrain = true;
  int repeat = 0;
};

/// Per-grid bookkeeping shared across cells.
struct GridContext {
  std::size_t trainings = 0;
  std::vector<std::string> failures;
  std::ostream* log = nullptr;
};

struct CellOutcome {
  std::vector<RunResult> rows;
  std::vector<PredictionRecord> records;  // patient-level for classification
  std::optional<Network> model;
  std::string checkpoint_hash;
};

std::filesystem::path checkpoint_path(const ExperimentSpec& spec, const CellSpec& cell);
std::uint64_t repeat_seed(std::uint64_t base, int repeat);
/// FNV-1a of the checkpoint file bytes, hex.
std::string file_hash(const std::filesystem::path& path);

/// Retrain arm: crops train, val and test, trains, evaluates. Occlusion arm:
/// loads the fraction-0 checkpoint and crops only the test images.
CellOutcome run_cell(const ExperimentSpec& spec, const CellSpec& cell, const ExperimentData& data, GridContext& ctx);

struct GridOutcome {
  std::vector<RunResult> rows;
  std::size_t trainings = 0;
  std::vector<std::string> failures;
};

/// Runs every (arm, fraction, repeat) cell on `workers` threads. Rows are
/// appended to the results file in grid order as soon as all earlier cells
/// are done. Cell failures are logged and skipped.
GridOutcome run_grid(const ExperimentSpec& spec, const ExperimentData& data);

// Saliency report -----------------------------------------------------------------

struct SaliencyCell {
  std::string label;
  const Network* model = nullptr;
  CropPolicy policy;
};

struct SectorRow {
  std::string cell;
  std::string sector;
  double mass = 0.0;
  double area_share = 0.0;
};

struct SaliencyReport {
  std::vector<std::pair<std::string, SaliencyMap>> averaged;
  std::vector<SectorRow> sectors;
  std::size_t skipped_no_disc = 0;
};

struct SaliencyReportOptions {
  std::vector<SectorSpec> sectors = quadrant_sectors(0.0, 0.5);
  bool normalize_per_image = false;
  std::optional<std::filesystem::path> out_dir;
};

/// Per-image saliency on the cropped input, realigned on the disc centroid
/// to the frame center, left eyes mirrored, averaged per cell.
SaliencyReport emit_saliency_report(std::span<const SaliencyCell> cells, std::span<const EvalImage> test,
                                    const SaliencyReportOptions& opts = {});

}  // namespace roar
