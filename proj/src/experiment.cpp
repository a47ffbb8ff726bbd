#include "roar/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

PixelCoord frame_center(int w, int h) { return {(w - 1) / 2.0, (h - 1) / 2.0}; }

void log_line(std::ostream* log, const std::string& text) {
  if (log) {
    *log << text << '\n';
    log->flush();
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string metric_name(Task task, MetricKind kind) {
  (void)task;
  return to_string(kind);
}

std::vector<MetricKind> task_metrics(Task task) {
  if (task == Task::VcdrRegression) return {MetricKind::Mae, MetricKind::R2, MetricKind::Pearson};
  return {MetricKind::Auc};
}

// Units for bootstrap resampling: patients for classification, images for
// regression. Each unit owns the indices of its records.
std::vector<std::vector<std::size_t>> group_units(std::span<const PredictionRecord> records, bool by_patient) {
  std::vector<std::vector<std::size_t>> units;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& key = by_patient ? records[i].patient_id : records[i].image_id;
    auto [it, inserted] = index.emplace(key, units.size());
    if (inserted) units.emplace_back();
    units[it->second].push_back(i);
  }
  return units;
}

MetricReport pooled_report(std::span<const PredictionRecord> pooled, MetricKind kind, bool by_patient,
                           const BootstrapOptions& opts) {
  const auto units = group_units(pooled, by_patient);
  std::vector<double> pred;
  std::vector<double> label;
  const ResampleMetric metric = [&](std::span<const std::size_t> sample) {
    pred.clear();
    label.clear();
    for (std::size_t u : sample) {
      for (std::size_t i : units[u]) {
        pred.push_back(pooled[i].prediction);
        label.push_back(pooled[i].label);
      }
    }
    return evaluate_metric(kind, pred, label);
  };
  return bootstrap_ci(units.size(), metric, to_string(kind), opts);
}

std::string fraction_tag(double f) { return fmt::format("{:.3f}", f); }

std::string sanitize(const std::string& label) {
  std::string out = label;
  for (char& ch : out) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return out;
}

}  // namespace

// Preprocessing -------------------------------------------------------------------

void PreprocessConfig::validate() const {
  if (output_size < 8) throw ConfigError("preprocess: output_size must be >= 8");
  if (!(enhance_sigma_fraction > 0.0)) throw ConfigError("preprocess: enhance_sigma_fraction must be > 0");
  if (!(roi_radius_fraction > 0.0 && roi_radius_fraction <= 1.0)) {
    throw ConfigError("preprocess: roi_radius_fraction must be in (0,1]");
  }
  if (clip_margin_px < 0.0 || !(clip_reference_width > 0.0)) throw ConfigError("preprocess: invalid clip margin");
}

PreparedImage preprocess(const RasterImage& raw, std::optional<DiscLocation> disc, const PreprocessConfig& cfg) {
  cfg.validate();
  const int side = std::min(raw.width(), raw.height());
  RasterImage img = crop_to_square(raw);
  DiscLocation loc;
  if (disc) {
    loc = *disc;
    loc.cx -= (raw.width() - side) / 2;
    loc.cy -= (raw.height() - side) / 2;
  } else {
    loc = locate_disc_heuristic(img, cfg.disc);
  }
  if (cfg.enhance) img = enhance_local_contrast(img, cfg.enhance_sigma_fraction * side, cfg.enhance_alpha);
  if (cfg.roi_clip) {
    const double radius = cfg.roi_radius_fraction * side - cfg.clip_margin_px * side / cfg.clip_reference_width;
    img = apply_roi_clip(img, frame_center(side, side), radius);
  }
  const int out = cfg.output_size;
  const double scale = side > 1 ? static_cast<double>(out - 1) / (side - 1) : 1.0;
  img = resize_bilinear(img, out, out);
  loc.cx *= scale;
  loc.cy *= scale;
  if (loc.vertical_diameter) *loc.vertical_diameter *= scale;
  return {std::move(img), loc};
}

// Data sets -------------------------------------------------------------------------

std::string to_string(Task task) {
  return task == Task::VcdrRegression ? "regression" : "classification";
}

Task parse_task(const std::string& text) {
  if (text == "regression" || text == "vcdr") return Task::VcdrRegression;
  if (text == "classification" || text == "glaucoma") return Task::GlaucomaClassification;
  throw InvalidArgument(fmt::format("unknown task '{}' (expected regression or classification)", text));
}

PreparedSet prepare_images(const Manifest& manifest, const PreprocessConfig& cfg) {
  return prepare_images(manifest, cfg, [&](const ManifestRow& row) { return load_image(manifest.resolve(row)); });
}

PreparedSet prepare_images(const Manifest& manifest, const PreprocessConfig& cfg, const ImageLoader& loader) {
  PreparedSet set;
  set.items.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    std::optional<DiscLocation> disc;
    if (row.disc_x && row.disc_y) disc = DiscLocation{*row.disc_x, *row.disc_y, std::nullopt};
    const RasterImage raw = loader(row);
    EvalImage item;
    try {
      auto prepared = preprocess(raw, disc, cfg);
      item.image = std::move(prepared.image);
      item.disc = prepared.disc;
    } catch (const NoDiscFound&) {
      ++set.dropped_no_disc;
      continue;
    }
    item.meta.image_id = row.image_id();
    item.meta.patient_id = row.patient_id;
    item.meta.eye_id = row.eye_id;
    item.meta.laterality = row.laterality;
    item.meta.vcdr_label = row.vcdr;
    item.meta.glaucoma_label = row.glaucoma;
    set.items.push_back(std::move(item));
  }
  return set;
}

std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw InvalidArgument("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument(fmt::format("split ratios must sum to 1 (got {})", sum));
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    used += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++counts[order[k % 3]];
  return counts;
}

SplitManifests split_by_patient(const Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed) {
  auto patients = manifest.patient_ids();
  if (patients.size() < 3) {
    throw InvalidArgument(fmt::format("split needs at least 3 patients (got {})", patients.size()));
  }
  const auto counts = split_counts(patients.size(), ratios);
  Rng rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::unordered_map<std::string, int> subset;
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < counts[s]; ++i) subset[patients[k++]] = s;
  }
  SplitManifests out;
  for (Manifest* m : {&out.train, &out.val, &out.test}) m->base_dir = manifest.base_dir;
  for (const auto& row : manifest.rows) {
    switch (subset.at(row.patient_id)) {
      case 0: out.train.rows.push_back(row); break;
      case 1: out.val.rows.push_back(row); break;
      default: out.test.rows.push_back(row); break;
    }
  }
  return out;
}

std::vector<RasterImage> cropped_images(const PreparedSet& set, const CropPolicy& policy) {
  std::vector<RasterImage> out;
  out.reserve(set.items.size());
  for (const auto& item : set.items) {
    if (policy.is_noop()) {
      out.push_back(item.image);
      continue;
    }
    if (!item.disc) throw ValidationError(fmt::format("image {} has no disc location", item.meta.image_id));
    out.push_back(apply_crop_policy(item.image, *item.disc, policy));
  }
  return out;
}

Dataset make_dataset(const PreparedSet& set, const CropPolicy& policy, Task task) {
  Dataset d;
  d.images = cropped_images(set, policy);
  d.targets.reserve(set.items.size());
  for (const auto& item : set.items) {
    if (task == Task::VcdrRegression) {
      if (!item.meta.vcdr_label) throw ValidationError(fmt::format("image {} has no vcdr label", item.meta.image_id));
      d.targets.push_back(*item.meta.vcdr_label);
    } else {
      if (!item.meta.glaucoma_label) {
        throw ValidationError(fmt::format("image {} has no glaucoma label", item.meta.image_id));
      }
      d.targets.push_back(*item.meta.glaucoma_label ? 1.0 : 0.0);
    }
  }
  return d;
}

// Experiment grid ----------------------------------------------------------------

void ExperimentSpec::validate() const {
  if (policy == CropKind::None) throw ConfigError("grid: policy must be onh or periphery");
  if (fractions.empty()) throw ConfigError("grid: fraction list is empty");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(fmt::format("grid: fraction {} outside [0,1]", f));
  }
  if (!retrain_arm && !occlusion_arm) throw ConfigError("grid: no arm selected");
  if (repeats < 1) throw ConfigError("grid: repeats must be >= 1");
  if (bootstrap_iterations < 1) throw ConfigError("grid: bootstrap iterations must be >= 1");
  if (workers < 1) throw ConfigError("grid: workers must be >= 1");
  split_counts(3, split_ratios);
  train.validate();
}

ExperimentSpec default_spec(Task task, CropKind policy) {
  ExperimentSpec spec;
  spec.task = task;
  spec.policy = policy;
  spec.fractions = policy == CropKind::PeripheryCrop ? default_periphery_fractions() : default_onh_fractions();
  spec.repeats = task == Task::GlaucomaClassification ? 3 : 1;
  spec.network.head = task == Task::GlaucomaClassification ? HeadKind::SigmoidBinary : HeadKind::LinearRegression;
  return spec;
}

std::string format_result_row(const RunResult& r) {
  return fmt::format("{},{},{:.3f},{},{},{},{:.6f},{:.6f},{:.6f},{}", to_string(r.task), to_string(r.policy),
                     r.fraction, r.retrain ? 1 : 0, r.repeat < 0 ? std::string("mean") : std::to_string(r.repeat),
                     r.metric, r.value, r.ci_low, r.ci_high, r.n);
}

std::vector<RunResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("results file not found: '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw ValidationError(fmt::format("{}: unexpected results header", path.string()));
  }
  std::vector<RunResult> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 10) throw ValidationError(fmt::format("{} line {}: expected 10 fields", path.string(), line_no));
    try {
      RunResult r;
      r.task = parse_task(f[0]);
      r.policy = parse_crop_kind(f[1]);
      r.fraction = std::stod(f[2]);
      r.retrain = f[3] == "1";
      r.repeat = f[4] == "mean" ? -1 : std::stoi(f[4]);
      r.metric = f[5];
      r.value = std::stod(f[6]);
      r.ci_low = std::stod(f[7]);
      r.ci_high = std::stod(f[8]);
      r.n = static_cast<std::size_t>(std::stoull(f[9]));
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ValidationError(fmt::format("{} line {}: {}", path.string(), line_no, e.what()));
    }
  }
  return rows;
}

std::uint64_t repeat_seed(std::uint64_t base, int repeat) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(repeat + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::filesystem::path checkpoint_path(const ExperimentSpec& spec, const CellSpec& cell) {
  const auto dir = spec.work_dir / "checkpoints";
  if (cell.fraction == 0.0) return dir / fmt::format("{}_full_r{}.ckpt", to_string(spec.task), cell.repeat);
  return dir / fmt::format("{}_{}_f{}_r{}.ckpt", to_string(spec.task), to_string(spec.policy),
                           fraction_tag(cell.fraction), cell.repeat);
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

CellOutcome run_cell(const ExperimentSpec& spec, const CellSpec& cell, const ExperimentData& data, GridContext& ctx) {
  const CropPolicy policy{spec.policy, cell.fraction};
  const auto ckpt_file = checkpoint_path(spec, cell);
  CellOutcome out;

  if (cell.retrain) {
    std::filesystem::create_directories(ckpt_file.parent_path());
    NetworkConfig net_cfg = spec.network;
    net_cfg.head = spec.task == Task::GlaucomaClassification ? HeadKind::SigmoidBinary : HeadKind::LinearRegression;
    TrainConfig train_cfg = spec.train;
    train_cfg.seed = repeat_seed(spec.train_seed, cell.repeat);
    const Dataset train = make_dataset(data.train, policy, spec.task);
    const Dataset val = make_dataset(data.val, policy, spec.task);
    ++ctx.trainings;
    auto fitted = fit(Network(net_cfg, train_cfg.seed ^ 0x5eedULL), train, val, train_cfg);
    save_checkpoint(ckpt_file, fitted.checkpoint);
    out.checkpoint_hash = file_hash(ckpt_file);
    log_line(ctx.log, fmt::format("  trained {} epochs, best epoch {} (val {:.5f}), checkpoint {} [{}]",
                                  fitted.history.size(), fitted.best_epoch, fitted.best_val_loss,
                                  ckpt_file.filename().string(), out.checkpoint_hash));
    out.model = std::move(fitted.model);
  } else {
    const auto full = checkpoint_path(spec, {0.0, true, cell.repeat});
    if (!std::filesystem::exists(full)) {
      throw IoError(fmt::format("occlusion arm needs the full-image checkpoint '{}'", full.string()));
    }
    out.checkpoint_hash = file_hash(full);
    out.model = network_from_checkpoint(load_checkpoint(full));
    log_line(ctx.log, fmt::format("  reused checkpoint {} [{}]", full.filename().string(), out.checkpoint_hash));
  }

  const Dataset test = make_dataset(data.test, policy, spec.task);
  const auto scores = predict(*out.model, test.images);
  std::vector<PredictionRecord> records;
  records.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& meta = data.test.items[i].meta;
    records.push_back({meta.image_id, meta.patient_id, meta.eye_id, scores[i], test.targets[i]});
  }
  if (spec.task == Task::GlaucomaClassification) records = aggregate_patient_max(records);

  BootstrapOptions bopts;
  bopts.iterations = spec.bootstrap_iterations;
  bopts.seed = spec.bootstrap_seed;
  for (MetricKind kind : task_metrics(spec.task)) {
    const auto rep = bootstrap_records(records, kind, bopts);
    out.rows.push_back({spec.task, spec.policy, cell.fraction, cell.retrain, cell.repeat, metric_name(spec.task, kind),
                        rep.point_estimate, rep.ci_low, rep.ci_high, rep.n});
  }
  out.records = std::move(records);
  return out;
}

namespace {

struct CellJob {
  CellSpec cell;
  std::size_t group = 0;  // index of the (arm, fraction) group
  bool last_in_group = false;
};

struct CellSlot {
  bool done = false;
  std::optional<CellOutcome> outcome;
  std::string error;
  std::string log;
  double seconds = 0.0;
};

RunResult mean_row(const ExperimentSpec& spec, const CellSpec& cell, MetricKind kind, std::size_t m,
                   const std::vector<const CellOutcome*>& done, std::vector<std::string>& failures) {
  RunResult mean{spec.task, spec.policy, cell.fraction, cell.retrain, -1, metric_name(spec.task, kind)};
  double lo = 0.0, hi = 0.0;
  for (const auto* c : done) {
    mean.value += c->rows[m].value;
    lo += c->rows[m].ci_low;
    hi += c->rows[m].ci_high;
  }
  const double k = static_cast<double>(done.size());
  mean.value /= k;
  mean.ci_low = lo / k;
  mean.ci_high = hi / k;
  mean.n = done.front()->rows[m].n;
  if (!spec.pooled_ci) return mean;
  std::vector<PredictionRecord> pooled;
  for (const auto* c : done) pooled.insert(pooled.end(), c->records.begin(), c->records.end());
  BootstrapOptions bopts;
  bopts.iterations = spec.bootstrap_iterations;
  bopts.seed = spec.bootstrap_seed + 1;
  try {
    const auto rep = pooled_report(pooled, kind, spec.task == Task::GlaucomaClassification, bopts);
    mean.ci_low = rep.ci_low;
    mean.ci_high = rep.ci_high;
    mean.n = rep.n;
  } catch (const UndefinedMetric& e) {
    failures.push_back(fmt::format("pooled CI fraction={}: {}", fraction_tag(cell.fraction), e.what()));
  }
  return mean;
}

}  // namespace

GridOutcome run_grid(const ExperimentSpec& spec, const ExperimentData& data) {
  spec.validate();
  std::filesystem::create_directories(spec.work_dir);
  std::ofstream results(spec.results_path(), std::ios::trunc);
  if (!results) throw IoError(fmt::format("cannot open '{}' for writing", spec.results_path().string()));
  results << kResultsHeader << '\n';
  results.flush();
  std::ofstream log_file(spec.work_dir / "run.log", std::ios::app);
  log_line(&log_file, fmt::format("grid task={} policy={} repeats={} workers={} train={} val={} test={} images",
                                  to_string(spec.task), to_string(spec.policy), spec.repeats, spec.workers,
                                  data.train.items.size(), data.val.items.size(), data.test.items.size()));

  GridOutcome outcome;
  const bool emit_mean = spec.task == Task::GlaucomaClassification || spec.repeats > 1;
  const auto metrics = task_metrics(spec.task);

  // Retrain cells are independent; occlusion cells need the fraction-0
  // checkpoints, so they form a second phase.
  std::vector<std::vector<CellJob>> phases;
  std::size_t group = 0;
  for (bool retrain : {true, false}) {
    if (retrain ? !spec.retrain_arm : !spec.occlusion_arm) continue;
    auto& jobs = phases.emplace_back();
    for (double fraction : spec.fractions) {
      for (int r = 0; r < spec.repeats; ++r) jobs.push_back({{fraction, retrain, r}, group, r + 1 == spec.repeats});
      ++group;
    }
  }

  for (const auto& jobs : phases) {
    std::vector<CellSlot> slots(jobs.size());
    std::mutex mu;
    std::size_t next = 0;
    std::size_t cursor = 0;
    std::vector<const CellOutcome*> group_done;

    // Writes completed slots in job order; called with the mutex held.
    const auto flush_ready = [&] {
      while (cursor < slots.size() && slots[cursor].done) {
        auto& slot = slots[cursor];
        const auto& job = jobs[cursor];
        log_file << slot.log;
        if (slot.outcome) {
          for (const auto& row : slot.outcome->rows) {
            results << format_result_row(row) << '\n';
            outcome.rows.push_back(row);
          }
          group_done.push_back(&*slot.outcome);
        } else {
          outcome.failures.push_back(slot.error);
        }
        log_line(&log_file, fmt::format("  {:.1f} s", slot.seconds));
        if (job.last_in_group) {
          if (emit_mean && !group_done.empty()) {
            for (std::size_t m = 0; m < metrics.size(); ++m) {
              const auto row = mean_row(spec, job.cell, metrics[m], m, group_done, outcome.failures);
              results << format_result_row(row) << '\n';
              outcome.rows.push_back(row);
            }
          }
          group_done.clear();
        }
        results.flush();
        ++cursor;
      }
    };

    const auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= jobs.size()) return;
          i = next++;
        }
        const auto& cell = jobs[i].cell;
        std::ostringstream cell_log;
        GridContext ctx;
        ctx.log = &cell_log;
        log_line(&cell_log, fmt::format("cell policy={} fraction={} retrain={} repeat={}", to_string(spec.policy),
                                        fraction_tag(cell.fraction), cell.retrain ? 1 : 0, cell.repeat));
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<CellOutcome> result;
        std::string error;
        try {
          result = run_cell(spec, cell, data, ctx);
        } catch (const std::exception& e) {
          error = fmt::format("cell policy={} fraction={} retrain={} repeat={} failed: {}", to_string(spec.policy),
                              fraction_tag(cell.fraction), cell.retrain ? 1 : 0, cell.repeat, e.what());
          log_line(&cell_log, "  " + error);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(mu);
        auto& slot = slots[i];
        slot.outcome = std::move(result);
        slot.error = std::move(error);
        slot.log = cell_log.str();
        slot.seconds = secs;
        slot.done = true;
        outcome.trainings += ctx.trainings;
        flush_ready();
      }
    };

    const int n_workers = std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
  }
  log_line(&log_file, fmt::format("grid finished: {} trainings, {} failures", outcome.trainings,
                                  outcome.failures.size()));
  return outcome;
}

// Saliency report -----------------------------------------------------------------

SaliencyReport emit_saliency_report(std::span<const SaliencyCell> cells, std::span<const EvalImage> test,
                                    const SaliencyReportOptions& opts) {
  SaliencyReport report;
  std::vector<const EvalImage*> usable;
  for (const auto& item : test) {
    if (item.disc) {
      usable.push_back(&item);
    } else {
      ++report.skipped_no_disc;
    }
  }
  if (usable.empty()) throw ValidationError("saliency report: no test image has a disc location");
  for (const auto& s : opts.sectors) s.validate();
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);

  for (const auto& cell : cells) {
    if (!cell.model) throw InvalidArgument(fmt::format("saliency cell '{}' has no model", cell.label));
    std::vector<RasterImage> inputs;
    inputs.reserve(usable.size());
    for (const auto* item : usable) {
      inputs.push_back(cell.policy.is_noop() ? item->image : apply_crop_policy(item->image, *item->disc, cell.policy));
    }
    const auto raw = saliency_maps(*cell.model, inputs);
    std::vector<SaliencyMap> aligned;
    aligned.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto center = frame_center(raw[i].width, raw[i].height);
      auto m = mirror_left(align_map(raw[i], *usable[i]->disc, center), usable[i]->meta.laterality);
      if (opts.normalize_per_image) m = normalize_mass(m);
      aligned.push_back(std::move(m));
    }
    auto avg = average_maps(aligned);
    const auto center = frame_center(avg.width, avg.height);
    for (const auto& sector : opts.sectors) {
      SectorRow row{cell.label, sector.name, 0.0, sector_area_share(avg.width, avg.height, sector, center)};
      try {
        row.mass = sector_mass(avg, sector, center);
      } catch (const UndefinedMetric&) {
        row.mass = 0.0;
      }
      report.sectors.push_back(std::move(row));
    }
    if (opts.out_dir) {
      const auto stem = sanitize(cell.label);
      write_saliency_pgm(*opts.out_dir / (stem + "_saliency.pgm"), avg);
      write_saliency_png(*opts.out_dir / (stem + "_saliency.png"), avg);
    }
    report.averaged.emplace_back(cell.label, std::move(avg));
  }

  if (opts.out_dir) {
    std::ofstream csv(*opts.out_dir / "sectors.csv", std::ios::trunc);
    if (!csv) throw IoError(fmt::format("cannot write sectors.csv in '{}'", opts.out_dir->string()));
    csv << "cell,sector,mass,area_share\n";
    for (const auto& r : report.sectors) csv << fmt::format("{},{},{:.6f},{:.6f}\n", r.cell, r.sector, r.mass, r.area_share);
  }
  return report;
}

}  // namespace roar
