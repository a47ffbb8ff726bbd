#include "roar/cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "roar/config.hpp"
#include "roar/error.hpp"
#include "roar/experiment.hpp"
#include "roar/report.hpp"
#include "roar/synth.hpp"

namespace roar {

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string task;
  std::string policy;
};

void add_common(CLI::App* sub, CommonOptions& o, bool with_task_policy) {
  sub->add_option("--config", o.config, "INI config file");
  sub->add_option("--set", o.sets, "Override as section.key=value (repeatable)");
  if (with_task_policy) {
    sub->add_option("--task", o.task, "regression or classification");
    sub->add_option("--policy", o.policy, "onh, periphery or none");
  }
}

RunConfig build_config(const CommonOptions& o) {
  std::optional<Task> task;
  std::optional<CropKind> policy;
  try {
    if (!o.task.empty()) task = parse_task(o.task);
    if (!o.policy.empty()) policy = parse_crop_kind(o.policy);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config, task, policy);
  } else {
    cfg = default_run_config(task.value_or(Task::GlaucomaClassification), policy.value_or(CropKind::OnhCrop));
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError(fmt::format("--set expects section.key=value, got '{}'", s));
    }
    apply_override(cfg, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
  }
  return cfg;
}

Manifest require_manifest(const std::string& path) {
  if (path.empty()) throw ConfigError("a --manifest path is required");
  return read_manifest(path);
}

ExperimentData prepare_split(const Manifest& manifest, const RunConfig& cfg, std::ostream& out) {
  const auto split = split_by_patient(manifest, cfg.experiment.split_ratios, cfg.experiment.split_seed);
  ExperimentData data{prepare_images(split.train, cfg.preprocess), prepare_images(split.val, cfg.preprocess),
                      prepare_images(split.test, cfg.preprocess)};
  const auto dropped = data.train.dropped_no_disc + data.val.dropped_no_disc + data.test.dropped_no_disc;
  out << fmt::format("images: train {} / val {} / test {} (dropped without disc: {})\n", data.train.items.size(),
                     data.val.items.size(), data.test.items.size(), dropped);
  return data;
}

std::string fmt_report(const MetricReport& r) {
  return fmt::format("{} = {:.4f} [{:.4f}, {:.4f}] (n={})", r.metric, r.point_estimate, r.ci_low, r.ci_high, r.n);
}

int cmd_synth(const CommonOptions& o, const std::string& out_dir, std::optional<int> patients,
              std::optional<std::uint64_t> seed, std::optional<int> size, std::optional<double> strength,
              std::ostream& out) {
  auto cfg = build_config(o);
  if (patients) cfg.synth.n_patients = *patients;
  if (seed) cfg.synth.seed = *seed;
  if (size) cfg.synth.image_size = *size;
  if (strength) cfg.synth.peripheral_signal_strength = *strength;
  cfg.synth.validate();
  const auto data = generate_dataset(cfg.synth);
  write_dataset(out_dir, data);
  out << fmt::format("wrote {} images for {} patients to {}\n", data.records.size(), cfg.synth.n_patients, out_dir);
  return 0;
}

int cmd_preprocess(const CommonOptions& o, const std::string& manifest_path, const std::string& out_dir,
                   std::ostream& out) {
  const auto cfg = build_config(o);
  const auto manifest = require_manifest(manifest_path);
  const auto set = prepare_images(manifest, cfg.preprocess);
  std::filesystem::create_directories(out_dir);
  Manifest result;
  result.base_dir = out_dir;
  std::size_t k = 0;
  for (const auto& row : manifest.rows) {
    if (k >= set.items.size() || set.items[k].meta.image_id != row.image_id()) continue;
    const auto& item = set.items[k++];
    ManifestRow r = row;
    r.image_path = row.image_id() + ".png";
    r.disc_x = item.disc->cx;
    r.disc_y = item.disc->cy;
    save_image(std::filesystem::path(out_dir) / r.image_path, item.image);
    result.rows.push_back(std::move(r));
  }
  write_manifest(std::filesystem::path(out_dir) / "manifest.csv", result);
  out << fmt::format("preprocessed {} images ({} dropped without disc) into {}\n", set.items.size(),
                     set.dropped_no_disc, out_dir);
  return 0;
}

int cmd_split(const CommonOptions& o, const std::string& manifest_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  auto cfg = build_config(o);
  if (seed) cfg.experiment.split_seed = *seed;
  const auto manifest = require_manifest(manifest_path);
  auto split = split_by_patient(manifest, cfg.experiment.split_ratios, cfg.experiment.split_seed);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir = std::filesystem::absolute(out_dir);
  for (auto [name, m] : {std::pair{"train", &split.train}, {"val", &split.val}, {"test", &split.test}}) {
    for (auto& row : m->rows) {
      row.image_path = std::filesystem::proximate(std::filesystem::absolute(manifest.resolve(row)), dir).string();
    }
    m->base_dir = dir;
    write_manifest(dir / (std::string(name) + ".csv"), *m);
    out << fmt::format("{}: {} patients, {} images\n", name, m->patient_ids().size(), m->rows.size());
  }
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& train_path, const std::string& val_path,
              const std::string& ckpt_path, double fraction, std::optional<int> epochs, std::optional<double> lr,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  auto cfg = build_config(o);
  if (epochs) cfg.experiment.train.max_epochs = *epochs;
  if (lr) cfg.experiment.train.base_lr = *lr;
  if (seed) cfg.experiment.train.seed = *seed;
  cfg.validate();
  const auto train_m = require_manifest(train_path);
  const auto val_m = require_manifest(val_path);
  const CropPolicy policy{cfg.experiment.policy, fraction};
  const auto train = make_dataset(prepare_images(train_m, cfg.preprocess), policy, cfg.experiment.task);
  const auto val = make_dataset(prepare_images(val_m, cfg.preprocess), policy, cfg.experiment.task);
  auto fitted = fit(Network(cfg.experiment.network, cfg.experiment.train.seed ^ 0x5eedULL), train, val,
                    cfg.experiment.train);
  save_checkpoint(ckpt_path, fitted.checkpoint);
  for (const auto& e : fitted.history) {
    out << fmt::format("epoch {:3d} train {:.5f} val {:.5f} lr {:.3g}\n", e.epoch, e.train_loss, e.val_loss, e.lr);
  }
  out << fmt::format("best epoch {} val {:.5f}; checkpoint {} [{}]\n", fitted.best_epoch, fitted.best_val_loss,
                     ckpt_path, file_hash(ckpt_path));
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& ckpt_path, const std::string& manifest_path, double fraction,
             const std::string& predictions_path, std::ostream& out) {
  const auto cfg = build_config(o);
  if (!std::filesystem::exists(ckpt_path)) throw IoError(fmt::format("checkpoint not found: '{}'", ckpt_path));
  const auto net = network_from_checkpoint(load_checkpoint(ckpt_path));
  const auto manifest = require_manifest(manifest_path);
  const auto set = prepare_images(manifest, cfg.preprocess);
  const Task task = net.head() == HeadKind::SigmoidBinary ? Task::GlaucomaClassification : Task::VcdrRegression;
  const auto data = make_dataset(set, {cfg.experiment.policy, fraction}, task);
  const auto scores = predict(net, data.images);
  std::vector<PredictionRecord> records;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& m = set.items[i].meta;
    records.push_back({m.image_id, m.patient_id, m.eye_id, scores[i], data.targets[i]});
  }
  if (!predictions_path.empty()) {
    std::ofstream p(predictions_path, std::ios::trunc);
    if (!p) throw IoError(fmt::format("cannot open '{}' for writing", predictions_path));
    p << "image_id,patient_id,eye_id,prediction,label\n";
    for (const auto& r : records) p << fmt::format("{},{},{},{:.6f},{}\n", r.image_id, r.patient_id, r.eye_id, r.prediction, r.label);
  }
  BootstrapOptions bopts;
  bopts.iterations = cfg.experiment.bootstrap_iterations;
  bopts.seed = cfg.experiment.bootstrap_seed;
  if (task == Task::GlaucomaClassification) {
    const auto patients = aggregate_patient_max(records);
    out << fmt_report(bootstrap_records(patients, MetricKind::Auc, bopts)) << '\n';
  } else {
    for (auto kind : {MetricKind::Mae, MetricKind::R2, MetricKind::Pearson}) {
      out << fmt_report(bootstrap_records(records, kind, bopts)) << '\n';
    }
  }
  return 0;
}

int cmd_grid(const CommonOptions& o, const std::string& manifest_path, bool retrain, bool occlusion,
             std::optional<int> repeats, const std::string& fractions, const std::string& work_dir,
             std::optional<int> workers, std::ostream& out) {
  auto cfg = build_config(o);
  if (retrain || occlusion) {
    cfg.experiment.retrain_arm = retrain;
    cfg.experiment.occlusion_arm = occlusion;
  }
  if (repeats) cfg.experiment.repeats = *repeats;
  if (!fractions.empty()) cfg.experiment.fractions = parse_double_list(fractions);
  if (!work_dir.empty()) cfg.experiment.work_dir = work_dir;
  if (workers) cfg.experiment.workers = *workers;
  cfg.validate();
  const auto manifest = require_manifest(manifest_path);
  const auto data = prepare_split(manifest, cfg, out);
  const auto result = run_grid(cfg.experiment, data);
  for (const auto& row : result.rows) out << format_result_row(row) << '\n';
  for (const auto& f : result.failures) out << "failed: " << f << '\n';
  out << fmt::format("{} trainings; results in {}\n", result.trainings, cfg.experiment.results_path().string());
  return result.failures.empty() ? 0 : 1;
}

int cmd_saliency(const CommonOptions& o, const std::vector<std::string>& checkpoints,
                 const std::vector<double>& fractions, const std::string& manifest_path, const std::string& out_dir,
                 bool planted, std::ostream& out) {
  auto cfg = build_config(o);
  if (checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
  if (fractions.size() != checkpoints.size() && !fractions.empty()) {
    throw ConfigError("--fraction must be given once per --checkpoint");
  }
  const auto manifest = require_manifest(manifest_path);
  const auto set = prepare_images(manifest, cfg.preprocess);
  std::vector<Network> nets;
  for (const auto& c : checkpoints) {
    if (!std::filesystem::exists(c)) throw IoError(fmt::format("checkpoint not found: '{}'", c));
    nets.push_back(network_from_checkpoint(load_checkpoint(c)));
  }
  std::vector<SaliencyCell> cells;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const double f = fractions.empty() ? 0.0 : fractions[i];
    const CropPolicy policy{cfg.experiment.policy, f};
    cells.push_back({fmt::format("{}_{:.3f}_{}", to_string(policy.kind), f, std::filesystem::path(checkpoints[i]).stem().string()),
                     &nets[i], policy});
  }
  SaliencyReportOptions opts;
  opts.normalize_per_image = cfg.saliency.normalize_per_image;
  opts.sectors = quadrant_sectors(cfg.saliency.sector_inner, 0.5);
  if (planted) {
    for (auto s : planted_band_sectors(cfg.synth, cfg.synth.band_inner)) opts.sectors.push_back(s);
  }
  opts.out_dir = out_dir;
  const auto report = emit_saliency_report(cells, set.items, opts);
  for (const auto& r : report.sectors) {
    out << fmt::format("{} {}: mass {:.4f} area {:.4f}\n", r.cell, r.sector, r.mass, r.area_share);
  }
  out << fmt::format("skipped {} images without disc; maps in {}\n", report.skipped_no_disc + set.dropped_no_disc,
                     out_dir);
  return 0;
}

int cmd_report(const std::string& results_path, const std::string& out_svg, std::string metric, std::ostream& out) {
  const auto rows = read_results(results_path);
  if (rows.empty()) throw ValidationError(fmt::format("{}: no result rows", results_path));
  if (metric.empty()) metric = headline_metric(rows.front().task);
  emit_curves(rows, metric, out_svg);
  out << fmt::format("wrote {}\n", out_svg);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crop-policy remove-and-retrain experiments on fundus images", "roar"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, common, false);
  std::string synth_out;
  std::optional<int> synth_patients, synth_size;
  std::optional<std::uint64_t> synth_seed;
  std::optional<double> synth_strength;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--patients", synth_patients, "Number of patients");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--size", synth_size, "Image side in pixels");
  synth->add_option("--strength", synth_strength, "Peripheral signal strength");

  auto* prep = app.add_subcommand("preprocess", "Export preprocessed images and disc locations");
  add_common(prep, common, false);
  std::string prep_manifest, prep_out;
  prep->add_option("--manifest", prep_manifest, "Input manifest")->required();
  prep->add_option("--out", prep_out, "Output directory")->required();

  auto* split = app.add_subcommand("split", "Patient-level train/val/test split");
  add_common(split, common, false);
  std::string split_manifest, split_out;
  std::optional<std::uint64_t> split_seed;
  split->add_option("--manifest", split_manifest, "Input manifest")->required();
  split->add_option("--out", split_out, "Output directory")->required();
  split->add_option("--seed", split_seed, "Split seed");

  auto* train = app.add_subcommand("train", "Train one model");
  add_common(train, common, true);
  std::string train_m, val_m, train_ckpt;
  double train_fraction = 0.0;
  std::optional<int> train_epochs;
  std::optional<double> train_lr;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--train", train_m, "Training manifest")->required();
  train->add_option("--val", val_m, "Validation manifest")->required();
  train->add_option("--out", train_ckpt, "Checkpoint path")->required();
  train->add_option("--fraction", train_fraction, "Crop fraction");
  train->add_option("--epochs", train_epochs, "Maximum epochs");
  train->add_option("--lr", train_lr, "Base learning rate");
  train->add_option("--seed", train_seed, "Training seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  add_common(eval, common, true);
  std::string eval_ckpt, eval_manifest, eval_pred;
  double eval_fraction = 0.0;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "Test manifest")->required();
  eval->add_option("--fraction", eval_fraction, "Crop fraction applied to test images");
  eval->add_option("--predictions", eval_pred, "Write per-image predictions CSV");

  auto* grid = app.add_subcommand("grid", "Run the crop-fraction experiment grid");
  add_common(grid, common, true);
  std::string grid_manifest, grid_fractions, grid_work;
  bool grid_retrain = false, grid_occlusion = false;
  std::optional<int> grid_repeats, grid_workers;
  grid->add_option("--manifest", grid_manifest, "Dataset manifest")->required();
  grid->add_flag("--retrain", grid_retrain, "Run the retrain arm");
  grid->add_flag("--occlusion", grid_occlusion, "Run the occlusion arm");
  grid->add_option("--repeats", grid_repeats, "Repeats per cell");
  grid->add_option("--fractions", grid_fractions, "Comma-separated crop fractions");
  grid->add_option("--work-dir", grid_work, "Directory for results, checkpoints and log");
  grid->add_option("--workers", grid_workers, "Concurrent cells");

  auto* sal = app.add_subcommand("saliency", "Averaged saliency maps and sector masses");
  add_common(sal, common, true);
  std::vector<std::string> sal_ckpts;
  std::vector<double> sal_fractions;
  std::string sal_manifest, sal_out;
  bool sal_planted = false;
  sal->add_option("--checkpoint", sal_ckpts, "Checkpoint (repeatable)")->required();
  sal->add_option("--fraction", sal_fractions, "Crop fraction per checkpoint");
  sal->add_option("--manifest", sal_manifest, "Test manifest")->required();
  sal->add_option("--out", sal_out, "Output directory")->required();
  sal->add_flag("--planted-sectors", sal_planted, "Add the synthetic band sectors to the table");

  auto* report = app.add_subcommand("report", "Plot a results file as SVG");
  std::string rep_results, rep_out, rep_metric;
  report->add_option("--results", rep_results, "Results CSV")->required();
  report->add_option("--out", rep_out, "Output SVG")->required();
  report->add_option("--metric", rep_metric, "Metric to plot (default auc or r2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth) return cmd_synth(common, synth_out, synth_patients, synth_seed, synth_size, synth_strength, out);
    if (*prep) return cmd_preprocess(common, prep_manifest, prep_out, out);
    if (*split) return cmd_split(common, split_manifest, split_out, split_seed, out);
    if (*train) {
      return cmd_train(common, train_m, val_m, train_ckpt, train_fraction, train_epochs, train_lr, train_seed, out);
    }
    if (*eval) return cmd_eval(common, eval_ckpt, eval_manifest, eval_fraction, eval_pred, out);
    if (*grid) {
      return cmd_grid(common, grid_manifest, grid_retrain, grid_occlusion, grid_repeats, grid_fractions, grid_work,
                      grid_workers, out);
    }
    if (*sal) return cmd_saliency(common, sal_ckpts, sal_fractions, sal_manifest, sal_out, sal_planted, out);
    if (*report) return cmd_report(rep_results, rep_out, rep_metric, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    err << "file error: " << e.what() << '\n';
    return 4;
  } catch (const ValidationError& e) {
    err << "invalid data: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace roar
