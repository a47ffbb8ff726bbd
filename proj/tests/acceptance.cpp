// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gradcheck.hpp"
#include "roar/cli.hpp"
#include "roar/cropping.hpp"
#include "roar/error.hpp"
#include "roar/experiment.hpp"
#include "roar/metrics.hpp"
#include "roar/synth.hpp"
#include "support.hpp"

using namespace roar;
namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path work_dir = "acceptance_run";
  int patients = 600;
  int epochs = 40;
  double lr = 3e-3;
  int bootstrap = 2000;
  int workers = 1;
  std::vector<int> only;
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Oracles ---------------------------------------------------------------------

double oracle_mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double oracle_mae(const std::vector<double>& p, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - y[i]);
  return s / p.size();
}

double oracle_r2(const std::vector<double>& p, const std::vector<double>& y) {
  const double m = oracle_mean(y);
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    res += (y[i] - p[i]) * (y[i] - p[i]);
    tot += (y[i] - m) * (y[i] - m);
  }
  return 1.0 - res / tot;
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = oracle_mean(x), my = oracle_mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double oracle_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Criteria 1-3, 7, 8: oracle checks ----------------------------------------------

Verdict metric_oracles() {
  Rng rng(101);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = test::uniform_int(rng, 4, 200);
    std::vector<double> p(n), y(n), b(n);
    for (int i = 0; i < n; ++i) {
      y[i] = test::uniform(rng, 0.2, 0.95);
      p[i] = y[i] + test::uniform(rng, -0.3, 0.3);
      b[i] = i < 2 ? i : test::uniform_int(rng, 0, 1);
      if (inst % 2) p[i] = std::round(p[i] * 20.0) / 20.0;  // ties on odd instances
    }
    worst = std::max(worst, std::abs(roc_auc(p, b) - oracle_auc(p, b)));
    worst = std::max(worst, std::abs(r2(p, y) - oracle_r2(p, y)));
    worst = std::max(worst, std::abs(pearson_r(p, y) - oracle_pearson(p, y)));
    worst = std::max(worst, std::abs(point_biserial(b, p) - oracle_pearson(b, p)));
    worst = std::max(worst, std::abs(mae(p, y) - oracle_mae(p, y)));
  }
  return {worst <= 1e-12, fmt::format("max |metric - oracle| = {:.2e} over 100 instances", worst)};
}

Verdict gradient_checks() {
  Rng rng(202);
  test::GradCheckStats all;
  for (int round = 0; round < 4; ++round) {
    for (const auto& g : test::gradcheck_graphs(rng)) {
      Network net(g, rng());
      // Zero biases put exact ReLU kinks in play; move off them.
      for (auto& p : net.parameters())
        for (double& v : p.values()) v += test::uniform(rng, -0.05, 0.05);
      const Tensor x = test::random_tensor({2, static_cast<std::size_t>(g.in_channels),
                                            static_cast<std::size_t>(g.in_height),
                                            static_cast<std::size_t>(g.in_width)},
                                           rng, 0.0, 1.0);
      all.merge(test::check_network_gradients(net, x, rng));
    }
    const int n = test::uniform_int(rng, 3, 40);
    std::vector<double> a(n), b(n), prob(n), lab(n);
    for (int i = 0; i < n; ++i) {
      a[i] = test::uniform(rng, -2, 2);
      b[i] = test::uniform(rng, -2, 2);
      prob[i] = test::uniform(rng, 0.02, 0.98);
      lab[i] = test::uniform_int(rng, 0, 1);
    }
    all.merge(test::check_loss_gradient(mse_loss, a, b));
    all.merge(test::check_loss_gradient(bce_loss, prob, lab));
  }
  return {all.all_passed(), fmt::format("{}/{} checked gradients within 1e-3 relative (worst {:.2e})", all.passed,
                                        all.checked, all.worst)};
}

Verdict mask_geometry() {
  Rng rng(303);
  int bad_counts = 0;
  for (int k = 0; k < 50; ++k) {
    const int w = test::uniform_int(rng, 32, 512);
    const int h = test::uniform_int(rng, 32, 512);
    const double f = test::uniform(rng, 0.02, 0.6);
    const double r = f * w / 2.0;
    // keep the circle fully in frame so the area formula applies
    if (2 * r + 2 >= std::min(w, h)) {
      --k;
      continue;
    }
    const DiscLocation c{test::uniform(rng, r + 1, w - r - 1), test::uniform(rng, r + 1, h - r - 1), {}};
    const double d = 2.0 * r;
    const double expected = std::numbers::pi * r * r;
    if (std::abs(static_cast<double>(make_circular_mask(w, h, c, f).count()) - expected) > 4.0 * d) ++bad_counts;
  }
  int bad_partitions = 0;
  for (int k = 0; k < 20; ++k) {
    const int w = test::uniform_int(rng, 16, 96);
    const auto img = test::random_image(w, w, rng);
    const DiscLocation c{test::uniform(rng, 0, w - 1), test::uniform(rng, 0, w - 1), {}};
    const double f = test::uniform(rng, 0.01, 1.0);
    const auto a = apply_crop_policy(img, c, {CropKind::OnhCrop, f});
    const auto b = apply_crop_policy(img, c, {CropKind::PeripheryCrop, f});
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      if (a.data()[i] + b.data()[i] != img.data()[i] || (a.data()[i] != 0.0 && b.data()[i] != 0.0)) {
        ++bad_partitions;
        break;
      }
    }
  }
  return {bad_counts == 0 && bad_partitions == 0,
          fmt::format("{} of 50 counts off by more than 4d, {} of 20 partitions inexact", bad_counts, bad_partitions)};
}

Verdict aggregation_and_splits() {
  Rng rng(707);
  int bad_tables = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = test::uniform_int(rng, 1, 60);
    const int patients = test::uniform_int(rng, 1, 15);
    std::vector<PredictionRecord> recs;
    for (int i = 0; i < n; ++i) {
      recs.push_back({fmt::format("i{}", i), fmt::format("p{}", test::uniform_int(rng, 0, patients - 1)), "e",
                      test::uniform(rng, 0, 1), static_cast<double>(test::uniform_int(rng, 0, 1))});
    }
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, double>> oracle;
    for (const auto& r : recs) {
      auto [it, fresh] = oracle.try_emplace(r.patient_id, r.prediction, r.label);
      if (fresh) {
        order.push_back(r.patient_id);
      } else {
        it->second.first = std::max(it->second.first, r.prediction);
        it->second.second = std::max(it->second.second, r.label);
      }
    }
    const auto got = aggregate_patient_max(recs);
    bool ok = got.size() == order.size();
    for (std::size_t i = 0; ok && i < got.size(); ++i) {
      ok = got[i].patient_id == order[i] && got[i].prediction == oracle[order[i]].first &&
           got[i].label == oracle[order[i]].second;
    }
    if (!ok) ++bad_tables;
  }
  int bad_splits = 0;
  for (int m = 0; m < 100; ++m) {
    Manifest man;
    const int patients = test::uniform_int(rng, 3, 80);
    for (int p = 0; p < patients; ++p) {
      const int images = test::uniform_int(rng, 1, 4);
      for (int k = 0; k < images; ++k) {
        man.rows.push_back({fmt::format("p{}_{}.ppm", p, k), fmt::format("p{}", p), fmt::format("p{}_R", p),
                            Laterality::Right});
      }
    }
    std::shuffle(man.rows.begin(), man.rows.end(), rng);
    const auto s = split_by_patient(man, {0.7, 0.1, 0.2}, rng());
    std::set<std::string> seen;
    std::size_t rows = 0;
    bool ok = true;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      for (const auto& id : part->patient_ids()) ok = ok && seen.insert(id).second;
      rows += part->rows.size();
    }
    if (!ok || seen.size() != static_cast<std::size_t>(patients) || rows != man.rows.size()) ++bad_splits;
  }
  return {bad_tables == 0 && bad_splits == 0,
          fmt::format("{} of 1000 aggregations differ from the group-by, {} of 100 splits overlap", bad_tables,
                      bad_splits)};
}

Verdict bootstrap_behaviour() {
  const std::vector<PredictionRecord> same(25, {"i", "p", "e", 0.3, 0.7});
  const auto flat = bootstrap_records(same, MetricKind::Mae, {5000, 0.95, 1});
  const bool zero_width = flat.ci_low == flat.point_estimate && flat.ci_high == flat.point_estimate;

  Rng rng(808);
  std::normal_distribution<double> normal(5.0, 2.0);
  int covered = 0;
  bool reproducible = true;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> xs(100);
    for (double& x : xs) x = normal(rng);
    const auto mean_of = [&](std::span<const std::size_t> idx) {
      double s = 0.0;
      for (std::size_t i : idx) s += xs[i];
      return s / static_cast<double>(idx.size());
    };
    const BootstrapOptions opts{2000, 0.95, static_cast<std::uint64_t>(rep)};
    const auto a = bootstrap_ci(xs.size(), mean_of, "mean", opts);
    if (rep < 10) {
      const auto b = bootstrap_ci(xs.size(), mean_of, "mean", opts);
      reproducible = reproducible && a.ci_low == b.ci_low && a.ci_high == b.ci_high;
    }
    if (a.ci_low <= 5.0 && 5.0 <= a.ci_high) ++covered;
  }
  return {zero_width && reproducible && covered >= 176,
          fmt::format("zero width {}, coverage {}/200, reproducible {}", zero_width ? "yes" : "no", covered,
                      reproducible ? "yes" : "no")};
}

// Criteria 4-6: planted-signal experiments ---------------------------------------

struct Experiment {
  SynthDataset synth;
  ExperimentData data;
};

Experiment make_experiment(int patients, double strength) {
  Experiment e;
  SynthConfig sc;
  sc.n_patients = patients;
  sc.peripheral_signal_strength = strength;
  e.synth = generate_dataset(sc);
  std::unordered_map<std::string, const RasterImage*> by_id;
  for (const auto& r : e.synth.records) by_id[r.meta.image_id] = &r.image;
  const ImageLoader loader = [&by_id](const ManifestRow& row) { return *by_id.at(row.image_id()); };
  const ExperimentSpec defaults;
  const auto split = split_by_patient(e.synth.manifest, defaults.split_ratios, defaults.split_seed);
  const PreprocessConfig pc;
  e.data.train = prepare_images(split.train, pc, loader);
  e.data.val = prepare_images(split.val, pc, loader);
  e.data.test = prepare_images(split.test, pc, loader);
  return e;
}

ExperimentSpec acceptance_spec(const Options& o, Task task, CropKind policy, const std::string& name) {
  ExperimentSpec s = default_spec(task, policy);
  s.repeats = 1;
  s.train.max_epochs = o.epochs;
  s.train.base_lr = o.lr;
  s.bootstrap_iterations = o.bootstrap;
  s.workers = o.workers;
  s.work_dir = o.work_dir / name;
  return s;
}

double value_at(const std::vector<RunResult>& rows, double fraction, bool retrain, const std::string& metric) {
  for (const auto& r : rows) {
    if (r.repeat >= 0 && std::abs(r.fraction - fraction) < 1e-9 && r.retrain == retrain && r.metric == metric) {
      return r.value;
    }
  }
  return std::nan("");
}

struct PlantedRuns {
  std::optional<Experiment> strong;
  ExperimentSpec cls_spec;
  std::vector<RunResult> cls_rows;
  std::vector<std::string> failures;
};

Verdict roar_ordering(const Options& o, PlantedRuns& runs, std::ostream& log) {
  runs.strong = make_experiment(o.patients, 0.8);
  log << fmt::format("  strong-signal split: {} / {} / {} images\n", runs.strong->data.train.items.size(),
                     runs.strong->data.val.items.size(), runs.strong->data.test.items.size());
  runs.cls_spec = acceptance_spec(o, Task::GlaucomaClassification, CropKind::OnhCrop, "classification_strong");
  runs.cls_spec.fractions = {0.0, 0.3, 0.45, 0.6};
  runs.cls_spec.occlusion_arm = true;
  const auto strong = run_grid(runs.cls_spec, runs.strong->data);
  runs.cls_rows = strong.rows;
  runs.failures = strong.failures;

  const Experiment null = make_experiment(o.patients, 0.0);
  auto null_spec = acceptance_spec(o, Task::GlaucomaClassification, CropKind::OnhCrop, "classification_null");
  null_spec.fractions = {0.6};
  const auto nul = run_grid(null_spec, null.data);
  runs.failures.insert(runs.failures.end(), nul.failures.begin(), nul.failures.end());

  const double full = value_at(strong.rows, 0.0, true, "auc");
  const double onh = value_at(strong.rows, 0.6, true, "auc");
  const double chance = value_at(nul.rows, 0.6, true, "auc");
  bool no_worse = true;
  double best_gap = -1.0;
  std::string arms;
  for (double f : {0.3, 0.45, 0.6}) {
    const double re = value_at(strong.rows, f, true, "auc");
    const double oc = value_at(strong.rows, f, false, "auc");
    no_worse = no_worse && oc <= re + 0.02;
    best_gap = std::max(best_gap, re - oc);
    arms += fmt::format(" f{:.2f}: retrain {:.3f} / occlusion {:.3f};", f, re, oc);
  }
  for (const auto& f : runs.failures) log << "  cell failure: " << f << '\n';
  const bool a = full >= 0.90, b = onh >= 0.75, c = chance >= 0.40 && chance <= 0.60, d = no_worse && best_gap >= 0.05;
  log << fmt::format("  (a) full AUC {:.3f} {}\n  (b) onh 0.6 AUC {:.3f} {}\n  (c) null onh 0.6 AUC {:.3f} {}\n"
                     "  (d){} max gap {:.3f} {}\n",
                     full, a ? "ok" : "FAIL", onh, b ? "ok" : "FAIL", chance, c ? "ok" : "FAIL", arms, best_gap,
                     d ? "ok" : "FAIL");
  return {a && b && c && d && runs.failures.empty(),
          fmt::format("full {:.3f}, onh0.6 {:.3f}, null {:.3f}, max retrain-occlusion gap {:.3f}", full, onh, chance,
                      best_gap)};
}

Verdict vcdr_regression(const Options& o, PlantedRuns& runs, std::ostream& log) {
  if (!runs.strong) runs.strong = make_experiment(o.patients, 0.8);
  auto full_spec = acceptance_spec(o, Task::VcdrRegression, CropKind::PeripheryCrop, "regression");
  full_spec.fractions = {0.0, 0.3};
  const auto out = run_grid(full_spec, runs.strong->data);
  for (const auto& f : out.failures) log << "  cell failure: " << f << '\n';
  const double full = value_at(out.rows, 0.0, true, "r2");
  const double peri = value_at(out.rows, 0.3, true, "r2");

  std::vector<double> labels;
  for (const auto& item : runs.strong->data.test.items) labels.push_back(*item.meta.vcdr_label);
  const double mean = oracle_mean(labels);
  double mad = 0.0;
  for (double l : labels) mad += std::abs(l - mean);
  mad /= labels.size();
  const double baseline = mae(std::vector<double>(labels.size(), mean), labels);
  const bool ok = full >= 0.6 && std::abs(peri - full) <= 0.05 && std::abs(baseline - mad) <= 1e-12 &&
                  out.failures.empty();
  log << fmt::format("  full R2 {:.3f}, periphery 0.3 R2 {:.3f}, baseline MAE {:.6f}\n", full, peri, baseline);
  return {ok, fmt::format("full R2 {:.3f}, periphery0.3 R2 {:.3f} (diff {:.3f}), baseline MAE - MAD = {:.1e}", full, peri,
                          std::abs(peri - full), std::abs(baseline - mad))};
}

Verdict saliency_relocation(const Options& o, PlantedRuns& runs, std::ostream& log) {
  if (runs.cls_rows.empty()) return {false, "needs the criterion 4 grid"};
  const auto ckpt = checkpoint_path(runs.cls_spec, {0.6, true, 0});
  const Network model = network_from_checkpoint(load_checkpoint(ckpt));
  const SaliencyCell cell{"onh_0.600", &model, {CropKind::OnhCrop, 0.6}};
  SaliencyReportOptions opts;
  const SynthConfig sc;
  opts.sectors = planted_band_sectors(sc, 0.3);
  opts.out_dir = o.work_dir / "saliency";
  const auto report = emit_saliency_report(std::span(&cell, 1), runs.strong->data.test.items, opts);
  double mass = 0.0, area = 0.0;
  for (const auto& r : report.sectors) {
    mass += r.mass;
    area += r.area_share;
    log << fmt::format("  {}: mass {:.4f} area {:.4f}\n", r.sector, r.mass, r.area_share);
  }
  return {mass >= 2.0 * area, fmt::format("planted sectors hold {:.3f} of the mass on {:.3f} of the area ({:.2f}x)",
                                          mass, area, mass / area)};
}

// Criterion 9 -------------------------------------------------------------------

Verdict grid_determinism(const Options& o) {
  const auto dir = o.work_dir / "determinism";
  fs::remove_all(dir);
  const auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "roar");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  int code = run({"synth", "--out", (dir / "data").string(), "--patients", "40", "--size", "48", "--seed", "5"});
  std::string first, second;
  for (int k = 0; k < 2 && code == 0; ++k) {
    const auto work = dir / fmt::format("run{}", k);
    code = run({"grid", "--manifest", (dir / "data" / "manifest.csv").string(), "--task", "classification",
                "--policy", "onh", "--retrain", "--occlusion", "--repeats", "2", "--fractions", "0,0.3",
                "--work-dir", work.string(), "--workers", std::to_string(k + 1), "--set", "preprocess.output_size=24",
                "--set", "train.max_epochs=3", "--set", "bootstrap.iterations=300"});
    std::ifstream in(work / "results.csv", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    (k == 0 ? first : second) = ss.str();
  }
  const bool ok = code == 0 && !first.empty() && first == second;
  return {ok, fmt::format("exit {}, results {} bytes, reruns {}", code, first.size(),
                          first == second ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"ROAR acceptance run"};
  app.add_option("--work-dir", o.work_dir, "Scratch directory");
  app.add_option("--patients", o.patients, "Synthetic patients for the planted-signal experiments");
  app.add_option("--epochs", o.epochs, "Maximum training epochs");
  app.add_option("--lr", o.lr, "Base learning rate");
  app.add_option("--bootstrap", o.bootstrap, "Bootstrap iterations for grid metrics");
  app.add_option("--workers", o.workers, "Concurrent grid cells");
  app.add_option("--only", o.only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(o.work_dir);
  std::ofstream log(o.work_dir / "acceptance.log");

  PlantedRuns runs;
  struct Criterion {
    int id;
    std::string name;
    double budget_s;  // 0 means no runtime bound
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      Criterion{1, "metric oracle equivalence", 10, metric_oracles},
      Criterion{2, "gradient correctness", 60, gradient_checks},
      Criterion{3, "mask geometry", 5, mask_geometry},
      Criterion{4, "planted-signal ROAR ordering", 0, [&] { return roar_ordering(o, runs, log); }},
      Criterion{5, "VCDR regression analogue", 0, [&] { return vcdr_regression(o, runs, log); }},
      Criterion{6, "saliency relocation", 0, [&] { return saliency_relocation(o, runs, log); }},
      Criterion{7, "patient aggregation and splitting", 0, aggregation_and_splits},
      Criterion{8, "bootstrap behaviour", 0, bootstrap_behaviour},
      Criterion{9, "end-to-end determinism", 0, [&] { return grid_determinism(o); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!o.only.empty() && std::find(o.only.begin(), o.only.end(), c.id) == o.only.end()) continue;
    log << fmt::format("criterion {}: {}\n", c.id, c.name);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = seconds_since(t0);
    if (c.budget_s > 0 && secs >= c.budget_s) {
      v.pass = false;
      v.detail += fmt::format("; over the {:.0f} s budget", c.budget_s);
    }
    const auto line = fmt::format("criterion {} [{}] {}: {} ({:.1f} s)", c.id, v.pass ? "PASS" : "FAIL", c.name,
                                  v.detail, secs);
    std::cout << line << std::endl;
    log << line << '\n';
    log.flush();
    if (!v.pass) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failed)) << std::endl;
  return failed == 0 ? 0 : 1;
}
