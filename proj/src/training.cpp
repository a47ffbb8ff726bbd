#include "roar/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

LossValue mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw InvalidArgument("mse_loss: empty batch");
  if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
  const double n = static_cast<double>(pred.size());
  LossValue out{0.0, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.value += d * d;
    out.grad[i] = 2.0 * d / n;
  }
  out.value /= n;
  return out;
}

LossValue bce_loss(std::span<const double> prob, std::span<const double> label) {
  if (prob.empty()) throw InvalidArgument("bce_loss: empty batch");
  if (prob.size() != label.size()) throw ShapeError("bce_loss: length mismatch");
  const double n = static_cast<double>(prob.size());
  LossValue out{0.0, std::vector<double>(prob.size())};
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double y = label[i];
    if (y != 0.0 && y != 1.0) throw InvalidArgument(fmt::format("bce_loss: label {} not in {{0,1}}", y));
    const double p = std::clamp(prob[i], kBceEpsilon, 1.0 - kBceEpsilon);
    out.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (prob[i] > kBceEpsilon && prob[i] < 1.0 - kBceEpsilon) {
      out.grad[i] = (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
  }
  out.value /= n;
  return out;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].values();
    const auto grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor, double min_lr)
    : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr) {
  if (!(lr > 0.0)) throw InvalidArgument("plateau schedule: learning rate must be positive");
  if (patience < 1) throw InvalidArgument("plateau schedule: patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw InvalidArgument("plateau schedule: factor must lie in (0,1)");
}

double PlateauScheduler::step(double val_loss) {
  if (!has_best_ || val_loss < best_) {
    best_ = val_loss;
    has_best_ = true;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    wait_ = 0;
  }
  return lr_;
}

void PlateauScheduler::restore(const State& s) {
  lr_ = s.lr;
  best_ = s.best;
  has_best_ = s.has_best;
  wait_ = s.wait;
}

double plateau_schedule(std::span<const double> val_history, double base_lr, int patience, double factor,
                        double min_lr) {
  if (val_history.empty()) throw InvalidArgument("plateau_schedule: empty history");
  PlateauScheduler sched(base_lr, patience, factor, min_lr);
  for (double v : val_history) sched.step(v);
  return sched.lr();
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw InvalidArgument("train: base_lr must be positive");
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("train: max_epochs must be >= 1");
  if (plateau_patience < 1) throw InvalidArgument("train: plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw InvalidArgument("train: plateau_factor must lie in (0,1)");
  if (early_stop_patience < 0) throw InvalidArgument("train: early_stop_patience must be >= 0");
  for (const auto& a : augmentations) {
    if (!(a.probability >= 0.0 && a.probability <= 1.0)) {
      throw InvalidArgument("train: augmentation probability outside [0,1]");
    }
  }
}

Tensor to_batch(std::span<const RasterImage* const> images) {
  if (images.empty()) throw InvalidArgument("to_batch: no images");
  const int w = images.front()->width();
  const int h = images.front()->height();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  Tensor batch({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const RasterImage& img = *images[n];
    if (img.width() != w || img.height() != h) throw ShapeError("to_batch: images differ in size");
    const auto src = img.data();
    double* dst = batch.data() + n * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = src[3 * p];
      dst[plane + p] = src[3 * p + 1];
      dst[2 * plane + p] = src[3 * p + 2];
    }
  }
  return batch;
}

Tensor to_batch(std::span<const RasterImage> images) {
  std::vector<const RasterImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(std::span<const RasterImage* const>(ptrs));
}

namespace {

std::vector<std::vector<double>> copy_params(const Network& net) {
  std::vector<std::vector<double>> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

void assign_params(Network& net, const std::vector<std::vector<double>>& values) {
  auto& params = net.parameters();
  if (values.size() != params.size()) throw ShapeError("parameter list does not match the graph");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i].size()) throw ShapeError("parameter tensor size does not match the graph");
    std::copy(values[i].begin(), values[i].end(), params[i].values().begin());
  }
}

LossValue task_loss(HeadKind head, std::span<const double> out, std::span<const double> target) {
  return head == HeadKind::SigmoidBinary ? bce_loss(out, target) : mse_loss(out, target);
}

}  // namespace

double evaluate_loss(const Network& net, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw InvalidArgument("evaluate_loss: empty dataset");
  const auto pred = predict(net, data.images, batch_size);
  return task_loss(net.head(), pred, data.targets).value;
}

std::vector<double> predict(const Network& net, std::span<const RasterImage> images, int batch_size) {
  std::vector<double> out;
  out.reserve(images.size());
  const std::size_t step = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < images.size(); start += step) {
    const std::size_t end = std::min(images.size(), start + step);
    const Tensor y = net.forward(to_batch(images.subspan(start, end - start)));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

Trainer::Trainer(Network net, TrainConfig cfg)
    : net_(std::move(net)),
      cfg_(std::move(cfg)),
      scheduler_(cfg_.base_lr, cfg_.plateau_patience, cfg_.plateau_factor, cfg_.min_lr),
      rng_(cfg_.seed) {
  cfg_.validate();
}

Trainer::Trainer(const Checkpoint& ckpt, TrainConfig cfg)
    : net_(network_from_checkpoint(ckpt, false)),
      cfg_(std::move(cfg)),
      adam_(ckpt.adam),
      scheduler_(cfg_.base_lr, cfg_.plateau_patience, cfg_.plateau_factor, cfg_.min_lr),
      epoch_(ckpt.epoch),
      best_params_(ckpt.best_params),
      best_val_(ckpt.best_val_loss),
      best_epoch_(ckpt.best_epoch),
      since_best_(ckpt.epochs_since_best),
      history_(ckpt.history) {
  cfg_.validate();
  scheduler_.restore(ckpt.scheduler);
  std::istringstream in(ckpt.rng_state);
  in >> rng_;
  if (!in) throw IoError("checkpoint: corrupt rng state");
}

double Trainer::train_batch(const Dataset& train, std::span<const std::size_t> indices) {
  std::vector<RasterImage> augmented;
  std::vector<const RasterImage*> inputs;
  std::vector<double> targets;
  inputs.reserve(indices.size());
  if (!cfg_.augmentations.empty()) augmented.reserve(indices.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t idx : indices) {
    targets.push_back(train.targets[idx]);
    if (cfg_.augmentations.empty()) {
      inputs.push_back(&train.images[idx]);
      continue;
    }
    RasterImage img = train.images[idx];
    for (const auto& opt : cfg_.augmentations) {
      if (unit(rng_) >= opt.probability) continue;
      AugmentSpec spec = opt.spec;
      if (opt.randomize_magnitude) {
        if (spec.kind == AugmentKind::Brightness) {
          const double d = std::abs(spec.brightness_delta);
          spec.brightness_delta = std::uniform_real_distribution<double>(-d, d)(rng_);
        } else if (spec.kind == AugmentKind::Cutout && spec.cutout_side > 1) {
          spec.cutout_side = std::uniform_int_distribution<int>(1, spec.cutout_side)(rng_);
        }
      }
      img = augment(img, spec, rng_);
    }
    augmented.push_back(std::move(img));
    inputs.push_back(&augmented.back());
  }

  const Tensor batch = to_batch(std::span<const RasterImage* const>(inputs));
  net_.zero_grad();
  const Tensor logits = net_.forward_train(batch);
  const std::size_t n = indices.size();
  Tensor grad({n, 1});
  double loss = 0.0;
  if (net_.head() == HeadKind::SigmoidBinary) {
    std::vector<double> prob(n);
    for (std::size_t i = 0; i < n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    loss = bce_loss(prob, targets).value;
    // Sigmoid and cross-entropy combined: d loss / d logit = (p - y) / n.
    for (std::size_t i = 0; i < n; ++i) grad[i] = (prob[i] - targets[i]) / static_cast<double>(n);
  } else {
    const auto l = mse_loss(logits.values(), targets);
    loss = l.value;
    std::copy(l.grad.begin(), l.grad.end(), grad.values().begin());
  }
  if (!std::isfinite(loss)) throw TrainingDiverged(fmt::format("non-finite training loss at epoch {}", epoch_ + 1));
  net_.backward(grad);
  adam_step(net_.parameters(), adam_, scheduler_.lr(), cfg_.adam);
  return loss;
}

EpochRecord Trainer::run_epoch(const Dataset& train, const Dataset& val) {
  if (train.size() == 0 || val.size() == 0) throw InvalidArgument("fit: empty train or validation split");
  if (train.targets.size() != train.size() || val.targets.size() != val.size()) {
    throw ShapeError("fit: targets do not match images");
  }
  EpochRecord rec;
  rec.epoch = epoch_ + 1;
  rec.lr = scheduler_.lr();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    total += train_batch(train, idx) * static_cast<double>(idx.size());
  }
  rec.train_loss = total / static_cast<double>(order.size());
  rec.val_loss = evaluate_loss(net_, val);
  if (!std::isfinite(rec.val_loss)) {
    throw TrainingDiverged(fmt::format("non-finite validation loss at epoch {}", rec.epoch));
  }

  ++epoch_;
  if (best_epoch_ < 0 || rec.val_loss < best_val_) {
    best_val_ = rec.val_loss;
    best_epoch_ = rec.epoch;
    best_params_ = copy_params(net_);
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  scheduler_.step(rec.val_loss);
  history_.push_back(rec);
  return rec;
}

bool Trainer::should_stop() const {
  if (epoch_ >= cfg_.max_epochs) return true;
  return cfg_.early_stop_patience > 0 && since_best_ >= cfg_.early_stop_patience;
}

Network Trainer::best_network() const {
  Network out = net_;
  if (!best_params_.empty()) assign_params(out, best_params_);
  return out;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.graph = net_.graph();
  c.params = copy_params(net_);
  c.adam = adam_;
  c.scheduler = scheduler_.state();
  c.epoch = epoch_;
  std::ostringstream rng_text;
  rng_text << rng_;
  c.rng_state = rng_text.str();
  c.best_params = best_params_;
  c.best_val_loss = best_val_;
  c.best_epoch = best_epoch_;
  c.epochs_since_best = since_best_;
  c.history = history_;
  return c;
}

Network network_from_checkpoint(const Checkpoint& ckpt, bool use_best) {
  Network net(ckpt.graph, 0);
  assign_params(net, use_best && !ckpt.best_params.empty() ? ckpt.best_params : ckpt.params);
  return net;
}

FitResult fit(Network net, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  if (train.size() == 0 || val.size() == 0) throw InvalidArgument("fit: empty train or validation split");
  Trainer trainer(std::move(net), cfg);
  while (!trainer.should_stop()) trainer.run_epoch(train, val);
  FitResult result{trainer.best_network(), trainer.history(), trainer.best_epoch(), trainer.best_val_loss(),
                   trainer.checkpoint()};
  return result;
}

}  // namespace roar
