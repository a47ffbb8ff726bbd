#include "roar/network.hpp"

#include <cmath>

#include <fmt/format.h>

#include "layers.hpp"
#include "roar/error.hpp"

namespace roar {

std::string to_string(HeadKind head) {
  return head == HeadKind::LinearRegression ? "linear_regression" : "sigmoid_binary";
}

HeadKind parse_head_kind(const std::string& text) {
  if (text == "linear_regression" || text == "regression") return HeadKind::LinearRegression;
  if (text == "sigmoid_binary" || text == "classification") return HeadKind::SigmoidBinary;
  throw InvalidArgument(fmt::format("unknown head '{}'", text));
}

GraphSpec NetworkConfig::to_graph() const {
  if (input_size < 1) throw InvalidArgument("network: input_size must be >= 1");
  if (residual_blocks < 1) throw InvalidArgument("network: at least one residual block is required");
  GraphSpec g;
  g.in_channels = 3;
  g.in_height = input_size;
  g.in_width = input_size;
  g.head = head;
  for (const auto& stage : stages) {
    g.layers.push_back(LayerSpec::conv(stage.out_channels, stage.kernel, stage.stride));
    g.layers.push_back(LayerSpec::relu());
  }
  for (int i = 0; i < residual_blocks; ++i) {
    g.layers.push_back(LayerSpec::residual(3));
    g.layers.push_back(LayerSpec::relu());
  }
  g.layers.push_back(LayerSpec::global_avg_pool());
  g.layers.push_back(LayerSpec::dense(1));
  return g;
}

Network::Network(const GraphSpec& graph, std::uint64_t seed) : graph_(graph) { build(seed); }

Network::Network(const NetworkConfig& config, std::uint64_t seed) : graph_(config.to_graph()) { build(seed); }

Network::Network(const Network& other) : graph_(other.graph_) {
  build(0);
  params_ = other.params_;
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

void Network::build(std::uint64_t seed) {
  if (graph_.in_channels < 1 || graph_.in_height < 1 || graph_.in_width < 1) {
    throw InvalidArgument("network: input extents must be >= 1");
  }
  Rng rng(seed);
  layers_.clear();
  params_.clear();
  Shape shape{static_cast<std::size_t>(graph_.in_channels), static_cast<std::size_t>(graph_.in_height),
              static_cast<std::size_t>(graph_.in_width)};
  for (const auto& spec : graph_.layers) {
    layers_.push_back(make_layer(spec, shape, params_, rng));
    shape = layers_.back()->output_shape();
  }
  if (shape != Shape{1}) {
    throw ShapeError(fmt::format("network must end in exactly one output unit, got {}", shape_string(shape)));
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Network::check_input(const Tensor& batch) const {
  const Shape expected{static_cast<std::size_t>(graph_.in_channels), static_cast<std::size_t>(graph_.in_height),
                       static_cast<std::size_t>(graph_.in_width)};
  if (batch.rank() != 4 || batch.dim(0) == 0 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected) {
    throw ShapeError(fmt::format("network expects Nx{} input, got {}", shape_string(expected),
                                 shape_string(batch.shape())));
  }
}

Tensor Network::run_forward(const Tensor& batch, Tape* tape) const {
  check_input(batch);
  if (tape) {
    tape->layers.assign(layers_.size(), LayerTape{});
    tape->input_shape = batch.shape();
    tape->valid = true;
  }
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(params_, x, tape ? &tape->layers[i] : nullptr);
  }
  return x;
}

Tensor Network::run_backward(const Tape& tape, const Tensor& grad_logits, ParamGrads* param_grads,
                             bool want_input_grad) const {
  if (!tape.valid) throw ContractViolation("backward called without a preceding forward pass");
  if (grad_logits.rank() != 2 || grad_logits.dim(0) != tape.input_shape[0] || grad_logits.dim(1) != 1) {
    throw ShapeError(fmt::format("backward: gradient shape {} does not match batch of {}",
                                 shape_string(grad_logits.shape()), tape.input_shape[0]));
  }
  Tensor g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_dx = i > 0 || want_input_grad;
    g = layers_[i]->backward(params_, tape.layers[i], g, param_grads, need_dx);
  }
  return g;
}

Tensor Network::forward_logits(const Tensor& batch) const { return run_forward(batch, nullptr); }

Tensor Network::forward(const Tensor& batch) const {
  Tensor out = run_forward(batch, nullptr);
  if (graph_.head == HeadKind::SigmoidBinary) {
    for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  }
  return out;
}

Tensor Network::forward_train(const Tensor& batch) { return run_forward(batch, &tape_); }

Tensor Network::backward(const Tensor& grad_logits, bool want_input_grad) {
  ParamGrads grads(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto g = params_[i].grad();
    grads[i].assign(g.begin(), g.end());
  }
  Tensor dx = run_backward(tape_, grad_logits, &grads, want_input_grad);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    std::copy(grads[i].begin(), grads[i].end(), g.begin());
  }
  tape_ = Tape{};
  return dx;
}

Tensor Network::input_gradient(const Tensor& batch) const {
  Tape tape;
  const Tensor logits = run_forward(batch, &tape);
  return run_backward(tape, Tensor({logits.dim(0), 1}, 1.0), nullptr, true);
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace roar
