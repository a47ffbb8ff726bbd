#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roar/tensor.hpp"

namespace roar {

enum class HeadKind { LinearRegression, SigmoidBinary };

std::string to_string(HeadKind head);
HeadKind parse_head_kind(const std::string& text);

enum class LayerKind { Conv, Relu, Residual, GlobalAvgPool, Flatten, Dense };

/// One node of a sequential graph. `out` is the channel count for Conv and
/// the feature count for Dense; Residual keeps the incoming channel count.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int out = 0;
  int kernel = 1;
  int stride = 1;

  static LayerSpec conv(int out_channels, int kernel, int stride) {
    return {LayerKind::Conv, out_channels, kernel, stride};
  }
  static LayerSpec relu() { return {LayerKind::Relu}; }
  static LayerSpec residual(int kernel = 3) { return {LayerKind::Residual, 0, kernel, 1}; }
  static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(int out_features) { return {LayerKind::Dense, out_features}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Fully explicit sequential graph over a C x H x W input.
struct GraphSpec {
  int in_channels = 3;
  int in_height = 64;
  int in_width = 64;
  std::vector<LayerSpec> layers;
  HeadKind head = HeadKind::LinearRegression;

  bool operator==(const GraphSpec&) const = default;
};

struct ConvStage {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;

  bool operator==(const ConvStage&) const = default;
};

/// Residual convnet: conv stages (each followed by ReLU), residual blocks at
/// the final width, global average pooling, one output unit.
struct NetworkConfig {
  int input_size = 64;
  std::vector<ConvStage> stages{{8, 3, 2}, {16, 3, 2}, {16, 3, 2}};
  int residual_blocks = 1;
  HeadKind head = HeadKind::SigmoidBinary;

  GraphSpec to_graph() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Per-layer saved activations for the backward pass.
struct LayerTape {
  std::vector<Tensor> saved;
  std::vector<LayerTape> children;
};

struct Tape {
  bool valid = false;
  Shape input_shape;
  std::vector<LayerTape> layers;
};

class Layer;

/// Sequential differentiable network. Parameters live in one flat list;
/// forward passes without a tape are read-only and safe to share.
class Network {
 public:
  Network(const GraphSpec& graph, std::uint64_t seed);
  Network(const NetworkConfig& config, std::uint64_t seed);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();

  const GraphSpec& graph() const { return graph_; }
  HeadKind head() const { return graph_.head; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Head outputs: identity for regression, sigmoid for classification.
  Tensor forward(const Tensor& batch) const;
  /// Pre-activation output, N x 1.
  Tensor forward_logits(const Tensor& batch) const;

  /// Forward pass that records the tape consumed by the next backward().
  Tensor forward_train(const Tensor& batch);
  /// Accumulates parameter gradients from the gradient of the loss with
  /// respect to the logits and returns the gradient with respect to the
  /// input batch. Throws ContractViolation without a preceding forward_train.
  Tensor backward(const Tensor& grad_logits, bool want_input_grad = false);

  /// d(sum of logits)/d(input) without touching parameter gradients.
  Tensor input_gradient(const Tensor& batch) const;

  void zero_grad();

 private:
  void build(std::uint64_t seed);
  void check_input(const Tensor& batch) const;
  Tensor run_forward(const Tensor& batch, Tape* tape) const;
  Tensor run_backward(const Tape& tape, const Tensor& grad_logits,
                      std::vector<std::vector<double>>* param_grads, bool want_input_grad) const;

  GraphSpec graph_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Tensor> params_;
  Tape tape_;
};

}  // namespace roar
