#pragma once

#include <memory>
#include <vector>

#include "roar/imaging.hpp"
#include "roar/network.hpp"
#include "roar/tensor.hpp"

namespace roar {

using ParamGrads = std::vector<std::vector<double>>;

/// Graph node. Shapes exclude the batch axis. Parameters are owned by the
/// Network; layers only remember their indices.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Shape output_shape() const = 0;
  virtual Tensor forward(const std::vector<Tensor>& params, const Tensor& x, LayerTape* tape) const = 0;
  /// `grads` may be null (input gradient only). Returns an empty tensor
  /// when `want_input_grad` is false.
  virtual Tensor backward(const std::vector<Tensor>& params, const LayerTape& tape,
                          const Tensor& grad_out, ParamGrads* grads, bool want_input_grad) const = 0;
};

/// Creates the layer for `spec` given the incoming shape, appending freshly
/// initialized parameters to `params`.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in_shape,
                                  std::vector<Tensor>& params, Rng& rng);

}  // namespace roar
