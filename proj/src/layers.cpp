#include "layers.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

Eigen::Index as_index(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Fan-in scaled uniform initialization.
Tensor init_weights(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::size_t add_param(std::vector<Tensor>& params, Tensor t) {
  params.push_back(std::move(t));
  return params.size() - 1;
}

void accumulate(ParamGrads* grads, std::size_t index, const double* src, std::size_t n) {
  auto& g = (*grads)[index];
  for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
}

class Conv2d final : public Layer {
 public:
  Conv2d(const Shape& in, int out_channels, int kernel, int stride, std::vector<Tensor>& params, Rng& rng)
      : in_c_(in.at(0)), in_h_(in.at(1)), in_w_(in.at(2)), out_c_(out_channels), k_(kernel),
        stride_(stride), pad_((kernel - 1) / 2) {
    if (out_channels < 1 || kernel < 1 || stride < 1) {
      throw InvalidArgument("conv: channels, kernel and stride must be >= 1");
    }
    if (in_h_ + 2 * pad_ < k_ || in_w_ + 2 * pad_ < k_) {
      throw ShapeError(fmt::format("conv: kernel {} larger than padded input {}", k_, shape_string(in)));
    }
    out_h_ = (in_h_ + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (in_w_ + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t fan_in = in_c_ * k_ * k_;
    weight_ = add_param(params, init_weights({out_c_, in_c_, k_, k_}, fan_in, rng));
    bias_ = add_param(params, Tensor({out_c_}));
  }

  Shape output_shape() const override { return {out_c_, out_h_, out_w_}; }

  Tensor forward(const std::vector<Tensor>& params, const Tensor& x, LayerTape* tape) const override {
    const std::size_t n = x.dim(0);
    const std::size_t kdim = in_c_ * k_ * k_;
    const std::size_t pdim = out_h_ * out_w_;
    Tensor out({n, out_c_, out_h_, out_w_});
    ConstMapMat w(params[weight_].data(), as_index(out_c_), as_index(kdim));
    ConstMapVec b(params[bias_].data(), as_index(out_c_));
    Tensor scratch;
    if (tape) {
      tape->saved.clear();
      tape->saved.emplace_back(Shape{n, kdim, pdim});
    } else {
      scratch = Tensor({kdim, pdim});
    }
    for (std::size_t s = 0; s < n; ++s) {
      double* col = tape ? tape->saved[0].data() + s * kdim * pdim : scratch.data();
      im2col(x.data() + s * in_c_ * in_h_ * in_w_, col);
      ConstMapMat cols(col, as_index(kdim), as_index(pdim));
      MapMat o(out.data() + s * out_c_ * pdim, as_index(out_c_), as_index(pdim));
      o.noalias() = w * cols;
      o.colwise() += b;
    }
    return out;
  }

  Tensor backward(const std::vector<Tensor>& params, const LayerTape& tape, const Tensor& grad_out,
                  ParamGrads* grads, bool want_input_grad) const override {
    const std::size_t n = grad_out.dim(0);
    const std::size_t kdim = in_c_ * k_ * k_;
    const std::size_t pdim = out_h_ * out_w_;
    ConstMapMat w(params[weight_].data(), as_index(out_c_), as_index(kdim));
    RowMat dw = RowMat::Zero(as_index(out_c_), as_index(kdim));
    Eigen::VectorXd db = Eigen::VectorXd::Zero(as_index(out_c_));
    Tensor dx;
    RowMat dcol;
    if (want_input_grad) {
      dx = Tensor({n, in_c_, in_h_, in_w_});
      dcol.resize(as_index(kdim), as_index(pdim));
    }
    for (std::size_t s = 0; s < n; ++s) {
      ConstMapMat go(grad_out.data() + s * out_c_ * pdim, as_index(out_c_), as_index(pdim));
      if (grads) {
        ConstMapMat cols(tape.saved[0].data() + s * kdim * pdim, as_index(kdim), as_index(pdim));
        dw.noalias() += go * cols.transpose();
        db += go.rowwise().sum();
      }
      if (want_input_grad) {
        dcol.noalias() = w.transpose() * go;
        col2im(dcol.data(), dx.data() + s * in_c_ * in_h_ * in_w_);
      }
    }
    if (grads) {
      accumulate(grads, weight_, dw.data(), out_c_ * kdim);
      accumulate(grads, bias_, db.data(), out_c_);
    }
    return dx;
  }

 private:
  // Rows ordered (channel, ky, kx); columns (oy, ox). Zero padding.
  void im2col(const double* img, double* col) const {
    const std::size_t pdim = out_h_ * out_w_;
    for (std::size_t c = 0; c < in_c_; ++c) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          double* row = col + ((c * k_ + ky) * k_ + kx) * pdim;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(in_h_) && ix < static_cast<long>(in_w_);
              row[oy * out_w_ + ox] = inside ? img[(c * in_h_ + iy) * in_w_ + ix] : 0.0;
            }
          }
        }
      }
    }
  }

  void col2im(const double* col, double* img) const {
    const std::size_t pdim = out_h_ * out_w_;
    for (std::size_t c = 0; c < in_c_; ++c) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const double* row = col + ((c * k_ + ky) * k_ + kx) * pdim;
          for (std::size_t oy = 0; oy < out_h_; ++oy) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            if (iy < 0 || iy >= static_cast<long>(in_h_)) continue;
            for (std::size_t ox = 0; ox < out_w_; ++ox) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              if (ix < 0 || ix >= static_cast<long>(in_w_)) continue;
              img[(c * in_h_ + iy) * in_w_ + ix] += row[oy * out_w_ + ox];
            }
          }
        }
      }
    }
  }

  std::size_t in_c_, in_h_, in_w_;
  std::size_t out_c_, k_, stride_, pad_;
  std::size_t out_h_ = 0, out_w_ = 0;
  std::size_t weight_ = 0, bias_ = 0;
};

class Relu final : public Layer {
 public:
  explicit Relu(const Shape& in) : shape_(in) {}

  Shape output_shape() const override { return shape_; }

  Tensor forward(const std::vector<Tensor>&, const Tensor& x, LayerTape* tape) const override {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    if (tape) {
      tape->saved.clear();
      tape->saved.push_back(out);
    }
    return out;
  }

  Tensor backward(const std::vector<Tensor>&, const LayerTape& tape, const Tensor& grad_out, ParamGrads*,
                  bool want_input_grad) const override {
    if (!want_input_grad) return {};
    Tensor dx = grad_out;
    const auto y = tape.saved[0].values();
    auto g = dx.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(y[i] > 0.0)) g[i] = 0.0;
    }
    return dx;
  }

 private:
  Shape shape_;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(const Shape& in) : c_(in.at(0)), h_(in.at(1)), w_(in.at(2)), hw_(h_ * w_) {}

  Shape output_shape() const override { return {c_}; }

  Tensor forward(const std::vector<Tensor>&, const Tensor& x, LayerTape*) const override {
    const std::size_t n = x.dim(0);
    Tensor out({n, c_});
    for (std::size_t i = 0; i < n * c_; ++i) {
      const double* src = x.data() + i * hw_;
      double acc = 0.0;
      for (std::size_t j = 0; j < hw_; ++j) acc += src[j];
      out[i] = acc / static_cast<double>(hw_);
    }
    return out;
  }

  Tensor backward(const std::vector<Tensor>&, const LayerTape&, const Tensor& grad_out, ParamGrads*,
                  bool want_input_grad) const override {
    if (!want_input_grad) return {};
    const std::size_t n = grad_out.dim(0);
    Tensor dx({n, c_, h_, w_});
    for (std::size_t i = 0; i < n * c_; ++i) {
      const double g = grad_out[i] / static_cast<double>(hw_);
      double* dst = dx.data() + i * hw_;
      for (std::size_t j = 0; j < hw_; ++j) dst[j] = g;
    }
    return dx;
  }

 private:
  std::size_t c_, h_, w_, hw_;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(const Shape& in) : in_(in) {}

  Shape output_shape() const override { return {shape_size(in_)}; }

  Tensor forward(const std::vector<Tensor>&, const Tensor& x, LayerTape*) const override {
    return x.reshaped({x.dim(0), shape_size(in_)});
  }

  Tensor backward(const std::vector<Tensor>&, const LayerTape&, const Tensor& grad_out, ParamGrads*,
                  bool want_input_grad) const override {
    if (!want_input_grad) return {};
    Shape s{grad_out.dim(0)};
    s.insert(s.end(), in_.begin(), in_.end());
    return grad_out.reshaped(s);
  }

 private:
  Shape in_;
};

class Dense final : public Layer {
 public:
  Dense(const Shape& in, int out_features, std::vector<Tensor>& params, Rng& rng)
      : in_(in.at(0)), out_(static_cast<std::size_t>(out_features)) {
    if (in.size() != 1) throw ShapeError("dense: input must be flat (use flatten or pooling first)");
    if (out_features < 1) throw InvalidArgument("dense: out_features must be >= 1");
    weight_ = add_param(params, init_weights({out_, in_}, in_, rng));
    bias_ = add_param(params, Tensor({out_}));
  }

  Shape output_shape() const override { return {out_}; }

  Tensor forward(const std::vector<Tensor>& params, const Tensor& x, LayerTape* tape) const override {
    const std::size_t n = x.dim(0);
    Tensor out({n, out_});
    ConstMapMat xs(x.data(), as_index(n), as_index(in_));
    ConstMapMat w(params[weight_].data(), as_index(out_), as_index(in_));
    ConstMapVec b(params[bias_].data(), as_index(out_));
    MapMat y(out.data(), as_index(n), as_index(out_));
    y.noalias() = xs * w.transpose();
    y.rowwise() += b.transpose();
    if (tape) {
      tape->saved.clear();
      tape->saved.push_back(x);
    }
    return out;
  }

  Tensor backward(const std::vector<Tensor>& params, const LayerTape& tape, const Tensor& grad_out,
                  ParamGrads* grads, bool want_input_grad) const override {
    const std::size_t n = grad_out.dim(0);
    ConstMapMat gy(grad_out.data(), as_index(n), as_index(out_));
    if (grads) {
      ConstMapMat xs(tape.saved[0].data(), as_index(n), as_index(in_));
      const RowMat dw = gy.transpose() * xs;
      const Eigen::VectorXd db = gy.colwise().sum().transpose();
      accumulate(grads, weight_, dw.data(), out_ * in_);
      accumulate(grads, bias_, db.data(), out_);
    }
    if (!want_input_grad) return {};
    ConstMapMat w(params[weight_].data(), as_index(out_), as_index(in_));
    Tensor dx({n, in_});
    MapMat d(dx.data(), as_index(n), as_index(in_));
    d.noalias() = gy * w;
    return dx;
  }

 private:
  std::size_t in_, out_;
  std::size_t weight_ = 0, bias_ = 0;
};

/// y = x + conv2(relu(conv1(x))), both convolutions stride 1, same width.
class Residual final : public Layer {
 public:
  Residual(const Shape& in, int kernel, std::vector<Tensor>& params, Rng& rng)
      : shape_(in),
        conv1_(in, static_cast<int>(in.at(0)), kernel, 1, params, rng),
        relu_(conv1_.output_shape()),
        conv2_(conv1_.output_shape(), static_cast<int>(in.at(0)), kernel, 1, params, rng) {
    if (kernel % 2 == 0) throw InvalidArgument("residual: kernel must be odd to preserve shape");
  }

  Shape output_shape() const override { return shape_; }

  Tensor forward(const std::vector<Tensor>& params, const Tensor& x, LayerTape* tape) const override {
    LayerTape* t1 = nullptr;
    LayerTape* t2 = nullptr;
    LayerTape* t3 = nullptr;
    if (tape) {
      tape->children.assign(3, LayerTape{});
      t1 = &tape->children[0];
      t2 = &tape->children[1];
      t3 = &tape->children[2];
    }
    Tensor h = conv1_.forward(params, x, t1);
    h = relu_.forward(params, h, t2);
    Tensor out = conv2_.forward(params, h, t3);
    auto o = out.values();
    const auto xv = x.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += xv[i];
    return out;
  }

  Tensor backward(const std::vector<Tensor>& params, const LayerTape& tape, const Tensor& grad_out,
                  ParamGrads* grads, bool want_input_grad) const override {
    Tensor g = conv2_.backward(params, tape.children[2], grad_out, grads, true);
    g = relu_.backward(params, tape.children[1], g, grads, true);
    Tensor dx = conv1_.backward(params, tape.children[0], g, grads, want_input_grad);
    if (!want_input_grad) return {};
    auto d = dx.values();
    const auto go = grad_out.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
    return dx;
  }

 private:
  Shape shape_;
  Conv2d conv1_;
  Relu relu_;
  Conv2d conv2_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in_shape, std::vector<Tensor>& params,
                                  Rng& rng) {
  const auto need_spatial = [&](const char* what) {
    if (in_shape.size() != 3) {
      throw ShapeError(fmt::format("{}: expects a CxHxW input, got {}", what, shape_string(in_shape)));
    }
  };
  switch (spec.kind) {
    case LayerKind::Conv:
      need_spatial("conv");
      return std::make_unique<Conv2d>(in_shape, spec.out, spec.kernel, spec.stride, params, rng);
    case LayerKind::Relu:
      return std::make_unique<Relu>(in_shape);
    case LayerKind::Residual:
      need_spatial("residual");
      return std::make_unique<Residual>(in_shape, spec.kernel, params, rng);
    case LayerKind::GlobalAvgPool:
      need_spatial("global_avg_pool");
      return std::make_unique<GlobalAvgPool>(in_shape);
    case LayerKind::Flatten:
      return std::make_unique<Flatten>(in_shape);
    case LayerKind::Dense:
      return std::make_unique<Dense>(in_shape, spec.out, params, rng);
  }
  throw InvalidArgument("unknown layer kind");
}

}  // namespace roar
