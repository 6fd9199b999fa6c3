#pragma once

#include <cmath>
#include <variant>
#include <vector>

#include "binpick/rng.hpp"
#include "binpick/tensor.hpp"

namespace binpick {

// Layer kinds. Convolutions keep spatial size at stride 1 (zero pad 1);
// maxpool halves spatial dims; softmax normalizes along the last axis.
template <class S>
struct Conv3x3 {
  int stride = 1;
  int in_ch = 0;
  int out_ch = 0;
  Param<S> weight;  // (out_ch, in_ch, 3, 3)
  Param<S> bias;    // (out_ch)

  Conv3x3(std::string name, int stride_, int in, int out)
      : stride(stride_),
        in_ch(in),
        out_ch(out),
        weight(name + ".w", {out, in, 3, 3}),
        bias(name + ".b", {out}) {}
};

template <class S>
struct FullyConnected {
  int in = 0;
  int out = 0;
  Param<S> weight;  // (out, in)
  Param<S> bias;    // (out)

  FullyConnected(std::string name, int in_, int out_)
      : in(in_),
        out(out_),
        weight(name + ".w", {out_, in_}),
        bias(name + ".b", {out_}) {}
};

struct Relu {};
struct MaxPool2x2 {};
struct Softmax {};

template <class S>
using Layer = std::variant<Conv3x3<S>, FullyConnected<S>, Relu, MaxPool2x2, Softmax>;

namespace detail {

template <class S>
void im2col(const Tensor<S>& in, int stride, MatrixRM<S>& cols) {
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  cols.setZero(C * 9, Ho * Wo);
  const S* src = in.data();
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= W) continue;
            cols(row, oy * Wo + ox) = src[(c * H + iy) * W + ix];
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const MatrixRM<S>& cols, int stride, Tensor<S>& out) {
  const int C = out.dim(0), H = out.dim(1), W = out.dim(2);
  const int Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
  S* dst = out.data();
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= W) continue;
            dst[(c * H + iy) * W + ix] += cols(row, oy * Wo + ox);
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class S>
std::vector<int> layer_output_shape(const Layer<S>& layer,
                                    const std::vector<int>& in) {
  return std::visit(
      [&](const auto& l) -> std::vector<int> {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv3x3<S>>) {
          if (in.size() != 3 || in[0] != l.in_ch)
            throw ContractViolation(
                "conv3x3: expected shape (" + std::to_string(l.in_ch) +
                ",H,W), got " + Tensor<S>::shape_to_string(in));
          return {l.out_ch, (in[1] - 1) / l.stride + 1, (in[2] - 1) / l.stride + 1};
        } else if constexpr (std::is_same_v<L, FullyConnected<S>>) {
          if (Tensor<S>::count(in) != l.in)
            throw ContractViolation("fully-connected: expected " +
                                    std::to_string(l.in) + " inputs, got " +
                                    Tensor<S>::shape_to_string(in));
          return {l.out};
        } else if constexpr (std::is_same_v<L, MaxPool2x2>) {
          if (in.size() != 3)
            throw ContractViolation("maxpool2x2: expected rank-3 input, got " +
                                    Tensor<S>::shape_to_string(in));
          return {in[0], in[1] / 2, in[2] / 2};
        } else {
          if (in.empty())
            throw ContractViolation("elementwise layer on rank-0 tensor");
          return in;
        }
      },
      layer);
}

template <class S>
Tensor<S> layer_forward(const Layer<S>& layer, const Tensor<S>& input) {
  const std::vector<int> out_shape = layer_output_shape(layer, input.shape());
  Tensor<S> out(out_shape);

  if (const auto* conv = std::get_if<Conv3x3<S>>(&layer)) {
    MatrixRM<S> cols;
    detail::im2col(input, conv->stride, cols);
    const int Ho = out_shape[1], Wo = out_shape[2];
    auto wmat = conv->weight.value.matrix(conv->out_ch, conv->in_ch * 9);
    auto omat = out.matrix(conv->out_ch, Ho * Wo);
    omat.noalias() = wmat * cols;
    omat.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        conv->bias.value.data(), conv->out_ch);
  } else if (const auto* fc = std::get_if<FullyConnected<S>>(&layer)) {
    auto w = fc->weight.value.matrix(fc->out, fc->in);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> x(input.data(), fc->in);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> y(out.data(), fc->out);
    y.noalias() = w * x;
    y += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        fc->bias.value.data(), fc->out);
  } else if (std::holds_alternative<Relu>(layer)) {
    out.array() = input.array().max(S(0));
  } else if (std::holds_alternative<MaxPool2x2>(layer)) {
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int Ho = H / 2, Wo = W / 2;
    const S* src = input.data();
    S* dst = out.data();
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const int iy = oy * 2, ix = ox * 2;
          const S a = src[(c * H + iy) * W + ix];
          const S b = src[(c * H + iy) * W + ix + 1];
          const S d = src[(c * H + iy + 1) * W + ix];
          const S e = src[(c * H + iy + 1) * W + ix + 1];
          dst[(c * Ho + oy) * Wo + ox] = std::max(std::max(a, b), std::max(d, e));
        }
  } else {  // Softmax
    const int K = input.dim(input.rank() - 1);
    const std::int64_t rows = input.size() / K;
    for (std::int64_t r = 0; r < rows; ++r) {
      Eigen::Map<const ArrayX<S>> x(input.data() + r * K, K);
      Eigen::Map<ArrayX<S>> y(out.data() + r * K, K);
      const S mx = x.maxCoeff();
      y = (x - mx).exp();
      y /= y.sum();
    }
  }
  return out;
}

// Returns the input gradient; accumulates parameter gradients into
// Param.grad for parameterized layers.
template <class S>
Tensor<S> layer_backward(Layer<S>& layer, const Tensor<S>& input,
                         const Tensor<S>& upstream) {
  require_shape(layer_output_shape(layer, input.shape()), upstream.shape(),
                "layer_backward upstream");
  Tensor<S> din(input.shape());

  if (auto* conv = std::get_if<Conv3x3<S>>(&layer)) {
    MatrixRM<S> cols;
    detail::im2col(input, conv->stride, cols);
    const int Ho = (input.dim(1) - 1) / conv->stride + 1;
    const int Wo = (input.dim(2) - 1) / conv->stride + 1;
    auto dout = upstream.matrix(conv->out_ch, Ho * Wo);
    auto dw = conv->weight.grad.matrix(conv->out_ch, conv->in_ch * 9);
    dw.noalias() += dout * cols.transpose();
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> db(conv->bias.grad.data(),
                                                       conv->out_ch);
    db += dout.rowwise().sum();
    auto wmat = conv->weight.value.matrix(conv->out_ch, conv->in_ch * 9);
    MatrixRM<S> dcols = wmat.transpose() * dout;
    detail::col2im_add(dcols, conv->stride, din);
  } else if (auto* fc = std::get_if<FullyConnected<S>>(&layer)) {
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> x(input.data(), fc->in);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> dy(upstream.data(),
                                                             fc->out);
    auto dw = fc->weight.grad.matrix(fc->out, fc->in);
    dw.noalias() += dy * x.transpose();
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> db(fc->bias.grad.data(),
                                                       fc->out);
    db += dy;
    auto w = fc->weight.value.matrix(fc->out, fc->in);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dx(din.data(), fc->in);
    dx.noalias() = w.transpose() * dy;
  } else if (std::holds_alternative<Relu>(layer)) {
    din.array() = (input.array() > S(0)).select(upstream.array(), S(0));
  } else if (std::holds_alternative<MaxPool2x2>(layer)) {
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int Ho = H / 2, Wo = W / 2;
    const S* src = input.data();
    const S* up = upstream.data();
    S* dst = din.data();
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const int iy = oy * 2, ix = ox * 2;
          int best_y = iy, best_x = ix;
          S best = src[(c * H + iy) * W + ix];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const S v = src[(c * H + iy + dy) * W + ix + dx];
              if (v > best) {
                best = v;
                best_y = iy + dy;
                best_x = ix + dx;
              }
            }
          dst[(c * H + best_y) * W + best_x] += up[(c * Ho + oy) * Wo + ox];
        }
  } else {  // Softmax
    const Tensor<S> y = layer_forward(layer, input);
    const int K = input.dim(input.rank() - 1);
    const std::int64_t rows = input.size() / K;
    for (std::int64_t r = 0; r < rows; ++r) {
      Eigen::Map<const ArrayX<S>> yr(y.data() + r * K, K);
      Eigen::Map<const ArrayX<S>> gr(upstream.data() + r * K, K);
      Eigen::Map<ArrayX<S>> dr(din.data() + r * K, K);
      const S dot = (yr * gr).sum();
      dr = yr * (gr - dot);
    }
  }
  return din;
}

// Weight-copying precision cast; gradient/optimizer state is not carried over.
template <class To, class From>
Layer<To> cast_layer(const Layer<From>& layer) {
  return std::visit(
    [](const auto& l) -> Layer<To> {
      using L = std::decay_t<decltype(l)>;
      if constexpr (std::is_same_v<L, Conv3x3<From>>) {
        Conv3x3<To> c(l.weight.name.substr(0, l.weight.name.size() - 2),
                      l.stride, l.in_ch, l.out_ch);
        c.weight.value = l.weight.value.template cast<To>();
        c.bias.value = l.bias.value.template cast<To>();
        return c;
      } else if constexpr (std::is_same_v<L, FullyConnected<From>>) {
        FullyConnected<To> f(l.weight.name.substr(0, l.weight.name.size() - 2),
                             l.in, l.out);
        f.weight.value = l.weight.value.template cast<To>();
        f.bias.value = l.bias.value.template cast<To>();
        return f;
      } else {
        return l;
      }
    },
    layer);
}

template <class S>
void collect_params(Layer<S>& layer, std::vector<Param<S>*>& out) {
  if (auto* conv = std::get_if<Conv3x3<S>>(&layer)) {
    out.push_back(&conv->weight);
    out.push_back(&conv->bias);
  } else if (auto* fc = std::get_if<FullyConnected<S>>(&layer)) {
    out.push_back(&fc->weight);
    out.push_back(&fc->bias);
  }
}

// Uniform +-sqrt(6/(fan_in+fan_out)) weight init, zero bias.
template <class S>
void glorot_init(Layer<S>& layer, Rng& rng) {
  auto fill = [&](Param<S>& p, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::int64_t i = 0; i < p.value.size(); ++i)
      p.value[i] = static_cast<S>(rng.uniform(-bound, bound));
  };
  if (auto* conv = std::get_if<Conv3x3<S>>(&layer))
    fill(conv->weight, conv->in_ch * 9.0, conv->out_ch * 9.0);
  else if (auto* fc = std::get_if<FullyConnected<S>>(&layer))
    fill(fc->weight, fc->in, fc->out);
}

// Fixed layer stack with cached activations for backprop.
template <class S>
struct Sequential {
  std::vector<Layer<S>> layers;

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> cur = x;
    for (const auto& l : layers) cur = layer_forward(l, cur);
    return cur;
  }

  // acts[0] is the input, acts[i+1] the output of layer i.
  std::vector<Tensor<S>> forward_cached(const Tensor<S>& x) const {
    std::vector<Tensor<S>> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(x);
    for (const auto& l : layers) acts.push_back(layer_forward(l, acts.back()));
    return acts;
  }

  Tensor<S> backward(const std::vector<Tensor<S>>& acts, const Tensor<S>& upstream) {
    Tensor<S> g = upstream;
    for (std::size_t i = layers.size(); i-- > 0;)
      g = layer_backward(layers[i], acts[i], g);
    return g;
  }

  void collect(std::vector<Param<S>*>& out) {
    for (auto& l : layers) collect_params(l, out);
  }

  void init(Rng rng) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Rng lr = rng.derive(i + 1);
      glorot_init(layers[i], lr);
    }
  }
};

}  // namespace binpick
