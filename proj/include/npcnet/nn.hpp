#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "npcnet/autodiff.hpp"
#include "npcnet/rng.hpp"
#include "npcnet/tensor.hpp"

namespace npcnet {

enum class Activation { Tanh, Relu };

inline const char* activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation: " + s);
}

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Zero-mean uniform init scaled by 1/sqrt(fan_in).
inline Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-bound, bound);
  return t;
}

struct LinearLayer {
  Var weight;  // in x out
  Var bias;    // 1 x out
};

// Plain MLP: hidden layers use the configured activation, the output layer
// is linear. Layer outputs are checked for finiteness; a blow-up reports
// the offending layer.
struct Mlp {
  std::vector<LinearLayer> layers;
  Activation activation = Activation::Tanh;
  std::string tag;

  Var forward(const Var& x) const {
    Var h = x;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      h = add_row(matmul(h, layers[li].weight), layers[li].bias);
      if (li + 1 < layers.size()) {
        h = activation == Activation::Tanh ? vtanh(h) : vrelu(h);
      }
      if (!h.value().all_finite()) {
        throw NumericError(tag + ": non-finite activation at layer " +
                           std::to_string(li));
      }
    }
    return h;
  }

  std::vector<Var> parameters() const {
    std::vector<Var> out;
    for (const auto& l : layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }

  std::size_t input_dim() const { return layers.front().weight.value().rows(); }
  std::size_t output_dim() const { return layers.back().weight.value().cols(); }
};

inline Mlp make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                    std::size_t output_dim, Activation act, Rng& rng,
                    const std::string& tag) {
  Mlp mlp;
  mlp.activation = act;
  mlp.tag = tag;
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::string base = tag + ".layer" + std::to_string(i);
    LinearLayer layer;
    // Init bound uses fan-in: weight is in x out, so scale by 1/sqrt(in).
    Tensor w = Tensor::matrix(dims[i], dims[i + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (std::size_t j = 0; j < w.size(); ++j) w.at(j) = rng.uniform(-bound, bound);
    layer.weight = make_parameter(std::move(w), base + ".W");
    layer.bias = make_parameter(Tensor::matrix(1, dims[i + 1]), base + ".b");
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

// Stochastic gradient descent with optional momentum and global-norm
// gradient clipping. step() consumes and zeroes the accumulated gradients.
class Sgd {
 public:
  Sgd(std::vector<Var> params, double lr, double momentum = 0.0,
      double clip_norm = 0.0)
      : params_(std::move(params)), lr_(lr), momentum_(momentum),
        clip_norm_(clip_norm) {
    velocity_.reserve(params_.size());
    for (const Var& p : params_) velocity_.emplace_back(p.value().shape());
  }

  void step() {
    double scale = 1.0;
    if (clip_norm_ > 0.0) {
      double total = 0.0;
      for (const Var& p : params_) total += p.grad().squared_norm();
      total = std::sqrt(total);
      if (total > clip_norm_) scale = clip_norm_ / total;
    }
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Tensor& value = params_[pi].value();
      Tensor& grad = params_[pi].grad();
      Tensor& vel = velocity_[pi];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad.at(i) * scale;
        vel.at(i) = momentum_ * vel.at(i) + g;
        value.at(i) -= lr_ * vel.at(i);
      }
    }
    zero_grad();
  }

  void zero_grad() {
    for (Var& p : params_) p.zero_grad();
  }

  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
  double clip_norm_;
};

}  // namespace npcnet
