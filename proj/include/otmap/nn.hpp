#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "otmap/graph.hpp"
#include "otmap/rng.hpp"
#include "otmap/tensor.hpp"

namespace otmap::nn {

inline constexpr std::size_t kHidden = 1024;
inline constexpr double kLreluSlope = 0.2;

struct LinearLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
};

// 3-layer MLP mapping (x, z) -> y: concat -> 1024 -> 1024 -> d_in,
// LeakyReLU after the first two layers, no output activation.
struct GeneratorNet {
  int d_in = 0;
  int d_z = 0;
  std::array<LinearLayer, 3> layers;
};

// 3-layer MLP mapping y -> scalar score: d_in -> 1024 -> 1024 -> 1.
struct CriticNet {
  int d_in = 0;
  std::array<LinearLayer, 3> layers;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
// reproducible per seed.
GeneratorNet init_generator(int d_in, int d_z, std::uint64_t seed);
CriticNet init_critic(int d_in, std::uint64_t seed);

// Straight-line numeric forwards used for detached sampling and evaluation;
// bit-identical to evaluating the corresponding graph.
Tensor generator_apply(const GeneratorNet& g, const Tensor& x, const Tensor& z);
Tensor critic_apply(const CriticNet& d, const Tensor& y);

// Special wirings. identity_generator returns x exactly (z is ignored) by
// routing activations through a +1024 bias shift so LeakyReLU stays in its
// linear region; exact whenever |x| < 1024 and x carries no mantissa bits
// below 2^-42. z_passthrough_generator returns z the same way.
GeneratorNet identity_generator(int d_in, int d_z);
GeneratorNet z_passthrough_generator(int d_in, int d_z);
// linear_critic computes w . y exactly via the same shift trick.
CriticNet linear_critic(std::span<const double> w);

// Parameter expressions with stable slots, created once per training state;
// per-step graphs are rebuilt over them.
struct GeneratorParams {
  int d_in = 0, d_z = 0;
  std::array<ad::ParamSlot, 6> slots;  // w1,b1,w2,b2,w3,b3
  std::array<ad::Expr, 6> exprs;
  static GeneratorParams make(const GeneratorNet& g, const std::string& prefix);
  void bind(ad::Bindings& b, const GeneratorNet& g) const;
  std::vector<ad::Expr> wrt() const { return {exprs.begin(), exprs.end()}; }
};

struct CriticParams {
  int d_in = 0;
  std::array<ad::ParamSlot, 6> slots;
  std::array<ad::Expr, 6> exprs;
  static CriticParams make(const CriticNet& d, const std::string& prefix);
  void bind(ad::Bindings& b, const CriticNet& d) const;
  std::vector<ad::Expr> wrt() const { return {exprs.begin(), exprs.end()}; }
};

ad::Expr generator_forward(const GeneratorParams& g, ad::Expr x, ad::Expr z);
ad::Expr critic_forward(const CriticParams& d, ad::Expr y);

std::vector<Tensor*> trainable(GeneratorNet& g);
std::vector<Tensor*> trainable(CriticNet& d);

struct AdamConfig {
  double alpha = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  long t = 0;
  static AdamState mirror(std::span<Tensor* const> params);
};

// Standard Adam with bias correction; throws on non-finite gradients.
void adam_step(AdamState& s, const AdamConfig& cfg, std::span<Tensor* const> params,
               std::span<const Tensor> grads);

}  // namespace otmap::nn
