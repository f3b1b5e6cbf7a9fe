#include "otmap/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace otmap::nn {

namespace {

LinearLayer glorot_layer(std::size_t out, std::size_t in, Rng& rng) {
  LinearLayer l{Tensor({out, in}), Tensor({out})};
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = rng.uniform(-a, a);
  return l;
}

void add_bias_inplace(Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), c = a.cols();
  double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) pa[r * c + j] += pb[j];
}

void lrelu_inplace(Tensor& a) {
  double* __restrict pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = pa[i];
    pa[i] = v >= 0.0 ? v : v * kLreluSlope;
  }
}

Tensor concat_cols_values(const Tensor& x, const Tensor& z) {
  const std::size_t m = x.rows(), cx = x.cols(), cz = z.cols();
  Tensor out = Tensor::uninitialized({m, cx + cz});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < cx; ++j) out[r * (cx + cz) + j] = x[r * cx + j];
    for (std::size_t j = 0; j < cz; ++j) out[r * (cx + cz) + cx + j] = z[r * cz + j];
  }
  return out;
}

// shift used by the exact wirings; power of two so the add is lossless on
// coarse-mantissa inputs
constexpr double kRailShift = 1024.0;

}  // namespace

GeneratorNet init_generator(int d_in, int d_z, std::uint64_t seed) {
  if (d_in < 1 || d_z < 1)
    throw std::invalid_argument("init_generator: dimensions must be positive, got d_in=" +
                                std::to_string(d_in) + " d_z=" + std::to_string(d_z));
  Rng rng(seed);
  GeneratorNet g;
  g.d_in = d_in;
  g.d_z = d_z;
  g.layers[0] = glorot_layer(kHidden, static_cast<std::size_t>(d_in + d_z), rng);
  g.layers[1] = glorot_layer(kHidden, kHidden, rng);
  g.layers[2] = glorot_layer(static_cast<std::size_t>(d_in), kHidden, rng);
  return g;
}

CriticNet init_critic(int d_in, std::uint64_t seed) {
  if (d_in < 1)
    throw std::invalid_argument("init_critic: dimension must be positive, got " +
                                std::to_string(d_in));
  Rng rng(seed);
  CriticNet d;
  d.d_in = d_in;
  d.layers[0] = glorot_layer(kHidden, static_cast<std::size_t>(d_in), rng);
  d.layers[1] = glorot_layer(kHidden, kHidden, rng);
  d.layers[2] = glorot_layer(1, kHidden, rng);
  return d;
}

Tensor generator_apply(const GeneratorNet& g, const Tensor& x, const Tensor& z) {
  if (x.rows() != z.rows())
    throw std::invalid_argument("generator_apply: batch sizes differ, " + shape_str(x.shape()) +
                                " vs " + shape_str(z.shape()));
  if (x.cols() != static_cast<std::size_t>(g.d_in) || z.cols() != static_cast<std::size_t>(g.d_z))
    throw std::invalid_argument("generator_apply: input widths " + shape_str(x.shape()) + "/" +
                                shape_str(z.shape()) + " do not match d_in=" +
                                std::to_string(g.d_in) + " d_z=" + std::to_string(g.d_z));
  Tensor h = concat_cols_values(x, z);
  Tensor a1 = matmul(h, g.layers[0].weight, false, true);
  add_bias_inplace(a1, g.layers[0].bias);
  lrelu_inplace(a1);
  Tensor a2 = matmul(a1, g.layers[1].weight, false, true);
  add_bias_inplace(a2, g.layers[1].bias);
  lrelu_inplace(a2);
  Tensor out = matmul(a2, g.layers[2].weight, false, true);
  add_bias_inplace(out, g.layers[2].bias);
  return out;
}

Tensor critic_apply(const CriticNet& d, const Tensor& y) {
  if (y.cols() != static_cast<std::size_t>(d.d_in))
    throw std::invalid_argument("critic_apply: input width " + shape_str(y.shape()) +
                                " does not match d_in=" + std::to_string(d.d_in));
  Tensor a1 = matmul(y, d.layers[0].weight, false, true);
  add_bias_inplace(a1, d.layers[0].bias);
  lrelu_inplace(a1);
  Tensor a2 = matmul(a1, d.layers[1].weight, false, true);
  add_bias_inplace(a2, d.layers[1].bias);
  lrelu_inplace(a2);
  Tensor out = matmul(a2, d.layers[2].weight, false, true);
  add_bias_inplace(out, d.layers[2].bias);
  return out;
}

GeneratorNet identity_generator(int d_in, int d_z) {
  GeneratorNet g;
  g.d_in = d_in;
  g.d_z = d_z;
  g.layers[0] = {Tensor({kHidden, static_cast<std::size_t>(d_in + d_z)}), Tensor({kHidden})};
  g.layers[1] = {Tensor({kHidden, kHidden}), Tensor({kHidden})};
  g.layers[2] = {Tensor({static_cast<std::size_t>(d_in), kHidden}), Tensor({static_cast<std::size_t>(d_in)})};
  for (int i = 0; i < d_in; ++i) {
    g.layers[0].weight.at(i, i) = 1.0;
    g.layers[0].bias[i] = kRailShift;
    g.layers[1].weight.at(i, i) = 1.0;
    g.layers[2].weight.at(i, static_cast<std::size_t>(i)) = 1.0;
    g.layers[2].bias[i] = -kRailShift;
  }
  return g;
}

GeneratorNet z_passthrough_generator(int d_in, int d_z) {
  GeneratorNet g = identity_generator(d_in, d_z);
  for (int i = 0; i < d_in; ++i) g.layers[0].weight.at(i, i) = 0.0;
  for (int i = 0; i < d_in && i < d_z; ++i)
    g.layers[0].weight.at(i, static_cast<std::size_t>(d_in + i)) = 1.0;
  return g;
}

CriticNet linear_critic(std::span<const double> w) {
  const auto d_in = w.size();
  CriticNet d;
  d.d_in = static_cast<int>(d_in);
  d.layers[0] = {Tensor({kHidden, d_in}), Tensor({kHidden})};
  d.layers[1] = {Tensor({kHidden, kHidden}), Tensor({kHidden})};
  d.layers[2] = {Tensor({1, kHidden}), Tensor({1})};
  double wsum = 0.0;
  for (std::size_t i = 0; i < d_in; ++i) {
    d.layers[0].weight.at(i, i) = 1.0;
    d.layers[0].bias[i] = kRailShift;
    d.layers[1].weight.at(i, i) = 1.0;
    d.layers[2].weight.at(0, i) = w[i];
    wsum += w[i];
  }
  d.layers[2].bias[0] = -kRailShift * wsum;
  return d;
}

GeneratorParams GeneratorParams::make(const GeneratorNet& g, const std::string& prefix) {
  GeneratorParams p;
  p.d_in = g.d_in;
  p.d_z = g.d_z;
  const char* names[6] = {".w1", ".b1", ".w2", ".b2", ".w3", ".b3"};
  const Tensor* tensors[6] = {&g.layers[0].weight, &g.layers[0].bias, &g.layers[1].weight,
                              &g.layers[1].bias,   &g.layers[2].weight, &g.layers[2].bias};
  for (int i = 0; i < 6; ++i) {
    p.slots[i] = ad::make_slot(tensors[i]->shape(), prefix + names[i]);
    p.exprs[i] = ad::param(p.slots[i]);
  }
  return p;
}

void GeneratorParams::bind(ad::Bindings& b, const GeneratorNet& g) const {
  const Tensor* tensors[6] = {&g.layers[0].weight, &g.layers[0].bias, &g.layers[1].weight,
                              &g.layers[1].bias,   &g.layers[2].weight, &g.layers[2].bias};
  for (int i = 0; i < 6; ++i) b[slots[i].id] = tensors[i];
}

CriticParams CriticParams::make(const CriticNet& d, const std::string& prefix) {
  CriticParams p;
  p.d_in = d.d_in;
  const char* names[6] = {".w1", ".b1", ".w2", ".b2", ".w3", ".b3"};
  const Tensor* tensors[6] = {&d.layers[0].weight, &d.layers[0].bias, &d.layers[1].weight,
                              &d.layers[1].bias,   &d.layers[2].weight, &d.layers[2].bias};
  for (int i = 0; i < 6; ++i) {
    p.slots[i] = ad::make_slot(tensors[i]->shape(), prefix + names[i]);
    p.exprs[i] = ad::param(p.slots[i]);
  }
  return p;
}

void CriticParams::bind(ad::Bindings& b, const CriticNet& d) const {
  const Tensor* tensors[6] = {&d.layers[0].weight, &d.layers[0].bias, &d.layers[1].weight,
                              &d.layers[1].bias,   &d.layers[2].weight, &d.layers[2].bias};
  for (int i = 0; i < 6; ++i) b[slots[i].id] = tensors[i];
}

ad::Expr generator_forward(const GeneratorParams& g, ad::Expr x, ad::Expr z) {
  if (x.shape()[0] != z.shape()[0])
    throw std::invalid_argument("generator_forward: batch sizes differ, " + shape_str(x.shape()) +
                                " vs " + shape_str(z.shape()));
  ad::Expr h = ad::concat_cols(x, z);
  ad::Expr a1 = ad::leaky_relu(ad::add(ad::matmul(h, g.exprs[0], false, true), g.exprs[1]), kLreluSlope);
  ad::Expr a2 = ad::leaky_relu(ad::add(ad::matmul(a1, g.exprs[2], false, true), g.exprs[3]), kLreluSlope);
  return ad::add(ad::matmul(a2, g.exprs[4], false, true), g.exprs[5]);
}

ad::Expr critic_forward(const CriticParams& d, ad::Expr y) {
  if (y.shape()[1] != static_cast<std::size_t>(d.d_in))
    throw std::invalid_argument("critic_forward: input width " + shape_str(y.shape()) +
                                " does not match d_in=" + std::to_string(d.d_in));
  ad::Expr a1 = ad::leaky_relu(ad::add(ad::matmul(y, d.exprs[0], false, true), d.exprs[1]), kLreluSlope);
  ad::Expr a2 = ad::leaky_relu(ad::add(ad::matmul(a1, d.exprs[2], false, true), d.exprs[3]), kLreluSlope);
  return ad::add(ad::matmul(a2, d.exprs[4], false, true), d.exprs[5]);
}

std::vector<Tensor*> trainable(GeneratorNet& g) {
  return {&g.layers[0].weight, &g.layers[0].bias, &g.layers[1].weight,
          &g.layers[1].bias,   &g.layers[2].weight, &g.layers[2].bias};
}

std::vector<Tensor*> trainable(CriticNet& d) {
  return {&d.layers[0].weight, &d.layers[0].bias, &d.layers[1].weight,
          &d.layers[1].bias,   &d.layers[2].weight, &d.layers[2].bias};
}

AdamState AdamState::mirror(std::span<Tensor* const> params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(Tensor::zeros(p->shape()));
    s.v.emplace_back(Tensor::zeros(p->shape()));
  }
  return s;
}

void adam_step(AdamState& s, const AdamConfig& cfg, std::span<Tensor* const> params,
               std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != s.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params[i]))
      throw std::invalid_argument("adam_step: gradient " + std::to_string(i) + " has shape " +
                                  shape_str(grads[i].shape()) + ", parameter has " +
                                  shape_str(params[i]->shape()));
    if (!grads[i].all_finite())
      throw std::runtime_error("adam_step: non-finite gradient for parameter " +
                               std::to_string(i) + " at t=" + std::to_string(s.t + 1));
  }
  s.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = s.m[i];
    Tensor& v = s.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.alpha * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace otmap::nn
