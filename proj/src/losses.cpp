#include "otmap/losses.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace otmap::loss {

CostKind cost_kind_from_name(const std::string& name) {
  if (name == "sqeuclidean" || name == "squared_euclidean") return CostKind::squared_euclidean;
  if (name == "euclidean") return CostKind::euclidean;
  throw std::invalid_argument("unknown cost kind '" + name + "'");
}

std::string cost_kind_name(CostKind kind) {
  return kind == CostKind::squared_euclidean ? "sqeuclidean" : "euclidean";
}

double point_cost(CostKind kind, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("point_cost: dimensions differ, " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return kind == CostKind::squared_euclidean ? acc : std::sqrt(acc);
}

CostBuilder cost_builder(CostKind kind) {
  if (kind == CostKind::squared_euclidean)
    return [](ad::Expr x, ad::Expr y) { return ad::sum_axis1(ad::square(ad::sub(x, y))); };
  return [](ad::Expr x, ad::Expr y) { return ad::l2_norm_rows(ad::sub(x, y)); };
}

namespace {
std::mutex g_registry_mutex;
std::map<std::string, CostBuilder>& registry() {
  static std::map<std::string, CostBuilder> r{
      {"sqeuclidean", cost_builder(CostKind::squared_euclidean)},
      {"euclidean", cost_builder(CostKind::euclidean)},
  };
  return r;
}
}  // namespace

void register_cost(const std::string& name, CostBuilder builder) {
  std::lock_guard lock(g_registry_mutex);
  registry()[name] = std::move(builder);
}

CostBuilder cost_builder(const std::string& name) {
  std::lock_guard lock(g_registry_mutex);
  auto it = registry().find(name);
  if (it == registry().end()) throw std::invalid_argument("unknown cost '" + name + "'");
  return it->second;
}

void validate_nonnegative(const LossWeights& w) {
  for (double v : {w.gan_xy, w.gan_yx, w.gp_xy, w.gp_yx, w.cycle_mu, w.cycle_nu})
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be nonnegative");
}

ad::Expr transport_cost(const CostBuilder& cost, ad::Expr x, ad::Expr y) {
  if (x.shape()[0] != y.shape()[0])
    throw std::invalid_argument("transport_cost: batch sizes differ, " + shape_str(x.shape()) +
                                " vs " + shape_str(y.shape()));
  return ad::mean_all(cost(x, y));
}

WganTerms wgan_terms(const nn::CriticParams& d, ad::Expr real, ad::Expr fake) {
  if (real.shape()[1] != fake.shape()[1])
    throw std::invalid_argument("wgan_terms: widths differ, " + shape_str(real.shape()) + " vs " +
                                shape_str(fake.shape()));
  ad::Expr mean_fake = ad::mean_all(nn::critic_forward(d, fake));
  ad::Expr mean_real = ad::mean_all(nn::critic_forward(d, real));
  return {ad::sub(mean_fake, mean_real), ad::scale(mean_fake, -1.0)};
}

ad::Expr gradient_penalty(const nn::CriticParams& d, ad::Expr real, ad::Expr fake,
                          const Tensor& eps) {
  const Shape& sr = real.shape();
  if (sr != fake.shape())
    throw std::invalid_argument("gradient_penalty: batch shapes differ, " + shape_str(sr) +
                                " vs " + shape_str(fake.shape()));
  const std::size_t m = sr[0];
  if (eps.shape() != Shape{m})
    throw std::invalid_argument("gradient_penalty: eps shape " + shape_str(eps.shape()) +
                                ", expected [" + std::to_string(m) + "]");
  Tensor one_minus({m});
  for (std::size_t i = 0; i < m; ++i) {
    if (!(eps[i] >= 0.0 && eps[i] <= 1.0))
      throw std::invalid_argument("gradient_penalty: eps[" + std::to_string(i) +
                                  "]=" + std::to_string(eps[i]) + " outside [0,1]");
    one_minus[i] = 1.0 - eps[i];
  }
  ad::Expr tilde = ad::add(ad::mul(real, ad::constant(eps)),
                           ad::mul(fake, ad::constant(std::move(one_minus))));
  ad::Expr score_sum = ad::sum_all(nn::critic_forward(d, tilde));
  const ad::Expr wrt[] = {tilde};
  ad::Expr input_grad = ad::grad(score_sum, wrt)[0];
  ad::Expr norms = ad::l2_norm_rows(input_grad);
  return ad::mean_all(ad::square(ad::sub(norms, ad::constant(Tensor::full({m}, 1.0)))));
}

ad::Expr cycle_loss(const nn::GeneratorParams& fwd, const nn::GeneratorParams& bwd,
                    ad::Expr samples, ad::Expr z_fwd, ad::Expr z_bwd) {
  ad::Expr back = nn::generator_forward(bwd, samples, z_bwd);
  ad::Expr recon = nn::generator_forward(fwd, back, z_fwd);
  return ad::mean_all(ad::l2_norm_rows(ad::sub(recon, samples)));
}

}  // namespace otmap::loss
