#pragma once

#include <functional>
#include <span>
#include <string>

#include "otmap/graph.hpp"
#include "otmap/nn.hpp"
#include "otmap/tensor.hpp"

namespace otmap::loss {

enum class CostKind { squared_euclidean, euclidean };

CostKind cost_kind_from_name(const std::string& name);
std::string cost_kind_name(CostKind kind);

// Ground cost between two points; the non-graph route used for oracle cost
// matrices.
double point_cost(CostKind kind, std::span<const double> x, std::span<const double> y);

// Builds the per-row cost vector {m} from two {m,d} batches.
using CostBuilder = std::function<ad::Expr(ad::Expr x, ad::Expr y)>;

CostBuilder cost_builder(CostKind kind);
// Named registry; the two built-in kinds are pre-registered and user costs
// may be added under fresh names.
void register_cost(const std::string& name, CostBuilder builder);
CostBuilder cost_builder(const std::string& name);

// Coefficients of the solver objectives. Mode consistency (which weights a
// given solver variant forces to zero) is enforced by the solver config.
struct LossWeights {
  double gan_xy = 1.0;
  double gan_yx = 1.0;
  double gp_xy = 0.1;
  double gp_yx = 0.1;
  double cycle_mu = 1.0;
  double cycle_nu = 1.0;
};

void validate_nonnegative(const LossWeights& w);

// mean over the batch of cost(x_i, y_i)
ad::Expr transport_cost(const CostBuilder& cost, ad::Expr x, ad::Expr y);

struct WganTerms {
  ad::Expr critic;     // mean D(fake) - mean D(real), minimized by the critic
  ad::Expr generator;  // -mean D(fake)
};

WganTerms wgan_terms(const nn::CriticParams& d, ad::Expr real, ad::Expr fake);

// mean over the batch of (||grad_y D(y~_i)||_2 - 1)^2 at per-sample
// interpolates y~_i = eps_i real_i + (1-eps_i) fake_i. The returned node is
// differentiable with respect to the critic parameters.
ad::Expr gradient_penalty(const nn::CriticParams& d, ad::Expr real, ad::Expr fake,
                          const Tensor& eps);

// mean over the batch of ||fwd(bwd(sample, z_bwd), z_fwd) - sample||_2,
// reusing the given noise on the return pass
ad::Expr cycle_loss(const nn::GeneratorParams& fwd, const nn::GeneratorParams& bwd,
                    ad::Expr samples, ad::Expr z_fwd, ad::Expr z_bwd);

}  // namespace otmap::loss
