#pragma once

#include <span>
#include <vector>

#include "otmap/losses.hpp"
#include "otmap/tensor.hpp"

namespace otmap::oracle {

// n x m transport plan with its marginals; row sums equal a, column sums
// equal b within 1e-9, total mass 1.
struct DiscreteCoupling {
  std::size_t n = 0, m = 0;
  std::vector<double> pi;  // row-major n x m
  std::vector<double> a, b;

  double mass(std::size_t i, std::size_t j) const { return pi[i * m + j]; }
  double max_marginal_violation() const;
};

struct OtResult {
  double cost = 0.0;
  DiscreteCoupling plan;
  // LP duals (alpha_i + beta_j <= c_ij, equality wherever the plan carries
  // mass); populated by the general-marginal path as an optimality
  // certificate
  std::vector<double> dual_a, dual_b;
};

// Pairwise cost matrix c(x_i, y_j) between two point clouds {n,d} and {m,d}.
Tensor cost_matrix(loss::CostKind kind, const Tensor& x, const Tensor& y);

// Exact discrete optimal transport. Uniform equal-size marginals reduce to an
// optimal assignment (shortest-augmenting-path with potentials); general
// marginals run min-cost flow by successive shortest paths on the dense
// bipartite graph. Both maintain dual feasibility, so the result carries an
// optimality certificate.
OtResult exact_ot(std::span<const double> a, std::span<const double> b, const Tensor& cost);

// Cost of the independent (product) coupling a x b: sum a_i b_j C_ij.
double independent_coupling_cost(std::span<const double> a, std::span<const double> b,
                                 const Tensor& cost);

// Optimal assignment on a square cost matrix; returns minimal total cost and
// the column assigned to each row. Exposed for tests and the uniform path.
double solve_assignment(const Tensor& cost, std::vector<int>& row_to_col);

// Energy distance between two empirical clouds {n,d}, {m,d}:
// 2 E||p-q|| - E||p-p'|| - E||q-q'|| with all-pairs (V-statistic) estimators,
// so identical clouds score exactly zero and the value is always >= 0.
double energy_distance(const Tensor& p, const Tensor& q);

}  // namespace otmap::oracle
