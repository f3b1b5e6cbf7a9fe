#include "otmap/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace otmap::oracle {

namespace {

constexpr double kMarginalTol = 1e-9;

void validate_marginals(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("exact_ot: empty marginals");
  double sa = 0.0, sb = 0.0;
  for (double v : a) {
    if (!(v >= 0.0)) throw std::invalid_argument("exact_ot: negative source mass");
    sa += v;
  }
  for (double v : b) {
    if (!(v >= 0.0)) throw std::invalid_argument("exact_ot: negative target mass");
    sb += v;
  }
  if (std::abs(sa - sb) > kMarginalTol)
    throw std::invalid_argument("exact_ot: marginal sums differ by " + std::to_string(sa - sb));
}

void validate_cost(const Tensor& c, std::size_t n, std::size_t m) {
  if (c.rank() != 2 || c.rows() != n || c.cols() != m)
    throw std::invalid_argument("exact_ot: cost matrix shape " + shape_str(c.shape()) +
                                " does not match marginals " + std::to_string(n) + "x" +
                                std::to_string(m));
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!std::isfinite(c[i]) || c[i] < 0.0)
      throw std::invalid_argument("exact_ot: cost matrix must be finite and nonnegative");
}

bool is_uniform_square(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  const double w = 1.0 / static_cast<double>(a.size());
  for (double v : a)
    if (std::abs(v - w) > 1e-15) return false;
  for (double v : b)
    if (std::abs(v - w) > 1e-15) return false;
  return true;
}

// Min-cost flow on the dense bipartite graph by successive shortest paths
// with node potentials. Reduced costs c_ij + pot_src[i] - pot_snk[j] stay
// nonnegative throughout and flow only runs on tight arcs, which certifies
// optimality at termination (duals: alpha_i = -pot_src[i], beta_j =
// pot_snk[j]).
OtResult solve_general(std::span<const double> a, std::span<const double> b, const Tensor& c) {
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> supply(a.begin(), a.end());
  std::vector<double> demand(b.begin(), b.end());
  std::vector<double> pot_src(n, 0.0), pot_snk(m, 0.0);
  std::vector<double> flow(n * m, 0.0);

  double total_mass = 0.0;
  for (double s : supply) total_mass += s;
  {
    double db = 0.0;
    for (double d : demand) db += d;
    total_mass = std::min(total_mass, db);  // marginal sums may differ by <= 1e-9
  }
  const double snap = total_mass * 1e-15;  // clears subtraction dust

  std::vector<double> dist_s(n), dist_t(m);
  std::vector<int> pred_t(m), pred_s(n);
  std::vector<char> done_s(n), done_t(m);

  double routed = 0.0;
  const std::size_t max_rounds = 50 * (n + m) + 64;
  std::size_t rounds = 0;
  while (total_mass - routed > snap) {
    if (++rounds > max_rounds)
      throw std::runtime_error("exact_ot: augmentation did not converge");
    std::fill(dist_s.begin(), dist_s.end(), inf);
    std::fill(dist_t.begin(), dist_t.end(), inf);
    std::fill(pred_t.begin(), pred_t.end(), -1);
    std::fill(pred_s.begin(), pred_s.end(), -1);
    std::fill(done_s.begin(), done_s.end(), 0);
    std::fill(done_t.begin(), done_t.end(), 0);
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > 0.0) dist_s[i] = 0.0;

    int reached = -1;
    while (reached < 0) {
      double best = inf;
      int side = -1, idx = -1;
      for (std::size_t i = 0; i < n; ++i)
        if (!done_s[i] && dist_s[i] < best) best = dist_s[i], side = 0, idx = static_cast<int>(i);
      for (std::size_t j = 0; j < m; ++j)
        if (!done_t[j] && dist_t[j] < best) best = dist_t[j], side = 1, idx = static_cast<int>(j);
      if (idx < 0) break;
      if (side == 0) {
        const auto i = static_cast<std::size_t>(idx);
        done_s[i] = 1;
        const double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          if (done_t[j]) continue;
          const double nd = dist_s[i] + (ci[j] + pot_src[i] - pot_snk[j]);
          if (nd < dist_t[j]) {
            dist_t[j] = nd;
            pred_t[j] = static_cast<int>(i);
          }
        }
      } else {
        const auto j = static_cast<std::size_t>(idx);
        done_t[j] = 1;
        if (demand[j] > 0.0) {
          reached = idx;
          break;
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (done_s[i] || flow[i * m + j] <= 0.0) continue;
          const double nd = dist_t[j] + (pot_snk[j] - pot_src[i] - c[i * m + j]);
          if (nd < dist_s[i]) {
            dist_s[i] = nd;
            pred_s[i] = static_cast<int>(j);
          }
        }
      }
    }
    if (reached < 0)
      throw std::runtime_error("exact_ot: no augmenting path; marginals are infeasible");

    // pot += min(dist, d*) keeps every reduced cost nonnegative and makes the
    // augmenting path tight
    const double d_star = dist_t[static_cast<std::size_t>(reached)];
    for (std::size_t i = 0; i < n; ++i) pot_src[i] += std::min(dist_s[i], d_star);
    for (std::size_t j = 0; j < m; ++j) pot_snk[j] += std::min(dist_t[j], d_star);

    // bottleneck along the alternating path back to an origin source
    double push = demand[static_cast<std::size_t>(reached)];
    for (int j = reached;;) {
      const int i = pred_t[static_cast<std::size_t>(j)];
      const int pj = pred_s[static_cast<std::size_t>(i)];
      if (pj < 0) {
        push = std::min(push, supply[static_cast<std::size_t>(i)]);
        break;
      }
      push = std::min(push, flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(pj)]);
      j = pj;
    }
    demand[static_cast<std::size_t>(reached)] -= push;
    for (int j = reached;;) {
      const int i = pred_t[static_cast<std::size_t>(j)];
      flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(j)] += push;
      const int pj = pred_s[static_cast<std::size_t>(i)];
      if (pj < 0) {
        supply[static_cast<std::size_t>(i)] -= push;
        break;
      }
      double& f = flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(pj)];
      f -= push;
      if (f < snap) f = 0.0;
      j = pj;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] < snap) supply[i] = 0.0;
    if (demand[static_cast<std::size_t>(reached)] < snap)
      demand[static_cast<std::size_t>(reached)] = 0.0;
    routed += push;
  }

  OtResult res;
  res.plan.n = n;
  res.plan.m = m;
  res.plan.pi = std::move(flow);
  res.plan.a.assign(a.begin(), a.end());
  res.plan.b.assign(b.begin(), b.end());
  res.dual_a.resize(n);
  res.dual_b.resize(m);
  for (std::size_t i = 0; i < n; ++i) res.dual_a[i] = -pot_src[i];
  for (std::size_t j = 0; j < m; ++j) res.dual_b[j] = pot_snk[j];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) total += res.plan.pi[i * m + j] * c[i * m + j];
  res.cost = total;
  return res;
}

}  // namespace

double DiscreteCoupling::max_marginal_violation() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += pi[i * m + j];
    worst = std::max(worst, std::abs(s - a[i]));
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += pi[i * m + j];
    worst = std::max(worst, std::abs(s - b[j]));
  }
  return worst;
}

Tensor cost_matrix(loss::CostKind kind, const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
    throw std::invalid_argument("cost_matrix: clouds must be rank-2 with equal dimension, got " +
                                shape_str(x.shape()) + " and " + shape_str(y.shape()));
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  Tensor c({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      c[i * m + j] = loss::point_cost(kind, {x.data() + i * d, d}, {y.data() + j * d, d});
  return c;
}

double solve_assignment(const Tensor& cost, std::vector<int>& row_to_col) {
  if (cost.rank() != 2 || cost.rows() != cost.cols())
    throw std::invalid_argument("solve_assignment: matrix must be square, got " +
                                shape_str(cost.shape()));
  const std::size_t n = cost.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();

  // shortest augmenting paths with potentials, one row at a time;
  // 1-based helper arrays, column 0 is the virtual root
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = static_cast<int>(i);
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const auto i0 = static_cast<std::size_t>(p[j0]);
      double delta = inf;
      std::size_t j1 = 0;
      const double* row = cost.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = static_cast<int>(j0);
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[static_cast<std::size_t>(p[j])] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const auto j1 = static_cast<std::size_t>(way[j0]);
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  row_to_col.assign(n, -1);
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    row_to_col[static_cast<std::size_t>(p[j]) - 1] = static_cast<int>(j) - 1;
    total += cost[(static_cast<std::size_t>(p[j]) - 1) * n + (j - 1)];
  }
  return total;
}

OtResult exact_ot(std::span<const double> a, std::span<const double> b, const Tensor& cost) {
  validate_marginals(a, b);
  validate_cost(cost, a.size(), b.size());

  if (is_uniform_square(a, b)) {
    const std::size_t n = a.size();
    std::vector<int> row_to_col;
    const double total = solve_assignment(cost, row_to_col);
    OtResult res;
    res.plan.n = n;
    res.plan.m = n;
    res.plan.pi.assign(n * n, 0.0);
    res.plan.a.assign(a.begin(), a.end());
    res.plan.b.assign(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i)
      res.plan.pi[i * n + static_cast<std::size_t>(row_to_col[i])] = a[i];
    res.cost = total / static_cast<double>(n);
    return res;
  }
  return solve_general(a, b, cost);
}

double independent_coupling_cost(std::span<const double> a, std::span<const double> b,
                                 const Tensor& cost) {
  validate_marginals(a, b);
  validate_cost(cost, a.size(), b.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) row += b[j] * cost[i * b.size() + j];
    total += a[i] * row;
  }
  return total;
}

double energy_distance(const Tensor& p, const Tensor& q) {
  if (p.rank() != 2 || q.rank() != 2 || p.cols() != q.cols())
    throw std::invalid_argument("energy_distance: clouds must be rank-2 with equal dimension");
  const std::size_t n = p.rows(), m = q.rows(), d = p.cols();
  if (n == 0 || m == 0) throw std::invalid_argument("energy_distance: empty cloud");
  auto pair_dist = [d](const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = x[k] - y[k];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cross += pair_dist(p.data() + i * d, q.data() + j * d);
  double within_p = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) within_p += pair_dist(p.data() + i * d, p.data() + j * d);
  double within_q = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) within_q += pair_dist(q.data() + i * d, q.data() + j * d);
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return 2.0 * cross / (nn * mm) - within_p / (nn * nn) - within_q / (mm * mm);
}

}  // namespace otmap::oracle
