#include "otmap/propositions.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace otmap::props {

GroundMetric GroundMetric::discrete(std::size_t n) {
  GroundMetric g;
  g.size = n;
  g.d.assign(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) g.d[i * n + i] = 0.0;
  return g;
}

void validate(const DiscreteDist& d, double tol) {
  double s = 0.0;
  for (double v : d.p) {
    if (!(v >= 0.0)) throw std::invalid_argument("distribution has negative mass");
    s += v;
  }
  if (std::abs(s - 1.0) > tol)
    throw std::invalid_argument("distribution mass " + std::to_string(s) + " != 1");
}

void validate(const StochasticMapTable& t, double tol) {
  if (t.t.size() != t.rows * t.cols) throw std::invalid_argument("table storage mismatch");
  for (std::size_t i = 0; i < t.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) {
      if (!(t.at(i, j) >= 0.0)) throw std::invalid_argument("table has negative entry");
      s += t.at(i, j);
    }
    if (std::abs(s - 1.0) > tol)
      throw std::invalid_argument("table row " + std::to_string(i) + " sums to " +
                                  std::to_string(s));
  }
}

DiscreteDist pushforward(const StochasticMapTable& t, const DiscreteDist& d) {
  if (d.size() != t.rows)
    throw std::invalid_argument("pushforward: distribution size " + std::to_string(d.size()) +
                                " != table rows " + std::to_string(t.rows));
  DiscreteDist out;
  out.p.assign(t.cols, 0.0);
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j) out.p[j] += d.p[i] * t.at(i, j);
  return out;
}

double discrete_cycle_loss(const StochasticMapTable& g_ba, const StochasticMapTable& g_ab,
                           const DiscreteDist& d, const GroundMetric& ground) {
  if (d.size() != g_ba.rows || g_ba.cols != g_ab.rows || g_ab.cols != ground.size ||
      ground.size != d.size())
    throw std::invalid_argument("discrete_cycle_loss: dimension mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < g_ba.rows; ++j) {
    if (d.p[j] == 0.0) continue;
    double inner = 0.0;
    for (std::size_t i = 0; i < g_ba.cols; ++i) {
      if (g_ba.at(j, i) == 0.0) continue;
      double ret = 0.0;
      for (std::size_t k = 0; k < g_ab.cols; ++k) ret += g_ab.at(i, k) * ground.at(k, j);
      inner += g_ba.at(j, i) * ret;
    }
    loss += d.p[j] * inner;
  }
  return loss;
}

bool is_deterministic(const StochasticMapTable& t, double tol) {
  for (std::size_t i = 0; i < t.rows; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) best = std::max(best, t.at(i, j));
    if (best < 1.0 - tol) return false;
  }
  return true;
}

namespace {

bool rows_deterministic_on_support(const StochasticMapTable& t, const DiscreteDist& support,
                                   double tol, std::size_t* bad_row) {
  for (std::size_t i = 0; i < t.rows; ++i) {
    if (support.p[i] <= tol) continue;
    double best = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) best = std::max(best, t.at(i, j));
    if (best < 1.0 - tol) {
      *bad_row = i;
      return false;
    }
  }
  return true;
}

// collision probability of two rows under independent draws
double row_collision(const StochasticMapTable& t, std::size_t r1, std::size_t r2) {
  double acc = 0.0;
  for (std::size_t j = 0; j < t.cols; ++j) acc += t.at(r1, j) * t.at(r2, j);
  return acc;
}

bool pushforward_matches(const StochasticMapTable& t, const DiscreteDist& from,
                         const DiscreteDist& to, double tol) {
  DiscreteDist pf = pushforward(t, from);
  for (std::size_t j = 0; j < pf.size(); ++j)
    if (std::abs(pf.p[j] - to.p[j]) > tol) return false;
  return true;
}

// within tol of a permutation matrix restricted to the support
bool near_permutation(const StochasticMapTable& t, const DiscreteDist& support, double tol,
                      std::vector<int>& image) {
  image.assign(t.rows, -1);
  std::vector<char> used(t.cols, 0);
  for (std::size_t i = 0; i < t.rows; ++i) {
    if (support.p[i] <= tol) continue;
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < t.cols; ++j)
      if (t.at(i, j) > best) best = t.at(i, j), arg = j;
    if (best < 1.0 - tol) return false;
    if (used[arg]) return false;  // two rows share an image atom
    used[arg] = 1;
    image[i] = static_cast<int>(arg);
  }
  return true;
}

}  // namespace

PropReport verify_prop1(const StochasticMapTable& g_xy, const StochasticMapTable& g_yx,
                        const DiscreteDist& mu, const DiscreteDist& nu,
                        const GroundMetric& ground_y, double tol) {
  validate(mu);
  validate(nu);
  validate(g_xy);
  validate(g_yx);
  PropReport rep;
  if (!pushforward_matches(g_yx, nu, mu, tol)) {
    rep.detail = "premise fails: g_yx does not push nu to mu";
    return rep;
  }
  const double cyc = discrete_cycle_loss(g_yx, g_xy, nu, ground_y);
  if (cyc > tol) {
    rep.detail = "premise fails: cycle loss " + std::to_string(cyc);
    return rep;
  }
  rep.premises_hold = true;
  rep.conclusions_hold = true;
  std::size_t bad_row = 0;
  if (!rows_deterministic_on_support(g_xy, mu, tol, &bad_row)) {
    rep.conclusions_hold = false;
    rep.detail = "conclusion 1 fails: g_xy row " + std::to_string(bad_row) + " is split";
    return rep;
  }
  for (std::size_t j1 = 0; j1 < g_yx.rows; ++j1) {
    if (nu.p[j1] <= tol) continue;
    for (std::size_t j2 = j1 + 1; j2 < g_yx.rows; ++j2) {
      if (nu.p[j2] <= tol) continue;
      const double collision = row_collision(g_yx, j1, j2);
      if (collision > tol) {
        rep.conclusions_hold = false;
        std::ostringstream os;
        os << "conclusion 2 fails: atoms " << j1 << "," << j2 << " collide with mass "
           << collision;
        rep.detail = os.str();
        return rep;
      }
    }
  }
  rep.detail = "ok";
  return rep;
}

PropReport verify_prop2(const StochasticMapTable& g_xy, const StochasticMapTable& g_yx,
                        const DiscreteDist& mu, const DiscreteDist& nu,
                        const GroundMetric& ground_x, const GroundMetric& ground_y, double tol) {
  validate(mu);
  validate(nu);
  validate(g_xy);
  validate(g_yx);
  PropReport rep;
  if (!pushforward_matches(g_xy, mu, nu, tol)) {
    rep.detail = "premise fails: g_xy does not push mu to nu";
    return rep;
  }
  if (!pushforward_matches(g_yx, nu, mu, tol)) {
    rep.detail = "premise fails: g_yx does not push nu to mu";
    return rep;
  }
  const double cyc_nu = discrete_cycle_loss(g_yx, g_xy, nu, ground_y);
  const double cyc_mu = discrete_cycle_loss(g_xy, g_yx, mu, ground_x);
  if (cyc_nu > tol || cyc_mu > tol) {
    rep.detail = "premise fails: cycle losses " + std::to_string(cyc_mu) + ", " +
                 std::to_string(cyc_nu);
    return rep;
  }
  rep.premises_hold = true;
  rep.conclusions_hold = true;

  std::vector<int> img_xy, img_yx;
  if (!near_permutation(g_xy, mu, tol, img_xy)) {
    rep.conclusions_hold = false;
    rep.detail = "conclusion fails: g_xy is not a permutation on the support";
    return rep;
  }
  if (!near_permutation(g_yx, nu, tol, img_yx)) {
    rep.conclusions_hold = false;
    rep.detail = "conclusion fails: g_yx is not a permutation on the support";
    return rep;
  }
  // mutual inverse on the support
  for (std::size_t i = 0; i < img_xy.size(); ++i) {
    const int j = img_xy[i];
    if (j < 0) continue;
    if (nu.p[static_cast<std::size_t>(j)] > tol &&
        img_yx[static_cast<std::size_t>(j)] != static_cast<int>(i)) {
      rep.conclusions_hold = false;
      rep.detail = "conclusion fails: permutations are not mutual inverses";
      return rep;
    }
  }
  rep.detail = "ok";
  return rep;
}

std::vector<std::vector<double>> simplex_grid(std::size_t len, double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("simplex_grid: bad step");
  const auto units = static_cast<long>(std::llround(1.0 / step));
  if (std::abs(units * step - 1.0) > 1e-12)
    throw std::invalid_argument("simplex_grid: step must divide 1");
  std::vector<std::vector<double>> out;
  std::vector<long> counts(len, 0);
  // enumerate compositions of `units` into `len` parts
  auto rec = [&](auto&& self, std::size_t pos, long left) -> void {
    if (pos + 1 == len) {
      counts[pos] = left;
      std::vector<double> row(len);
      for (std::size_t k = 0; k < len; ++k) row[k] = static_cast<double>(counts[k]) * step;
      out.push_back(std::move(row));
      return;
    }
    for (long c = 0; c <= left; ++c) {
      counts[pos] = c;
      self(self, pos + 1, left - c);
    }
  };
  rec(rec, 0, units);
  return out;
}

EnumerationResult enumerate_grid(std::size_t max_support, double step, double tol) {
  EnumerationResult result;
  for (std::size_t n = 1; n <= max_support; ++n) {
    for (std::size_t m = 1; m <= max_support; ++m) {
      DiscreteDist mu{std::vector<double>(n, 1.0 / static_cast<double>(n))};
      DiscreteDist nu{std::vector<double>(m, 1.0 / static_cast<double>(m))};
      const GroundMetric gx = GroundMetric::discrete(n);
      const GroundMetric gy = GroundMetric::discrete(m);
      const auto rows_xy = simplex_grid(m, step);
      const auto rows_yx = simplex_grid(n, step);

      // all n-row tables over rows_xy and m-row tables over rows_yx
      std::vector<std::size_t> ix(n, 0), iy(m, 0);
      std::vector<StochasticMapTable> tables_xy, tables_yx;
      auto build = [](std::size_t rows, std::size_t cols,
                      const std::vector<std::vector<double>>& choices,
                      std::vector<StochasticMapTable>& out) {
        std::vector<std::size_t> idx(rows, 0);
        while (true) {
          StochasticMapTable t;
          t.rows = rows;
          t.cols = cols;
          t.t.reserve(rows * cols);
          for (std::size_t r = 0; r < rows; ++r)
            t.t.insert(t.t.end(), choices[idx[r]].begin(), choices[idx[r]].end());
          out.push_back(std::move(t));
          std::size_t pos = 0;
          while (pos < rows && ++idx[pos] == choices.size()) idx[pos++] = 0;
          if (pos == rows) break;
        }
      };
      build(n, m, rows_xy, tables_xy);
      build(m, n, rows_yx, tables_yx);

      for (const auto& gxy : tables_xy) {
        for (const auto& gyx : tables_yx) {
          ++result.instances;
          PropReport r1 = verify_prop1(gxy, gyx, mu, nu, gy, tol);
          if (r1.premises_hold) {
            ++result.premise1_count;
            if (!r1.conclusions_hold)
              result.violations.push_back({1, n, m, gxy.t, gyx.t, r1.detail});
          }
          PropReport r2 = verify_prop2(gxy, gyx, mu, nu, gx, gy, tol);
          if (r2.premises_hold) {
            ++result.premise2_count;
            if (!r2.conclusions_hold)
              result.violations.push_back({2, n, m, gxy.t, gyx.t, r2.detail});
          }
        }
      }
    }
  }
  return result;
}

}  // namespace otmap::props
