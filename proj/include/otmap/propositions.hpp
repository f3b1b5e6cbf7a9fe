#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace otmap::props {

// Finite distribution over indexed atoms.
struct DiscreteDist {
  std::vector<double> p;
  std::size_t size() const { return p.size(); }
};

// Row-stochastic table: t[i*cols+j] = p(map(atom_i) = atom_j).
struct StochasticMapTable {
  std::size_t rows = 0, cols = 0;
  std::vector<double> t;
  double at(std::size_t i, std::size_t j) const { return t[i * cols + j]; }
};

// Pairwise distances between atoms of one domain; diagonal must be zero.
struct GroundMetric {
  std::size_t size = 0;
  std::vector<double> d;
  double at(std::size_t i, std::size_t j) const { return d[i * size + j]; }
  // 0/1 metric, sufficient for the zero/nonzero structure of the checks
  static GroundMetric discrete(std::size_t n);
};

void validate(const DiscreteDist& d, double tol = 1e-12);
void validate(const StochasticMapTable& t, double tol = 1e-12);

// d^T T
DiscreteDist pushforward(const StochasticMapTable& t, const DiscreteDist& d);

// sum_j d_j sum_i g_ba[j][i] sum_k g_ab[i][k] dist(k, j): the expected
// reconstruction distance of atom j after mapping back and forth.
double discrete_cycle_loss(const StochasticMapTable& g_ba, const StochasticMapTable& g_ab,
                           const DiscreteDist& d, const GroundMetric& ground);

// true iff every row concentrates mass >= 1 - tol on a single atom
bool is_deterministic(const StochasticMapTable& t, double tol);

struct PropReport {
  bool premises_hold = false;
  bool conclusions_hold = false;  // meaningful only when premises_hold
  std::string detail;
  bool counterexample() const { return premises_hold && !conclusions_hold; }
};

// One-side cycle consistency: if g_yx pushes nu to mu and the nu-cycle loss
// vanishes, then g_xy must be deterministic on mu's support and no two
// distinct target atoms may collide under g_yx.
PropReport verify_prop1(const StochasticMapTable& g_xy, const StochasticMapTable& g_yx,
                        const DiscreteDist& mu, const DiscreteDist& nu,
                        const GroundMetric& ground_y, double tol);

// Two-side version: with both pushforwards and both cycle losses vanishing,
// both tables must be mutually inverse permutations (on the support).
PropReport verify_prop2(const StochasticMapTable& g_xy, const StochasticMapTable& g_yx,
                        const DiscreteDist& mu, const DiscreteDist& nu,
                        const GroundMetric& ground_x, const GroundMetric& ground_y, double tol);

struct Violation {
  int which = 0;  // 1 or 2
  std::size_t n = 0, m = 0;
  std::vector<double> g_xy, g_yx;
  std::string detail;
};

struct EnumerationResult {
  std::uint64_t instances = 0;        // table pairs examined
  std::uint64_t premise1_count = 0;   // pairs satisfying prop-1 premises
  std::uint64_t premise2_count = 0;
  std::vector<Violation> violations;  // expected empty
};

// Exhaustively checks both propositions over all row-stochastic tables with
// probabilities on a step grid, uniform marginals, supports up to
// max_support per side.
EnumerationResult enumerate_grid(std::size_t max_support, double step, double tol);

// All probability vectors of the given length with entries in {0, step,
// 2*step, ..., 1} summing to one. Exposed for tests.
std::vector<std::vector<double>> simplex_grid(std::size_t len, double step);

}  // namespace otmap::props
