#pragma once

#include <string>
#include <vector>

#include "otmap/oracle.hpp"
#include "otmap/solver.hpp"

namespace otmap::exp {

// Synthetic 2-D laws. Mixture geometry is a reconstruction from the
// figures (the numbers are not given in print): 4-Gaussian centers on the
// diagonals at radius 2 (source) / 6 (target) with sigma 0.4, 8-Gaussian
// centers on a radius-6 octagon with sigma 0.4, checkerboard squares of side
// 2 on a 3x3 lattice with the 5 "black" cells as source and 4 "white" cells
// as target.
enum class LawKind {
  four_point_discrete,
  std_gaussian_2d,
  four_gaussian_src,
  four_gaussian_tgt,
  eight_gaussian_mix,
  checkerboard_src,
  checkerboard_tgt,
};

class SyntheticLaw final : public solver::Sampler {
 public:
  explicit SyntheticLaw(LawKind kind) : kind_(kind) {}
  int dim() const override { return 2; }
  Tensor sample(int n, Rng& rng) const override;
  LawKind kind() const { return kind_; }

 private:
  LawKind kind_;
};

struct ToyTask {
  std::string name;
  SyntheticLaw source;
  SyntheticLaw target;
};

// task in {discrete4, gauss4, gauss8, checkerboard}
ToyTask make_toy_task(const std::string& name);

// Mean over sources of the per-output-coordinate variance (trace of the
// output covariance) across k independent noise draws; exactly zero when the
// generator ignores z on the given sources.
double determinism_score(const nn::GeneratorNet& g, const Tensor& sources, int k,
                         std::uint64_t seed);

struct MetricsRecord {
  double est_transport_cost = 0.0;
  double oracle_cost = 0.0;
  double independent_cost = 0.0;
  double energy_distance_to_target = 0.0;
  double determinism_score = 0.0;
  double cycle_rmse_fwd = 0.0;  // source-side reconstruction; 0 when no G_yx
  double cycle_rmse_bwd = 0.0;  // target-side reconstruction; 0 when no G_yx
  long step = 0;
  double wall_ms = 0.0;
};

struct EvalSettings {
  int oracle_points = 1000;
  int ed_points = 2000;
  int det_sources = 256;
  int det_draws = 16;
  std::uint64_t seed = 0x0e7a1ull;  // evaluation stream, independent of training
};

// Fixed-seed evaluation of a state against sampled source/target clouds.
// Reports measurements only; no thresholds are applied here.
MetricsRecord evaluate(const solver::TrainState& state, const solver::Sampler& source,
                       const solver::Sampler& target, const EvalSettings& settings);

void write_metrics_csv_header(std::ostream& os);
void append_metrics_csv(std::ostream& os, const MetricsRecord& rec);

struct ReportClouds {
  Tensor source;  // {n,2} drawn blue
  Tensor target;  // {m,2} drawn red
  Tensor mapped;  // {n,2} drawn orange, row i joined to source row i in green
};

// Writes "<task>_<mode>_metrics.csv" plus "<task>_<mode>_<step>.svg" under
// out_dir and returns the paths written. Deterministic: identical inputs give
// byte-identical files.
std::vector<std::string> render_report(const std::vector<MetricsRecord>& records,
                                       const ReportClouds& clouds, const std::string& task,
                                       const std::string& mode, long step,
                                       const std::string& out_dir);

}  // namespace otmap::exp
