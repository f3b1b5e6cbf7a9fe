#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "otmap/losses.hpp"
#include "otmap/nn.hpp"
#include "otmap/rng.hpp"
#include "otmap/tensor.hpp"

namespace otmap::solver {

// kantorovich: G_xy and D_y only, no cycle terms.
// monge: adds G_yx/D_x and the target-side cycle term.
// bijection: both cycle terms.
enum class SolverMode { kantorovich, monge, bijection };

SolverMode mode_from_name(const std::string& name);
std::string mode_name(SolverMode mode);

struct SolverConfig {
  SolverMode mode = SolverMode::kantorovich;
  loss::LossWeights weights;
  loss::CostKind cost = loss::CostKind::squared_euclidean;
  int n_critic = 5;
  int batch = 100;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  int d_in = 2;
  int noise_dim = 2;  // z ~ U[-1,1]^noise_dim
  long max_steps = 20000;
  std::uint64_t seed = 1;
  long log_every = 50;    // loss CSV cadence; 0 disables
  long eval_every = 0;    // on_eval hook cadence; 0 disables
  long checkpoint_every = 0;
};

// Zeroes the cycle weights the mode does not use (both for kantorovich,
// the mu side for monge).
SolverConfig normalized(SolverConfig cfg);
void validate(const SolverConfig& cfg);

// Source of i.i.d. batches; draws all randomness from the RNG handed in so a
// training run is a pure function of (config, sampler description).
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual int dim() const = 0;
  virtual Tensor sample(int n, Rng& rng) const = 0;
};

struct TrainState {
  SolverConfig config;
  long step = 0;
  Rng rng;

  nn::GeneratorNet g_xy;
  nn::CriticNet d_y;
  std::optional<nn::GeneratorNet> g_yx;
  std::optional<nn::CriticNet> d_x;

  nn::AdamState adam_g;  // all generator parameters, g_xy first
  nn::AdamState adam_d;  // all critic parameters, d_y first

  nn::GeneratorParams p_gxy;
  nn::CriticParams p_dy;
  std::optional<nn::GeneratorParams> p_gyx;
  std::optional<nn::CriticParams> p_dx;

  // last evaluated loss values, for logging
  double last_l_opt = 0.0;
  double last_critic_y = 0.0;
  double last_critic_x = 0.0;
  double last_cycle_nu = 0.0;
  double last_cycle_mu = 0.0;

  ad::Bindings bindings() const;
  std::vector<Tensor*> generator_tensors();
  std::vector<Tensor*> critic_tensors();
};

TrainState init_state(const SolverConfig& cfg);

// One critic update on the given batches (Adam on the critic objective;
// generator parameters are read-only here). Noise and interpolation draws
// come from state.rng.
void critic_step(TrainState& state, const Tensor& source_batch, const Tensor& target_batch);

// One generator update (critic parameters are read-only here).
void generator_step(TrainState& state, const Tensor& source_batch, const Tensor& target_batch);

struct TrainHooks {
  std::function<void(const TrainState&)> on_eval;
  std::function<void(const TrainState&)> on_checkpoint;
};

// Runs the n_critic : 1 alternation from state.step to config.max_steps,
// streaming the loss log as CSV (header:
// step,l_opt,critic_loss_y,critic_loss_x,cycle_nu,cycle_mu,wall_ms).
void train_loop(TrainState& state, const Sampler& source, const Sampler& target,
                std::ostream* metrics_csv, const TrainHooks& hooks = {});

TrainState train(const SolverConfig& cfg, const Sampler& source, const Sampler& target,
                 std::ostream* metrics_csv, const TrainHooks& hooks = {});

void write_metrics_header(std::ostream& os);

// Versioned flat binary checkpoint (little-endian f64 blocks in declaration
// order) plus a plain-text sidecar "<path>.txt" with dims, seed and step.
// Loading a truncated or version-mismatched file throws without constructing
// partial state; save -> load -> train continues the exact trajectory.
void checkpoint_save(const TrainState& state, const std::string& path);
TrainState checkpoint_load(const std::string& path);

}  // namespace otmap::solver
