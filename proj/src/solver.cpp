#include "otmap/solver.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace otmap::solver {

namespace {

Tensor uniform_batch(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor uniform_vec(std::size_t n, Rng& rng) {
  Tensor t({n});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

bool two_sided(SolverMode m) { return m != SolverMode::kantorovich; }

}  // namespace

SolverMode mode_from_name(const std::string& name) {
  if (name == "k" || name == "kantorovich") return SolverMode::kantorovich;
  if (name == "m" || name == "monge") return SolverMode::monge;
  if (name == "b" || name == "bijection") return SolverMode::bijection;
  throw std::invalid_argument("unknown solver mode '" + name + "'");
}

std::string mode_name(SolverMode mode) {
  switch (mode) {
    case SolverMode::kantorovich: return "kantorovich";
    case SolverMode::monge: return "monge";
    case SolverMode::bijection: return "bijection";
  }
  return "?";
}

SolverConfig normalized(SolverConfig cfg) {
  if (cfg.mode == SolverMode::kantorovich) {
    cfg.weights.cycle_mu = 0.0;
    cfg.weights.cycle_nu = 0.0;
    cfg.weights.gan_yx = 0.0;
    cfg.weights.gp_yx = 0.0;
  } else if (cfg.mode == SolverMode::monge) {
    cfg.weights.cycle_mu = 0.0;
  }
  return cfg;
}

void validate(const SolverConfig& cfg) {
  loss::validate_nonnegative(cfg.weights);
  if (cfg.n_critic < 1) throw std::invalid_argument("config: n_critic must be >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (cfg.max_steps < 0) throw std::invalid_argument("config: max_steps must be >= 0");
  if (cfg.d_in < 1 || cfg.noise_dim < 1)
    throw std::invalid_argument("config: dimensions must be positive");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
  if (cfg.mode == SolverMode::kantorovich &&
      (cfg.weights.cycle_mu != 0.0 || cfg.weights.cycle_nu != 0.0))
    throw std::invalid_argument("config: kantorovich mode forces both cycle weights to 0");
  if (cfg.mode == SolverMode::monge && cfg.weights.cycle_mu != 0.0)
    throw std::invalid_argument("config: monge mode forces cycle_mu to 0");
}

ad::Bindings TrainState::bindings() const {
  ad::Bindings b;
  p_gxy.bind(b, g_xy);
  p_dy.bind(b, d_y);
  if (p_gyx) p_gyx->bind(b, *g_yx);
  if (p_dx) p_dx->bind(b, *d_x);
  return b;
}

std::vector<Tensor*> TrainState::generator_tensors() {
  std::vector<Tensor*> out = nn::trainable(g_xy);
  if (g_yx) {
    auto more = nn::trainable(*g_yx);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

std::vector<Tensor*> TrainState::critic_tensors() {
  std::vector<Tensor*> out = nn::trainable(d_y);
  if (d_x) {
    auto more = nn::trainable(*d_x);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

TrainState init_state(const SolverConfig& raw) {
  SolverConfig cfg = normalized(raw);
  validate(cfg);
  TrainState s;
  s.config = cfg;
  Rng seeder(cfg.seed);
  const std::uint64_t seed_gxy = seeder.next_u64();
  const std::uint64_t seed_dy = seeder.next_u64();
  s.g_xy = nn::init_generator(cfg.d_in, cfg.noise_dim, seed_gxy);
  s.d_y = nn::init_critic(cfg.d_in, seed_dy);
  if (two_sided(cfg.mode)) {
    const std::uint64_t seed_gyx = seeder.next_u64();
    const std::uint64_t seed_dx = seeder.next_u64();
    s.g_yx = nn::init_generator(cfg.d_in, cfg.noise_dim, seed_gyx);
    s.d_x = nn::init_critic(cfg.d_in, seed_dx);
  }
  s.rng = Rng(seeder.next_u64());
  s.p_gxy = nn::GeneratorParams::make(s.g_xy, "g_xy");
  s.p_dy = nn::CriticParams::make(s.d_y, "d_y");
  if (s.g_yx) s.p_gyx = nn::GeneratorParams::make(*s.g_yx, "g_yx");
  if (s.d_x) s.p_dx = nn::CriticParams::make(*s.d_x, "d_x");
  auto gt = s.generator_tensors();
  auto dt = s.critic_tensors();
  s.adam_g = nn::AdamState::mirror(gt);
  s.adam_d = nn::AdamState::mirror(dt);
  return s;
}

void critic_step(TrainState& state, const Tensor& source_batch, const Tensor& target_batch) {
  const SolverConfig& cfg = state.config;
  const auto m = static_cast<std::size_t>(cfg.batch);
  if (source_batch.rows() != m || target_batch.rows() != m)
    throw std::invalid_argument("critic_step: batch sizes do not match config.batch");
  const bool both = two_sided(cfg.mode);

  // draw order: z_x, (z_y), eps_y, (eps_x)
  const Tensor z_x = uniform_batch(m, static_cast<std::size_t>(cfg.noise_dim), -1.0, 1.0, state.rng);
  Tensor z_y;
  if (both) z_y = uniform_batch(m, static_cast<std::size_t>(cfg.noise_dim), -1.0, 1.0, state.rng);
  const Tensor eps_y = uniform_vec(m, state.rng);
  Tensor eps_x;
  if (both) eps_x = uniform_vec(m, state.rng);

  // generator outputs enter the critic objective as constants; only critic
  // parameters receive gradients here
  const Tensor fake_y = nn::generator_apply(state.g_xy, source_batch, z_x);
  ad::Expr real_y = ad::constant(target_batch);
  ad::Expr fy = ad::constant(fake_y);
  loss::WganTerms terms_y = loss::wgan_terms(state.p_dy, real_y, fy);
  ad::Expr loss_y = terms_y.critic;
  if (cfg.weights.gp_xy != 0.0)
    loss_y = ad::add(loss_y, ad::scale(loss::gradient_penalty(state.p_dy, real_y, fy, eps_y),
                                       cfg.weights.gp_xy));

  ad::Expr total = loss_y;
  ad::Expr loss_x;
  if (both) {
    const Tensor fake_x = nn::generator_apply(*state.g_yx, target_batch, z_y);
    ad::Expr real_x = ad::constant(source_batch);
    ad::Expr fx = ad::constant(fake_x);
    loss::WganTerms terms_x = loss::wgan_terms(*state.p_dx, real_x, fx);
    loss_x = terms_x.critic;
    if (cfg.weights.gp_yx != 0.0)
      loss_x = ad::add(loss_x, ad::scale(loss::gradient_penalty(*state.p_dx, real_x, fx, eps_x),
                                         cfg.weights.gp_yx));
    total = ad::add(total, loss_x);
  }

  std::vector<ad::Expr> wrt = state.p_dy.wrt();
  if (both) {
    auto more = state.p_dx->wrt();
    wrt.insert(wrt.end(), more.begin(), more.end());
  }
  std::vector<ad::Expr> grad_exprs = ad::grad(total, wrt);

  const ad::Bindings bindings = state.bindings();
  ad::Evaluator ev(bindings);
  state.last_critic_y = ev.value(loss_y).value();
  if (both) state.last_critic_x = ev.value(loss_x).value();
  std::vector<Tensor> grads;
  grads.reserve(grad_exprs.size());
  for (const auto& g : grad_exprs) grads.push_back(ev.value(g));

  auto params = state.critic_tensors();
  nn::adam_step(state.adam_d, {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps}, params, grads);
}

void generator_step(TrainState& state, const Tensor& source_batch, const Tensor& target_batch) {
  const SolverConfig& cfg = state.config;
  const auto m = static_cast<std::size_t>(cfg.batch);
  if (source_batch.rows() != m || target_batch.rows() != m)
    throw std::invalid_argument("generator_step: batch sizes do not match config.batch");
  const bool both = two_sided(cfg.mode);

  const Tensor z_x = uniform_batch(m, static_cast<std::size_t>(cfg.noise_dim), -1.0, 1.0, state.rng);
  Tensor z_y;
  if (both) z_y = uniform_batch(m, static_cast<std::size_t>(cfg.noise_dim), -1.0, 1.0, state.rng);

  ad::Expr x = ad::constant(source_batch);
  ad::Expr y = ad::constant(target_batch);
  ad::Expr zx = ad::constant(z_x);

  ad::Expr mapped = nn::generator_forward(state.p_gxy, x, zx);
  ad::Expr l_opt = loss::transport_cost(loss::cost_builder(cfg.cost), x, mapped);
  ad::Expr total = l_opt;
  if (cfg.weights.gan_xy != 0.0)
    total = ad::add(total, ad::scale(ad::mean_all(nn::critic_forward(state.p_dy, mapped)),
                                     -cfg.weights.gan_xy));

  ad::Expr cycle_nu, cycle_mu;
  if (both) {
    ad::Expr zy = ad::constant(z_y);
    ad::Expr back = nn::generator_forward(*state.p_gyx, y, zy);
    if (cfg.weights.gan_yx != 0.0)
      total = ad::add(total, ad::scale(ad::mean_all(nn::critic_forward(*state.p_dx, back)),
                                       -cfg.weights.gan_yx));
    // Algorithm-style noise reuse: the return pass recycles z_x / z_y
    cycle_nu = ad::mean_all(
        ad::l2_norm_rows(ad::sub(nn::generator_forward(state.p_gxy, back, zx), y)));
    if (cfg.weights.cycle_nu != 0.0) total = ad::add(total, ad::scale(cycle_nu, cfg.weights.cycle_nu));
    if (cfg.mode == SolverMode::bijection) {
      cycle_mu = ad::mean_all(
          ad::l2_norm_rows(ad::sub(nn::generator_forward(*state.p_gyx, mapped, zy), x)));
      if (cfg.weights.cycle_mu != 0.0)
        total = ad::add(total, ad::scale(cycle_mu, cfg.weights.cycle_mu));
    }
  }

  std::vector<ad::Expr> wrt = state.p_gxy.wrt();
  if (both) {
    auto more = state.p_gyx->wrt();
    wrt.insert(wrt.end(), more.begin(), more.end());
  }
  std::vector<ad::Expr> grad_exprs = ad::grad(total, wrt);

  const ad::Bindings bindings = state.bindings();
  ad::Evaluator ev(bindings);
  state.last_l_opt = ev.value(l_opt).value();
  state.last_cycle_nu = cycle_nu.valid() ? ev.value(cycle_nu).value() : 0.0;
  state.last_cycle_mu = cycle_mu.valid() ? ev.value(cycle_mu).value() : 0.0;
  std::vector<Tensor> grads;
  grads.reserve(grad_exprs.size());
  for (const auto& g : grad_exprs) grads.push_back(ev.value(g));

  auto params = state.generator_tensors();
  nn::adam_step(state.adam_g, {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps}, params, grads);
}

void write_metrics_header(std::ostream& os) {
  os << "step,l_opt,critic_loss_y,critic_loss_x,cycle_nu,cycle_mu,wall_ms\n";
}

void train_loop(TrainState& state, const Sampler& source, const Sampler& target,
                std::ostream* metrics_csv, const TrainHooks& hooks) {
  const SolverConfig& cfg = state.config;
  if (source.dim() != cfg.d_in || target.dim() != cfg.d_in)
    throw std::invalid_argument("train: sampler dimension does not match config.d_in");
  if (metrics_csv && state.step == 0) write_metrics_header(*metrics_csv);

  const auto t0 = std::chrono::steady_clock::now();
  const auto m = static_cast<std::size_t>(cfg.batch);
  char row[256];
  while (state.step < cfg.max_steps) {
    for (int t = 0; t < cfg.n_critic; ++t) {
      const Tensor xs = source.sample(static_cast<int>(m), state.rng);
      const Tensor ys = target.sample(static_cast<int>(m), state.rng);
      critic_step(state, xs, ys);
    }
    const Tensor xs = source.sample(static_cast<int>(m), state.rng);
    const Tensor ys = target.sample(static_cast<int>(m), state.rng);
    generator_step(state, xs, ys);
    state.step += 1;

    if (metrics_csv && cfg.log_every > 0 &&
        (state.step % cfg.log_every == 0 || state.step == cfg.max_steps)) {
      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      std::snprintf(row, sizeof(row), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.1f\n", state.step,
                    state.last_l_opt, state.last_critic_y, state.last_critic_x,
                    state.last_cycle_nu, state.last_cycle_mu, wall_ms);
      *metrics_csv << row;
    }
    if (hooks.on_eval && cfg.eval_every > 0 && state.step % cfg.eval_every == 0)
      hooks.on_eval(state);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(state);
  }
}

TrainState train(const SolverConfig& cfg, const Sampler& source, const Sampler& target,
                 std::ostream* metrics_csv, const TrainHooks& hooks) {
  TrainState state = init_state(cfg);
  train_loop(state, source, target, metrics_csv, hooks);
  return state;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr std::uint32_t kMagic = 0x434d544fu;  // "OTMC"
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(double) == 8);

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
void put_i64(std::string& out, std::int64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), 8); }

void put_tensor(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  void tensor(Tensor& t) {
    need(t.size() * sizeof(double));
    std::memcpy(t.data(), buf.data() + pos, t.size() * sizeof(double));
    pos += t.size() * sizeof(double);
  }
};

template <typename State, typename Fn>
void for_each_block(State& s, Fn&& fn) {
  // declaration order: g_xy, g_yx, d_y, d_x layers (weight then bias), then
  // Adam moment blocks in the same order
  for (auto& layer : s.g_xy.layers) {
    fn(layer.weight);
    fn(layer.bias);
  }
  if (s.g_yx)
    for (auto& layer : s.g_yx->layers) {
      fn(layer.weight);
      fn(layer.bias);
    }
  for (auto& layer : s.d_y.layers) {
    fn(layer.weight);
    fn(layer.bias);
  }
  if (s.d_x)
    for (auto& layer : s.d_x->layers) {
      fn(layer.weight);
      fn(layer.bias);
    }
  for (auto& t : s.adam_g.m) fn(t);
  for (auto& t : s.adam_g.v) fn(t);
  for (auto& t : s.adam_d.m) fn(t);
  for (auto& t : s.adam_d.v) fn(t);
}

}  // namespace

void checkpoint_save(const TrainState& state, const std::string& path) {
  const SolverConfig& c = state.config;
  std::string out;
  put_u32(out, kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(c.mode));
  put_u32(out, static_cast<std::uint32_t>(c.d_in));
  put_u32(out, static_cast<std::uint32_t>(c.noise_dim));
  put_u32(out, static_cast<std::uint32_t>(c.batch));
  put_u32(out, static_cast<std::uint32_t>(c.n_critic));
  put_u32(out, static_cast<std::uint32_t>(c.cost));
  put_f64(out, c.lr);
  put_f64(out, c.beta1);
  put_f64(out, c.beta2);
  put_f64(out, c.adam_eps);
  put_f64(out, c.weights.gan_xy);
  put_f64(out, c.weights.gan_yx);
  put_f64(out, c.weights.gp_xy);
  put_f64(out, c.weights.gp_yx);
  put_f64(out, c.weights.cycle_mu);
  put_f64(out, c.weights.cycle_nu);
  put_i64(out, c.max_steps);
  put_u64(out, c.seed);
  put_i64(out, c.log_every);
  put_i64(out, c.eval_every);
  put_i64(out, c.checkpoint_every);
  put_i64(out, state.step);
  for (std::uint64_t w : state.rng.state()) put_u64(out, w);
  put_i64(out, state.adam_g.t);
  put_i64(out, state.adam_d.t);
  for_each_block(state, [&](const Tensor& t) { put_tensor(out, t); });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.close();
  if (!f) throw std::runtime_error("checkpoint: short write to " + path);

  std::ofstream side(path + ".txt", std::ios::trunc);
  side << "format otmap-checkpoint v" << kVersion << "\n"
       << "mode " << mode_name(c.mode) << "\n"
       << "d_in " << c.d_in << "\n"
       << "noise_dim " << c.noise_dim << "\n"
       << "seed " << c.seed << "\n"
       << "step " << state.step << "\n";
}

TrainState checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.u32() != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) + " unsupported");

  SolverConfig c;
  c.mode = static_cast<SolverMode>(r.u32());
  c.d_in = static_cast<int>(r.u32());
  c.noise_dim = static_cast<int>(r.u32());
  c.batch = static_cast<int>(r.u32());
  c.n_critic = static_cast<int>(r.u32());
  c.cost = static_cast<loss::CostKind>(r.u32());
  c.lr = r.f64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.adam_eps = r.f64();
  c.weights.gan_xy = r.f64();
  c.weights.gan_yx = r.f64();
  c.weights.gp_xy = r.f64();
  c.weights.gp_yx = r.f64();
  c.weights.cycle_mu = r.f64();
  c.weights.cycle_nu = r.f64();
  c.max_steps = r.i64();
  c.seed = r.u64();
  c.log_every = r.i64();
  c.eval_every = r.i64();
  c.checkpoint_every = r.i64();

  TrainState state = init_state(c);
  state.step = r.i64();
  std::array<std::uint64_t, 4> rng_state{};
  for (auto& w : rng_state) w = r.u64();
  state.rng.set_state(rng_state);
  state.adam_g.t = r.i64();
  state.adam_d.t = r.i64();
  for_each_block(state, [&](Tensor& t) { r.tensor(t); });
  if (r.pos != buf.size())
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return state;
}

}  // namespace otmap::solver
