#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "otmap/colortransfer.hpp"
#include "otmap/experiments.hpp"
#include "otmap/manifest.hpp"
#include "otmap/propositions.hpp"
#include "otmap/solver.hpp"

namespace fs = std::filesystem;
using namespace otmap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCounterexample = 3;

struct CommonOpts {
  std::string out_dir = "otmap_out";
  std::uint64_t seed = 7;
  long steps = 20000;
  int blas_threads = 2;
};

struct HyperOpts {
  std::string mode = "k";
  double lambda_gan = 1.0;
  double lambda_gp = 0.1;
  double lambda_cycle = 1.0;
  int n_critic = 5;
  int batch = 100;
  double lr = 1e-4;
  int noise_dim = 0;  // 0 = match d_in
  long eval_every = 1000;
  long checkpoint_every = 0;
  long log_every = 50;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--out-dir", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--steps", c.steps, "generator iterations")->check(CLI::NonNegativeNumber);
  cmd->add_option("--blas-threads", c.blas_threads, "BLAS thread count (recorded in manifest)");
}

void add_hyper(CLI::App* cmd, HyperOpts& h) {
  cmd->add_option("--mode", h.mode, "solver: k, m or b");
  cmd->add_option("--lambda-gan", h.lambda_gan, "GAN loss coefficient (both sides)");
  cmd->add_option("--lambda-gp", h.lambda_gp, "gradient penalty coefficient (both sides)");
  cmd->add_option("--lambda-cycle", h.lambda_cycle, "cycle-consistency coefficient");
  cmd->add_option("--n-critic", h.n_critic, "critic iterations per generator iteration");
  cmd->add_option("--batch", h.batch, "batch size");
  cmd->add_option("--lr", h.lr, "Adam learning rate");
  cmd->add_option("--noise-dim", h.noise_dim, "noise dimension (default: input dimension)");
  cmd->add_option("--eval-every", h.eval_every, "evaluation cadence in generator steps");
  cmd->add_option("--checkpoint-every", h.checkpoint_every, "checkpoint cadence (0 = final only)");
  cmd->add_option("--log-every", h.log_every, "loss log cadence");
}

solver::SolverConfig build_config(const CommonOpts& c, const HyperOpts& h, int d_in,
                                  loss::CostKind cost) {
  solver::SolverConfig cfg;
  cfg.mode = solver::mode_from_name(h.mode);
  cfg.weights.gan_xy = cfg.weights.gan_yx = h.lambda_gan;
  cfg.weights.gp_xy = cfg.weights.gp_yx = h.lambda_gp;
  cfg.weights.cycle_mu = cfg.weights.cycle_nu = h.lambda_cycle;
  cfg.cost = cost;
  cfg.n_critic = h.n_critic;
  cfg.batch = h.batch;
  cfg.lr = h.lr;
  cfg.d_in = d_in;
  cfg.noise_dim = h.noise_dim > 0 ? h.noise_dim : d_in;
  cfg.max_steps = c.steps;
  cfg.seed = c.seed;
  cfg.log_every = h.log_every;
  cfg.eval_every = h.eval_every;
  cfg.checkpoint_every = h.checkpoint_every;
  return solver::normalized(cfg);
}

std::map<std::string, std::string> config_map(const solver::SolverConfig& cfg) {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    m[k] = os.str();
  };
  put("mode", solver::mode_name(cfg.mode));
  put("cost", loss::cost_kind_name(cfg.cost));
  put("lambda_gan_xy", cfg.weights.gan_xy);
  put("lambda_gan_yx", cfg.weights.gan_yx);
  put("lambda_gp_xy", cfg.weights.gp_xy);
  put("lambda_gp_yx", cfg.weights.gp_yx);
  put("lambda_cycle_mu", cfg.weights.cycle_mu);
  put("lambda_cycle_nu", cfg.weights.cycle_nu);
  put("n_critic", cfg.n_critic);
  put("batch", cfg.batch);
  put("lr", cfg.lr);
  put("beta1", cfg.beta1);
  put("beta2", cfg.beta2);
  put("adam_eps", cfg.adam_eps);
  put("d_in", cfg.d_in);
  put("noise_dim", cfg.noise_dim);
  put("max_steps", cfg.max_steps);
  put("seed", cfg.seed);
  put("log_every", cfg.log_every);
  put("eval_every", cfg.eval_every);
  put("checkpoint_every", cfg.checkpoint_every);
  return m;
}

void finish_manifest(RunManifest& man, const std::string& out_dir, const std::string& status) {
  man.status = status;
  write_manifest(man, out_dir);
}

int run_train_toy(const CommonOpts& common, const HyperOpts& hyper, const std::string& task_name) {
  set_blas_threads(common.blas_threads);
  exp::ToyTask task = exp::make_toy_task(task_name);  // throws invalid_argument on bad name
  solver::SolverConfig cfg = build_config(common, hyper, 2, loss::CostKind::squared_euclidean);
  solver::validate(cfg);

  RunManifest man;
  man.command = "train-toy " + task_name;
  man.config = config_map(cfg);
  man.config["task"] = task_name;
  man.outputs = {common.out_dir + "/losses.csv", common.out_dir + "/eval.csv",
                 common.out_dir + "/checkpoint_final.ckpt"};
  write_manifest(man, common.out_dir);

  std::ofstream losses_csv(common.out_dir + "/losses.csv", std::ios::trunc);
  std::ofstream eval_csv(common.out_dir + "/eval.csv", std::ios::trunc);
  if (!losses_csv || !eval_csv) {
    finish_manifest(man, common.out_dir, "failed: cannot write logs");
    return kExitIo;
  }
  exp::write_metrics_csv_header(eval_csv);

  std::vector<exp::MetricsRecord> records;
  exp::EvalSettings eval_cfg;
  auto do_eval = [&](const solver::TrainState& st) {
    exp::MetricsRecord rec = exp::evaluate(st, task.source, task.target, eval_cfg);
    records.push_back(rec);
    exp::append_metrics_csv(eval_csv, rec);
    eval_csv.flush();
    std::printf("step %ld  l_opt=%.4f  oracle=%.4f  ed=%.4f  det=%.4f\n", rec.step,
                rec.est_transport_cost, rec.oracle_cost, rec.energy_distance_to_target,
                rec.determinism_score);
    std::fflush(stdout);
  };

  solver::TrainState state = solver::init_state(cfg);
  if (cfg.max_steps > 0) {
    if (cfg.eval_every > 0) do_eval(state);  // untrained baseline row
    solver::TrainHooks hooks;
    hooks.on_eval = do_eval;
    hooks.on_checkpoint = [&](const solver::TrainState& st) {
      solver::checkpoint_save(st, common.out_dir + "/checkpoint_" + std::to_string(st.step) + ".ckpt");
    };
    solver::train_loop(state, task.source, task.target, &losses_csv, hooks);
    if (records.empty() || records.back().step != state.step) do_eval(state);
  }
  solver::checkpoint_save(state, common.out_dir + "/checkpoint_final.ckpt");

  if (cfg.max_steps > 0) {
    // figure-style scatter of the final mapping
    Rng plot_rng(eval_cfg.seed);
    const Tensor src = task.source.sample(1000, plot_rng);
    const Tensor tgt = task.target.sample(1000, plot_rng);
    Tensor z({src.rows(), static_cast<std::size_t>(cfg.noise_dim)});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = plot_rng.uniform(-1.0, 1.0);
    exp::ReportClouds clouds{src, tgt, nn::generator_apply(state.g_xy, src, z)};
    auto files = exp::render_report(records, clouds, task_name, solver::mode_name(cfg.mode),
                                    state.step, common.out_dir);
    man.outputs.insert(man.outputs.end(), files.begin(), files.end());
  }
  finish_manifest(man, common.out_dir, "done");
  return kExitOk;
}

int run_train_color(const CommonOpts& common, const HyperOpts& hyper, const std::string& src_path,
                    const std::string& tgt_path, const std::string& z_policy_name) {
  set_blas_threads(common.blas_threads);
  color::ZPolicy policy;
  if (z_policy_name == "fixed")
    policy = color::ZPolicy::fixed_z;
  else if (z_policy_name == "per-pixel")
    policy = color::ZPolicy::per_pixel;
  else
    throw std::invalid_argument("unknown z policy '" + z_policy_name + "'");

  const color::ImageRGB src_img = color::load_ppm(src_path);
  const color::ImageRGB tgt_img = color::load_ppm(tgt_path);
  solver::SolverConfig cfg = build_config(common, hyper, 3, loss::CostKind::squared_euclidean);
  solver::validate(cfg);

  RunManifest man;
  man.command = "train-color";
  man.config = config_map(cfg);
  man.config["source_image"] = src_path;
  man.config["target_image"] = tgt_path;
  man.config["z_policy"] = z_policy_name;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a_file(src_path)));
  man.inputs[src_path] = hash;
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a_file(tgt_path)));
  man.inputs[tgt_path] = hash;
  man.outputs = {common.out_dir + "/transferred.ppm", common.out_dir + "/scores.csv",
                 common.out_dir + "/checkpoint_final.ckpt"};
  write_manifest(man, common.out_dir);

  color::CloudSampler source(color::image_to_cloud(src_img));
  color::CloudSampler target(color::image_to_cloud(tgt_img));

  std::ofstream losses_csv(common.out_dir + "/losses.csv", std::ios::trunc);
  std::ofstream eval_csv(common.out_dir + "/eval.csv", std::ios::trunc);
  exp::write_metrics_csv_header(eval_csv);
  std::vector<exp::MetricsRecord> records;
  exp::EvalSettings eval_cfg;
  auto do_eval = [&](const solver::TrainState& st) {
    exp::MetricsRecord rec = exp::evaluate(st, source, target, eval_cfg);
    records.push_back(rec);
    exp::append_metrics_csv(eval_csv, rec);
    eval_csv.flush();
    std::printf("step %ld  l_opt=%.4f  ed=%.4f  det=%.5f\n", rec.step, rec.est_transport_cost,
                rec.energy_distance_to_target, rec.determinism_score);
    std::fflush(stdout);
  };

  solver::TrainState state = solver::init_state(cfg);
  if (cfg.max_steps > 0) {
    if (cfg.eval_every > 0) do_eval(state);
    solver::TrainHooks hooks;
    hooks.on_eval = do_eval;
    solver::train_loop(state, source, target, &losses_csv, hooks);
    if (records.empty() || records.back().step != state.step) do_eval(state);
  }
  solver::checkpoint_save(state, common.out_dir + "/checkpoint_final.ckpt");

  const color::ImageRGB out_img = color::transfer(state, src_img, policy, cfg.seed);
  color::save_ppm(out_img, common.out_dir + "/transferred.ppm");

  const double baseline = color::histogram_match_score(src_img, tgt_img);
  const double transferred = color::histogram_match_score(out_img, tgt_img);
  {
    std::ofstream scores(common.out_dir + "/scores.csv", std::ios::trunc);
    scores << "pair,score\n";
    char row[128];
    std::snprintf(row, sizeof(row), "source_vs_target,%.17g\n", baseline);
    scores << row;
    std::snprintf(row, sizeof(row), "transferred_vs_target,%.17g\n", transferred);
    scores << row;
  }
  std::printf("histogram match: baseline=%.5f transferred=%.5f\n", baseline, transferred);

  // 3D color scatter as three axis-pair projections
  {
    Rng plot_rng(eval_cfg.seed ^ 0xc01a);
    const Tensor sc = source.sample(800, plot_rng);
    const Tensor tc = target.sample(800, plot_rng);
    Tensor z({sc.rows(), static_cast<std::size_t>(cfg.noise_dim)});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = plot_rng.uniform(-1.0, 1.0);
    const Tensor mc = nn::generator_apply(state.g_xy, sc, z);
    const char* axes[3] = {"rg", "rb", "gb"};
    const std::size_t cols[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int p = 0; p < 3; ++p) {
      auto project = [&](const Tensor& cloud) {
        Tensor out({cloud.rows(), 2});
        for (std::size_t i = 0; i < cloud.rows(); ++i) {
          out.at(i, 0) = cloud.at(i, cols[p][0]);
          out.at(i, 1) = cloud.at(i, cols[p][1]);
        }
        return out;
      };
      exp::ReportClouds clouds{project(sc), project(tc), project(mc)};
      auto files = exp::render_report(records, clouds, std::string("color_") + axes[p],
                                      solver::mode_name(cfg.mode), state.step, common.out_dir);
      man.outputs.insert(man.outputs.end(), files.begin(), files.end());
    }
  }
  finish_manifest(man, common.out_dir, "done");
  return kExitOk;
}

int run_verify_props(const CommonOpts& common, double step, int max_support, double tol) {
  if (!(step > 0.0 && step <= 1.0))
    throw std::invalid_argument("verify-props: step must be in (0,1]");
  if (max_support < 1 || max_support > 4)
    throw std::invalid_argument("verify-props: max-support must be in [1,4]");

  RunManifest man;
  man.command = "verify-props";
  man.config["step"] = std::to_string(step);
  man.config["max_support"] = std::to_string(max_support);
  man.config["tol"] = std::to_string(tol);
  man.outputs = {common.out_dir + "/violations.csv"};
  write_manifest(man, common.out_dir);

  const props::EnumerationResult res =
      props::enumerate_grid(static_cast<std::size_t>(max_support), step, tol);

  std::ofstream csv(common.out_dir + "/violations.csv", std::ios::trunc);
  csv << "proposition,n,m,detail\n";
  for (const auto& v : res.violations)
    csv << v.which << "," << v.n << "," << v.m << ",\"" << v.detail << "\"\n";

  std::printf("checked %llu table pairs (support <= %d, step %.3g)\n",
              static_cast<unsigned long long>(res.instances), max_support, step);
  std::printf("prop-1 premise instances: %llu\n",
              static_cast<unsigned long long>(res.premise1_count));
  std::printf("prop-2 premise instances: %llu\n",
              static_cast<unsigned long long>(res.premise2_count));
  std::printf("counterexamples: %zu\n", res.violations.size());
  finish_manifest(man, common.out_dir, res.violations.empty() ? "done" : "counterexamples");
  return res.violations.empty() ? kExitOk : kExitCounterexample;
}

Tensor load_point_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::vector<double> row;
    double v;
    while (is >> v) row.push_back(v);
    if (!is.eof() && is.fail()) throw std::runtime_error("bad number in " + path);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no points in " + path);
  const std::size_t d = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != d) throw std::runtime_error("ragged rows in " + path);
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rows[i][j];
  return out;
}

int run_oracle(const CommonOpts& common, const std::string& src_path, const std::string& tgt_path,
               const std::string& cost_name) {
  const loss::CostKind kind = loss::cost_kind_from_name(cost_name);

  RunManifest man;
  man.command = "oracle";
  man.config["cost"] = cost_name;
  man.outputs = {common.out_dir + "/plan.csv"};
  write_manifest(man, common.out_dir);

  const Tensor xs = load_point_file(src_path);
  const Tensor ys = load_point_file(tgt_path);
  if (xs.cols() != ys.cols())
    throw std::runtime_error("point files have different dimensions");
  const std::vector<double> a(xs.rows(), 1.0 / static_cast<double>(xs.rows()));
  const std::vector<double> b(ys.rows(), 1.0 / static_cast<double>(ys.rows()));
  const Tensor c = oracle::cost_matrix(kind, xs, ys);
  const oracle::OtResult res = oracle::exact_ot(a, b, c);
  const double ind = oracle::independent_coupling_cost(a, b, c);

  std::printf("exact_ot_cost %.12g\n", res.cost);
  std::printf("independent_coupling_cost %.12g\n", ind);

  std::ofstream plan(common.out_dir + "/plan.csv", std::ios::trunc);
  plan << "i,j,mass\n";
  char row[96];
  for (std::size_t i = 0; i < res.plan.n; ++i)
    for (std::size_t j = 0; j < res.plan.m; ++j)
      if (res.plan.mass(i, j) > 0.0) {
        std::snprintf(row, sizeof(row), "%zu,%zu,%.17g\n", i, j, res.plan.mass(i, j));
        plan << row;
      }
  finish_manifest(man, common.out_dir, "done");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial optimal transport maps: training, oracle and verification"};
  app.require_subcommand(1);
  app.set_config("--config");

  CommonOpts common;
  HyperOpts hyper;

  std::string task = "discrete4";
  CLI::App* toy = app.add_subcommand("train-toy", "train a solver on a synthetic 2-D task");
  add_common(toy, common);
  add_hyper(toy, hyper);
  toy->add_option("--task", task, "discrete4, gauss4, gauss8 or checkerboard");

  std::string src_image, tgt_image, z_policy = "fixed";
  CLI::App* colorcmd = app.add_subcommand("train-color", "learn a color transfer between two images");
  add_common(colorcmd, common);
  add_hyper(colorcmd, hyper);
  colorcmd->add_option("--source", src_image, "source PPM image")->required();
  colorcmd->add_option("--target", tgt_image, "target PPM image")->required();
  colorcmd->add_option("--z-policy", z_policy, "fixed or per-pixel");

  double vp_step = 0.25, vp_tol = 1e-9;
  int vp_support = 3;
  CLI::App* verify = app.add_subcommand("verify-props", "exhaustive finite check of the cycle propositions");
  add_common(verify, common);
  verify->add_option("--step", vp_step, "probability grid step");
  verify->add_option("--max-support", vp_support, "largest support size per side");
  verify->add_option("--tol", vp_tol, "premise/conclusion tolerance");

  std::string or_src, or_tgt, or_cost = "sqeuclidean";
  CLI::App* oraclecmd = app.add_subcommand("oracle", "exact discrete OT between two point files");
  add_common(oraclecmd, common);
  oraclecmd->add_option("--source", or_src, "whitespace-separated source points")->required();
  oraclecmd->add_option("--target", or_tgt, "whitespace-separated target points")->required();
  oraclecmd->add_option("--cost", or_cost, "sqeuclidean or euclidean");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (toy->parsed()) return run_train_toy(common, hyper, task);
    if (colorcmd->parsed()) return run_train_color(common, hyper, src_image, tgt_image, z_policy);
    if (verify->parsed()) return run_verify_props(common, vp_step, vp_support, vp_tol);
    if (oraclecmd->parsed()) return run_oracle(common, or_src, or_tgt, or_cost);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return kExitUsage;
}
