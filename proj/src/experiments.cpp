#include "otmap/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace otmap::exp {

namespace {

constexpr double kPi = 3.14159265358979323846;

void mixture_sample(Tensor& out, std::size_t row, Rng& rng, const std::vector<double>& cx,
                    const std::vector<double>& cy, double sigma) {
  const std::size_t k = rng.below(cx.size());
  out[row * 2] = cx[k] + sigma * rng.normal();
  out[row * 2 + 1] = cy[k] + sigma * rng.normal();
}

}  // namespace

Tensor SyntheticLaw::sample(int n, Rng& rng) const {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const auto rows = static_cast<std::size_t>(n);
  Tensor out({rows, 2});
  switch (kind_) {
    case LawKind::four_point_discrete: {
      static const double px[4] = {-3.0, -3.0, 3.0, 3.0};
      static const double py[4] = {-3.0, 3.0, -3.0, 3.0};
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t k = rng.below(4);
        out[i * 2] = px[k];
        out[i * 2 + 1] = py[k];
      }
      break;
    }
    case LawKind::std_gaussian_2d: {
      for (std::size_t i = 0; i < rows; ++i) {
        out[i * 2] = rng.normal();
        out[i * 2 + 1] = rng.normal();
      }
      break;
    }
    case LawKind::four_gaussian_src:
    case LawKind::four_gaussian_tgt: {
      const double r = kind_ == LawKind::four_gaussian_src ? 2.0 : 6.0;
      std::vector<double> cx, cy;
      for (int k = 0; k < 4; ++k) {
        const double ang = kPi / 4.0 + k * kPi / 2.0;
        cx.push_back(r * std::cos(ang));
        cy.push_back(r * std::sin(ang));
      }
      for (std::size_t i = 0; i < rows; ++i) mixture_sample(out, i, rng, cx, cy, 0.4);
      break;
    }
    case LawKind::eight_gaussian_mix: {
      std::vector<double> cx, cy;
      for (int k = 0; k < 8; ++k) {
        const double ang = k * kPi / 4.0;
        cx.push_back(6.0 * std::cos(ang));
        cy.push_back(6.0 * std::sin(ang));
      }
      for (std::size_t i = 0; i < rows; ++i) mixture_sample(out, i, rng, cx, cy, 0.4);
      break;
    }
    case LawKind::checkerboard_src:
    case LawKind::checkerboard_tgt: {
      // 3x3 lattice of side-2 squares centered at (2i, 2j), i,j in {-1,0,1};
      // "black" cells (i+j even) are the 5 source chunks, "white" the 4 target
      std::vector<double> cx, cy;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const bool black = ((i + j) % 2 + 2) % 2 == 0;
          if (black == (kind_ == LawKind::checkerboard_src)) {
            cx.push_back(2.0 * i);
            cy.push_back(2.0 * j);
          }
        }
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t k = rng.below(cx.size());
        out[i * 2] = cx[k] + rng.uniform(-1.0, 1.0);
        out[i * 2 + 1] = cy[k] + rng.uniform(-1.0, 1.0);
      }
      break;
    }
  }
  return out;
}

ToyTask make_toy_task(const std::string& name) {
  if (name == "discrete4")
    return {name, SyntheticLaw(LawKind::four_point_discrete), SyntheticLaw(LawKind::std_gaussian_2d)};
  if (name == "gauss4")
    return {name, SyntheticLaw(LawKind::four_gaussian_src), SyntheticLaw(LawKind::four_gaussian_tgt)};
  if (name == "gauss8")
    return {name, SyntheticLaw(LawKind::std_gaussian_2d), SyntheticLaw(LawKind::eight_gaussian_mix)};
  if (name == "checkerboard")
    return {name, SyntheticLaw(LawKind::checkerboard_src), SyntheticLaw(LawKind::checkerboard_tgt)};
  throw std::invalid_argument("unknown toy task '" + name + "'");
}

double determinism_score(const nn::GeneratorNet& g, const Tensor& sources, int k,
                         std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("determinism_score: k must be >= 2");
  const std::size_t n = sources.rows();
  const auto d = static_cast<std::size_t>(g.d_in);
  Rng rng(seed);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    Tensor z({n, static_cast<std::size_t>(g.d_z)});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
    outs.push_back(nn::generator_apply(g, sources, z));
  }
  // bit-equal outputs short-circuit to an exact zero; otherwise the unbiased
  // two-pass variance per coordinate
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      bool all_same = true;
      const double first = outs[0][i * d + c];
      for (int j = 1; j < k && all_same; ++j) all_same = outs[static_cast<std::size_t>(j)][i * d + c] == first;
      if (all_same) continue;
      double mean = 0.0;
      for (int j = 0; j < k; ++j) mean += outs[static_cast<std::size_t>(j)][i * d + c];
      mean /= k;
      double ss = 0.0;
      for (int j = 0; j < k; ++j) {
        const double dv = outs[static_cast<std::size_t>(j)][i * d + c] - mean;
        ss += dv * dv;
      }
      total += ss / (k - 1);
    }
  }
  return total / static_cast<double>(n);
}

MetricsRecord evaluate(const solver::TrainState& state, const solver::Sampler& source,
                       const solver::Sampler& target, const EvalSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(settings.seed);
  const auto d = static_cast<std::size_t>(state.config.d_in);
  const auto dz = static_cast<std::size_t>(state.config.noise_dim);

  MetricsRecord rec;
  rec.step = state.step;

  // transport cost and oracle on matched-size clouds
  {
    const Tensor xs = source.sample(settings.oracle_points, rng);
    const Tensor ys = target.sample(settings.oracle_points, rng);
    Tensor z({xs.rows(), dz});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
    const Tensor mapped = nn::generator_apply(state.g_xy, xs, z);
    double cost_acc = 0.0;
    for (std::size_t i = 0; i < xs.rows(); ++i)
      cost_acc += loss::point_cost(state.config.cost, {xs.data() + i * d, d},
                                   {mapped.data() + i * d, d});
    rec.est_transport_cost = cost_acc / static_cast<double>(xs.rows());

    const Tensor cmat = oracle::cost_matrix(state.config.cost, xs, ys);
    const std::vector<double> w(xs.rows(), 1.0 / static_cast<double>(xs.rows()));
    rec.oracle_cost = oracle::exact_ot(w, w, cmat).cost;
    rec.independent_cost = oracle::independent_coupling_cost(w, w, cmat);
  }

  // pushforward match on larger clouds
  {
    const Tensor xs = source.sample(settings.ed_points, rng);
    const Tensor ys = target.sample(settings.ed_points, rng);
    Tensor z({xs.rows(), dz});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
    const Tensor mapped = nn::generator_apply(state.g_xy, xs, z);
    rec.energy_distance_to_target = oracle::energy_distance(mapped, ys);
  }

  {
    const Tensor xs = source.sample(settings.det_sources, rng);
    rec.determinism_score =
        determinism_score(state.g_xy, xs, settings.det_draws, rng.next_u64());
  }

  if (state.g_yx) {
    const Tensor xs = source.sample(settings.oracle_points, rng);
    const Tensor ys = target.sample(settings.oracle_points, rng);
    Tensor zx({xs.rows(), dz}), zy({ys.rows(), dz});
    for (std::size_t i = 0; i < zx.size(); ++i) zx[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < zy.size(); ++i) zy[i] = rng.uniform(-1.0, 1.0);
    const Tensor fwd = nn::generator_apply(state.g_xy, xs, zx);
    const Tensor back = nn::generator_apply(*state.g_yx, fwd, zy);
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double dv = back[i] - xs[i];
      acc += dv * dv;
    }
    rec.cycle_rmse_fwd = std::sqrt(acc / static_cast<double>(xs.rows()));

    const Tensor tgt_back = nn::generator_apply(*state.g_yx, ys, zy);
    const Tensor tgt_recon = nn::generator_apply(state.g_xy, tgt_back, zx);
    acc = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double dv = tgt_recon[i] - ys[i];
      acc += dv * dv;
    }
    rec.cycle_rmse_bwd = std::sqrt(acc / static_cast<double>(ys.rows()));
  }

  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  for (double v : {rec.est_transport_cost, rec.oracle_cost, rec.independent_cost,
                   rec.energy_distance_to_target, rec.determinism_score, rec.cycle_rmse_fwd,
                   rec.cycle_rmse_bwd})
    if (!std::isfinite(v)) throw std::runtime_error("evaluate: non-finite metric");
  return rec;
}

void write_metrics_csv_header(std::ostream& os) {
  os << "est_transport_cost,oracle_cost,independent_cost,energy_distance_to_target,"
        "determinism_score,cycle_rmse_fwd,cycle_rmse_bwd,step,wall_ms\n";
}

void append_metrics_csv(std::ostream& os, const MetricsRecord& rec) {
  char row[512];
  std::snprintf(row, sizeof(row), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%.1f\n",
                rec.est_transport_cost, rec.oracle_cost, rec.independent_cost,
                rec.energy_distance_to_target, rec.determinism_score, rec.cycle_rmse_fwd,
                rec.cycle_rmse_bwd, rec.step, rec.wall_ms);
  os << row;
}

namespace {

struct SvgFrame {
  double min_x, min_y, scale;
  static constexpr double kSize = 640.0;
  static constexpr double kPad = 30.0;

  double px(double x) const { return kPad + (x - min_x) * scale; }
  double py(double y) const { return kSize - kPad - (y - min_y) * scale; }
};

SvgFrame fit_frame(const ReportClouds& clouds) {
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const Tensor* t : {&clouds.source, &clouds.target, &clouds.mapped}) {
    for (std::size_t i = 0; i < t->rows(); ++i) {
      lo_x = std::min(lo_x, t->at(i, 0));
      hi_x = std::max(hi_x, t->at(i, 0));
      lo_y = std::min(lo_y, t->at(i, 1));
      hi_y = std::max(hi_y, t->at(i, 1));
    }
  }
  if (lo_x > hi_x) lo_x = hi_x = 0.0;
  if (lo_y > hi_y) lo_y = hi_y = 0.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double scale = (SvgFrame::kSize - 2 * SvgFrame::kPad) / span;
  return {lo_x, lo_y, scale};
}

void svg_points(std::string& out, const Tensor& cloud, const SvgFrame& f, const char* color) {
  char buf[160];
  for (std::size_t i = 0; i < cloud.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\"/>\n",
                  f.px(cloud.at(i, 0)), f.py(cloud.at(i, 1)), color);
    out += buf;
  }
}

}  // namespace

std::vector<std::string> render_report(const std::vector<MetricsRecord>& records,
                                       const ReportClouds& clouds, const std::string& task,
                                       const std::string& mode, long step,
                                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  const std::string csv_path = out_dir + "/" + task + "_" + mode + "_metrics.csv";
  {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("render_report: cannot write " + csv_path);
    write_metrics_csv_header(csv);
    for (const auto& r : records) append_metrics_csv(csv, r);
  }
  written.push_back(csv_path);

  if (clouds.mapped.rows() != clouds.source.rows())
    throw std::invalid_argument("render_report: mapped rows must match source rows");
  const SvgFrame f = fit_frame(clouds);
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                static_cast<int>(SvgFrame::kSize), static_cast<int>(SvgFrame::kSize),
                static_cast<int>(SvgFrame::kSize), static_cast<int>(SvgFrame::kSize),
                static_cast<int>(SvgFrame::kSize), static_cast<int>(SvgFrame::kSize));
  svg += buf;
  for (std::size_t i = 0; i < clouds.source.rows(); ++i) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"green\" "
                  "stroke-width=\"0.5\"/>\n",
                  f.px(clouds.source.at(i, 0)), f.py(clouds.source.at(i, 1)),
                  f.px(clouds.mapped.at(i, 0)), f.py(clouds.mapped.at(i, 1)));
    svg += buf;
  }
  svg_points(svg, clouds.target, f, "red");
  svg_points(svg, clouds.mapped, f, "orange");
  svg_points(svg, clouds.source, f, "blue");
  svg += "</svg>\n";

  const std::string svg_path =
      out_dir + "/" + task + "_" + mode + "_" + std::to_string(step) + ".svg";
  std::ofstream sf(svg_path, std::ios::trunc | std::ios::binary);
  if (!sf) throw std::runtime_error("render_report: cannot write " + svg_path);
  sf << svg;
  written.push_back(svg_path);
  return written;
}

}  // namespace otmap::exp
