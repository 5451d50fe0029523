// aeos command-line tool.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "aeos/curvature.hpp"
#include "aeos/dataset_io.hpp"
#include "aeos/harness.hpp"
#include "aeos/optimizer_json.hpp"
#include "aeos/plots.hpp"
#include "aeos/quadratic.hpp"
#include "aeos/scenarios.hpp"
#include "aeos/stability.hpp"

using namespace aeos;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json read_json_arg(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') return nlohmann::json::parse(arg);
  std::ifstream in(arg);
  if (!in) throw std::runtime_error("cannot open " + arg);
  return nlohmann::json::parse(in);
}

/// One row per line, space-separated.
Mat read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": empty matrix");
  Mat A(rows.size(), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw std::invalid_argument(path + ": matrix must be square");
    for (std::size_t c = 0; c < rows.size(); ++c) A(r, c) = rows[r][c];
  }
  return A;
}

std::vector<MomentumKind> parse_flavors(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllMomentumKinds.begin(), kAllMomentumKinds.end()};
  std::vector<MomentumKind> out;
  for (const auto& n : names) out.push_back(momentum_kind_from_string(n));
  return out;
}

void stability_row(std::ostream& out, MomentumKind kind, double beta1, double eta, double lambda) {
  const MomentumFlavor f{kind, beta1};
  const auto rep = stability_report(f, eta, lambda);
  out << to_string(kind) << "," << beta1 << "," << eta << "," << detail::fmt_num(lambda) << ","
      << detail::fmt_num(rep.threshold) << "," << detail::fmt_num(rep.agf) << ","
      << (is_stable(f, eta, lambda) ? "true" : "false") << "\n";
}

constexpr const char* kStabilityHeader = "flavor,beta1,eta,lambda,threshold,agf,stable";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive edge-of-stability toolkit: thresholds, quadratic runs, training with "
               "curvature telemetry, sweeps, scenarios and plots."};
  app.require_subcommand(1);

  // threshold
  std::vector<std::string> th_flavors;
  std::vector<double> th_beta1{0.0, 0.5, 0.9}, th_eta{1e-3, 1e-1, 1.0};
  auto* th = app.add_subcommand("threshold", "stability thresholds (CSV; lambda = threshold)");
  th->add_option("--flavor", th_flavors, "momentum kinds (default: all)");
  th->add_option("--beta1", th_beta1, "beta1 values");
  th->add_option("--eta", th_eta, "learning rates");

  // agf
  std::vector<std::string> agf_flavors;
  std::vector<double> agf_beta1{0.9}, agf_eta{1e-3}, agf_lambda, agf_factor;
  std::string agf_grid;
  auto* agf = app.add_subcommand("agf", "asymptotic growth factor over a lambda grid (CSV)");
  agf->add_option("--flavor", agf_flavors, "momentum kinds (default: all)");
  agf->add_option("--beta1", agf_beta1, "beta1 values");
  agf->add_option("--eta", agf_eta, "learning rates");
  agf->add_option("--lambda", agf_lambda, "absolute eigenvalues");
  agf->add_option("--factor", agf_factor, "eigenvalues as multiples of each threshold");
  agf->add_option("--grid", agf_grid, "lo:hi:n multiples of the threshold, linear");

  // quad-run
  std::string qr_opt, qr_a, qr_b, qr_matrix, qr_x0, qr_m0, qr_nu0, qr_out;
  double qr_c = 0.0;
  std::size_t qr_steps = 100;
  auto* qr = app.add_subcommand("quad-run", "run an optimizer on 1/2 x^T A x + b^T x + c (CSV)");
  qr->add_option("--optimizer", qr_opt, "optimizer JSON (file path or inline object)")->required();
  qr->add_option("--a", qr_a, "A: d values (diagonal) or d*d values (row-major), comma-separated");
  qr->add_option("--b", qr_b, "b, comma-separated (default zeros)");
  qr->add_option("--c", qr_c, "constant c");
  qr->add_option("--matrix", qr_matrix, "file with A, one row per line, space-separated");
  qr->add_option("--x0", qr_x0, "initial iterate (default ones)");
  qr->add_option("--m0", qr_m0, "initial momentum (default zeros)");
  qr->add_option("--nu0", qr_nu0, "initial second moment (default zeros)");
  qr->add_option("--steps", qr_steps, "number of steps")->check(CLI::PositiveNumber);
  qr->add_option("--out", qr_out, "output CSV (default stdout)");

  // train
  std::string tr_config, tr_out = "runs/train";
  std::optional<std::size_t> tr_steps;
  bool tr_plots = true;
  auto* tr = app.add_subcommand("train", "train per a config; writes metrics.csv, summary.json, plots");
  tr->add_option("--config", tr_config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--steps", tr_steps, "override the step limit");
  tr->add_flag("!--no-plots", tr_plots, "skip SVG/CSV plot output");

  // sweep
  std::string sw_config, sw_param, sw_values, sw_out = "runs/sweep";
  std::size_t sw_parallel = 1;
  auto* sw = app.add_subcommand("sweep", "grid sweep over one config parameter");
  sw->add_option("--config", sw_config, "base experiment config JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--param", sw_param, "parameter to sweep")->required();
  sw->add_option("--values", sw_values, "comma-separated values")->required();
  sw->add_option("--out", sw_out, "output directory");
  sw->add_option("--parallel", sw_parallel, "concurrent runs")->check(CLI::PositiveNumber);

  // eigs
  std::string eg_params, eg_config, eg_precond;
  std::size_t eg_k = 1, eg_max_iter = 300;
  double eg_tol = 1e-6;
  std::uint64_t eg_seed = 0;
  auto* eg = app.add_subcommand("eigs", "top Hessian eigenvalues at a parameter snapshot (JSON)");
  eg->add_option("--params", eg_params, "parameter snapshot (params.bin)")->required()->check(CLI::ExistingFile);
  eg->add_option("--config", eg_config, "experiment config giving model, data and loss")->required()->check(CLI::ExistingFile);
  eg->add_option("--precond", eg_precond, "diagonal preconditioner snapshot; reports eigenvalues of P^-1 H");
  eg->add_option("--k", eg_k, "number of eigenvalues")->check(CLI::PositiveNumber);
  eg->add_option("--tol", eg_tol, "relative residual tolerance");
  eg->add_option("--max-iter", eg_max_iter, "maximum Krylov dimension");
  eg->add_option("--seed", eg_seed, "start vector seed");

  // scenario
  std::string sc_name, sc_out;
  std::size_t sc_parallel = 1;
  bool sc_list = false, sc_print = false;
  auto* sc = app.add_subcommand("scenario", "run a named preset");
  sc->add_option("name", sc_name, "preset name");
  sc->add_flag("--list", sc_list, "list preset names");
  sc->add_flag("--print", sc_print, "print the preset as JSON without running it");
  sc->add_option("--out", sc_out, "output directory (default runs/<name>)");
  sc->add_option("--parallel", sc_parallel, "concurrent runs")->check(CLI::PositiveNumber);

  // plot
  std::string pl_metrics, pl_out = ".", pl_stem = "run";
  std::vector<std::string> pl_compare;
  auto* pl = app.add_subcommand("plot", "plot data and SVG charts from metrics.csv files");
  pl->add_option("--metrics", pl_metrics, "metrics.csv of one run")->check(CLI::ExistingFile);
  pl->add_option("--compare", pl_compare, "label=path/to/metrics.csv, repeatable");
  pl->add_option("--out", pl_out, "output directory");
  pl->add_option("--stem", pl_stem, "file name stem");

  CLI11_PARSE(app, argc, argv);

  try {
    if (th->parsed()) {
      std::cout << kStabilityHeader << "\n";
      for (auto kind : parse_flavors(th_flavors)) {
        for (double b : th_beta1) {
          for (double eta : th_eta) {
            stability_row(std::cout, kind, b, eta, stability_threshold({kind, b}, eta));
          }
        }
      }
    } else if (agf->parsed()) {
      std::vector<double> factors = agf_factor;
      if (!agf_grid.empty()) {
        std::vector<double> g;
        std::stringstream ss(agf_grid);
        std::string tok;
        while (std::getline(ss, tok, ':')) g.push_back(std::stod(tok));
        if (g.size() != 3 || g[2] < 1) throw std::invalid_argument("--grid expects lo:hi:n");
        const auto n = static_cast<std::size_t>(g[2]);
        for (std::size_t i = 0; i < n; ++i) {
          factors.push_back(n == 1 ? g[0] : g[0] + (g[1] - g[0]) * static_cast<double>(i) / static_cast<double>(n - 1));
        }
      }
      if (factors.empty() && agf_lambda.empty()) factors = {0.5, 0.9, 1.0, 1.1, 1.5};
      std::cout << kStabilityHeader << "\n";
      for (auto kind : parse_flavors(agf_flavors)) {
        for (double b : agf_beta1) {
          for (double eta : agf_eta) {
            const double thr = stability_threshold({kind, b}, eta);
            for (double lam : agf_lambda) stability_row(std::cout, kind, b, eta, lam);
            for (double f : factors) stability_row(std::cout, kind, b, eta, f * thr);
          }
        }
      }
    } else if (qr->parsed()) {
      const auto spec = optimizer_spec_from_json(read_json_arg(qr_opt));
      QuadraticObjective obj;
      if (!qr_matrix.empty()) {
        obj.A = read_matrix_file(qr_matrix);
      } else {
        const auto a = parse_list(qr_a.empty() ? "1" : qr_a);
        const auto bsz = qr_b.empty() ? 0 : parse_list(qr_b).size();
        std::size_t d = bsz ? bsz : a.size();
        if (a.size() == d) {
          obj.A = to_vec(a).asDiagonal();
        } else if (a.size() == d * d || (bsz == 0 && std::sqrt(a.size()) == std::floor(std::sqrt(a.size())))) {
          d = static_cast<std::size_t>(std::lround(std::sqrt(a.size())));
          obj.A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
              a.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        } else {
          throw std::invalid_argument("--a must have d or d*d values");
        }
      }
      const Eigen::Index d = obj.A.rows();
      obj.b = qr_b.empty() ? Vec::Zero(d) : to_vec(parse_list(qr_b));
      obj.c = qr_c;
      const Vec x0 = qr_x0.empty() ? Vec::Ones(d) : to_vec(parse_list(qr_x0));
      const Vec m0 = qr_m0.empty() ? Vec::Zero(d) : to_vec(parse_list(qr_m0));
      QuadRunOptions opts;
      if (!qr_nu0.empty()) opts.nu0 = to_vec(parse_list(qr_nu0));
      const auto traj = run_quadratic(obj, spec, x0, m0, qr_steps, opts);
      if (qr_out.empty()) {
        write_trajectory_csv(traj, std::cout);
      } else {
        write_trajectory_csv(traj, fs::path(qr_out));
      }
      const auto v = classify(traj);
      std::cerr << "classification: " << to_string(v.classification) << "\n";
    } else if (tr->parsed()) {
      auto cfg = load_experiment_config(tr_config);
      if (tr_steps) cfg.steps = *tr_steps;
      const auto r = run_experiment(cfg, fs::path(tr_out));
      if (tr_plots && !r.log.empty()) emit_plots(r.log, tr_out, "run");
      std::cout << summary_json(cfg, r).dump(2) << "\n";
      if (!r.ok()) return 3;
    } else if (sw->parsed()) {
      const auto base = load_experiment_config(sw_config);
      const auto entries = sweep(base, {sw_param, parse_list(sw_values)}, fs::path(sw_out), sw_parallel);
      nlohmann::json j;
      for (const auto& e : entries) j.push_back(to_json(e));
      std::cout << j.dump(2) << "\n";
    } else if (eg->parsed()) {
      const auto cfg = load_experiment_config(eg_config);
      const auto data = load_data(cfg.data);
      const auto model = cfg.model.build(data.train.dim(), data.train.classes);
      const LossSurface surface(model, data.train, cfg.loss);
      const Vec x = read_vector(eg_params);
      if (static_cast<std::size_t>(x.size()) != model.num_params()) {
        throw std::invalid_argument("snapshot size does not match the config's model");
      }
      LinearOperator op = [&](const Vec& v) { return hessian_vector_product(surface, x, v); };
      if (!eg_precond.empty()) op = preconditioned_operator(op, read_vector(eg_precond));
      TopEigsOptions o;
      o.tol = eg_tol;
      o.max_iter = eg_max_iter;
      o.seed = eg_seed;
      const auto e = top_eigs(op, static_cast<std::size_t>(x.size()), eg_k, o);
      std::cout << nlohmann::json{{"lambda", e.eigenvalues},
                                  {"residuals", e.residuals},
                                  {"converged", e.converged}}
                       .dump(2)
                << "\n";
      if (!e.converged) return 4;
    } else if (sc->parsed()) {
      if (sc_list) {
        for (const auto& n : scenario_names()) std::cout << n << "  " << scenario(n).description << "\n";
        return 0;
      }
      if (sc_name.empty()) throw std::invalid_argument("scenario name required (see --list)");
      const auto preset = scenario(sc_name);
      if (sc_print) {
        std::cout << to_json(preset).dump(2) << "\n";
        return 0;
      }
      const fs::path out = sc_out.empty() ? fs::path("runs") / sc_name : fs::path(sc_out);
      run_scenario(preset, out, sc_parallel);
      std::ifstream in(out / "scenario.json");
      std::cout << in.rdbuf();
    } else if (pl->parsed()) {
      if (pl_metrics.empty() && pl_compare.empty()) throw std::invalid_argument("need --metrics or --compare");
      if (!pl_metrics.empty()) emit_plots(read_metrics_csv(pl_metrics), pl_out, pl_stem);
      if (!pl_compare.empty()) {
        std::vector<std::pair<std::string, MetricsLog>> runs;
        for (const auto& item : pl_compare) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw std::invalid_argument("--compare expects label=path");
          runs.emplace_back(item.substr(0, eq), read_metrics_csv(item.substr(eq + 1)));
        }
        emit_comparison_plot(runs, pl_out, pl_stem + "_compare");
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
