#pragma once

// Named presets, one per figure/appendix experiment, and a runner that executes
// a preset and writes its CSV/JSON/SVG outputs.

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "aeos/harness.hpp"
#include "aeos/plots.hpp"
#include "aeos/quadratic.hpp"
#include "aeos/stability.hpp"

namespace aeos {

/// numpy.logspace(lo, hi, n): n points evenly spaced in log10 between 10^lo and 10^hi.
inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {std::pow(10.0, lo)};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return out;
}

struct QuadraticRun {
  std::string label;
  OptimizerSpec optimizer;
};

struct QuadraticScenario {
  QuadraticObjective objective = half_square();
  Vec x0 = Vec::Ones(1);
  Vec m0 = Vec::Zero(1);
  std::optional<Vec> nu0;
  std::size_t steps = 1000;
  std::vector<QuadraticRun> runs;
};

/// AGF of `flavor` at lambda_factor times its own threshold.
struct StabilityProbe {
  std::string label;
  MomentumFlavor flavor;
  double eta = 1.0;
  double lambda_factor = 1.1;
};

struct SweepPlan {
  std::string label;
  ExperimentConfig base;
  SweepAxis axis;
};

struct ScenarioPreset {
  std::string name;
  std::string description;
  std::optional<QuadraticScenario> quadratic;
  std::vector<StabilityProbe> probes;
  std::vector<ExperimentConfig> runs;
  std::vector<SweepPlan> sweeps;
  // Compare runs[0] with the entry of sweeps[0] closest in steps-to-milestone.
  bool match_steps = false;
};

// ---- presets ------------------------------------------------------------------------

namespace detail {

inline std::string num_label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

/// Desk-scale training defaults: 1000 synthetic examples (or CIFAR-10 via
/// $AEOS_DATA_ROOT with source=auto), FC tanh 5x200, squared error, full batch.
inline ExperimentConfig desk_config(const std::string& name, const OptimizerSpec& opt,
                                    std::size_t steps) {
  ExperimentConfig c;
  c.name = name;
  c.optimizer = opt;
  c.steps = steps;
  c.data.source = DataSource::Auto;
  c.data.n_train = 1000;
  c.data.dim = 64;
  c.data.downsample = 8;
  c.eig_every = 20;
  return c;
}

inline ExperimentConfig milestone_config(const std::string& name, const OptimizerSpec& opt,
                                         double stop_loss, std::size_t max_steps) {
  auto c = desk_config(name, opt, max_steps);
  c.stop_loss = stop_loss;
  c.eig_every = 250;
  return c;
}

inline ScenarioPreset quad_preset(std::string name, std::string description,
                                  QuadraticScenario q) {
  ScenarioPreset p;
  p.name = std::move(name);
  p.description = std::move(description);
  p.quadratic = std::move(q);
  return p;
}

}  // namespace detail

/// Learning rates for the frozen and real Adam desk runs.
inline const std::vector<double>& frozen_adam_etas() {
  static const std::vector<double> v{1e-3, 1.5e-3};
  return v;
}
inline const std::vector<double>& adam_etas() {
  static const std::vector<double> v{3e-4, 1e-3};
  return v;
}

inline constexpr double kCornerEta = 1e-5;
inline constexpr std::size_t kCornerSteps = 5000;
inline constexpr std::size_t kCornerFreezeStep = 2500;

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{
      "fig2-quad",  "appB-rmsprop", "appC-agf",  "appD-corner",         "appD-freeze",
      "appD-stable-gradients",      "fig3-frozen", "fig1-adam",         "fig5-zoo",
      "fig7-sharpness-rises",       "fig9-zoomin", "fig10-sweeps",      "fig11-adam-vs-momentum"};
  return names;
}

inline ScenarioPreset scenario(const std::string& name) {
  using detail::desk_config;
  using detail::num_label;

  if (name == "fig2-quad") {
    QuadraticScenario q;
    q.steps = 10000;
    for (double eta : {30.0, 35.0, 37.0, 38.5, 39.0, 45.0}) {
      q.runs.push_back({"eta=" + num_label(eta), make_momentum(MomentumKind::EmaHB, eta, 0.9)});
    }
    return detail::quad_preset(name, "EmaHB(0.9) on 1/2 x^2 around the 38/eta boundary", q);
  }
  if (name == "appB-rmsprop") {
    QuadraticScenario q;
    q.steps = 3000;
    q.nu0 = Vec::Ones(1);
    for (double b2 : {0.9, 0.99, 0.999}) {
      q.runs.push_back({"beta2=" + num_label(b2), make_rmsprop(2.2, b2)});
    }
    return detail::quad_preset(name, "rmsprop(2.2) self-stabilization on 1/2 x^2, nu0 = 1", q);
  }
  if (name == "appD-stable-gradients") {
    QuadraticScenario q;
    q.steps = 30;
    q.m0 = Vec::Constant(1, 0.2);
    for (double eta : {20.0, 30.0, 37.0}) {
      q.runs.push_back({"eta=" + num_label(eta), make_momentum(MomentumKind::EmaHB, eta, 0.9)});
    }
    return detail::quad_preset(name, "stable EmaHB(0.9) from x0 = 1, m0 = 0.2: gradient growth", q);
  }
  if (name == "appC-agf") {
    ScenarioPreset p;
    p.name = name;
    p.description = "AGF at 1.1x threshold: heavy ball vs Nesterov vs GD";
    p.probes = {{"StandardHB(0.02,0.9)", {MomentumKind::StandardHB, 0.9}, 0.02, 1.1},
                {"StandardNesterov(0.02,0.9)", {MomentumKind::StandardNesterov, 0.9}, 0.02, 1.1},
                {"GD(0.2)", {MomentumKind::None, 0.0}, 0.2, 1.1}};
    return p;
  }

  ScenarioPreset p;
  p.name = name;
  if (name == "fig3-frozen") {
    p.description = "frozen Adam: preconditioner taken from Adam(1e-3) after 300 steps";
    for (double eta : frozen_adam_etas()) {
      auto c = desk_config("frozen_eta=" + num_label(eta), make_adam(eta), 600);
      c.nu_warmup = NuWarmup{make_adam(1e-3), 300};
      p.runs.push_back(c);
    }
  } else if (name == "fig1-adam") {
    p.description = "full-batch Adam at two learning rates";
    for (double eta : adam_etas()) {
      p.runs.push_back(
          desk_config("adam_eta=" + num_label(eta), make_adam(eta), eta < 5e-4 ? 900 : 600));
    }
  } else if (name == "fig7-sharpness-rises") {
    p.description = "Adam(3e-4): raw sharpness keeps rising after the threshold crossing";
    p.runs.push_back(desk_config("adam_eta=0.0003", make_adam(3e-4), 900));
  } else if (name == "fig9-zoomin") {
    p.description = "Adam(1e-3) with eigenvalues every 2 steps";
    auto c = desk_config("adam_eta=0.001", make_adam(1e-3), 300);
    c.eig_every = 2;
    p.runs.push_back(c);
  } else if (name == "appD-corner") {
    p.description = "Adam at a tiny learning rate";
    auto c = desk_config("adam_eta=" + num_label(kCornerEta), make_adam(kCornerEta), kCornerSteps);
    c.eig_every = 250;
    p.runs.push_back(c);
  } else if (name == "appD-freeze") {
    p.description = "tiny-learning-rate Adam, preconditioner frozen mid-run";
    auto c = desk_config("adam_eta=" + num_label(kCornerEta) + "_freeze", make_adam(kCornerEta),
                         kCornerSteps);
    c.eig_every = 250;
    c.freeze_at_step = kCornerFreezeStep;
    p.runs.push_back(c);
  } else if (name == "fig5-zoo") {
    p.description = "eight adaptive optimizers, five learning rates each";
    const auto wide = logspace(std::log10(3e-5), std::log10(1e-3), 5);
    auto add = [&](const std::string& label, const std::vector<double>& etas,
                   const std::function<OptimizerSpec(double)>& make) {
      for (double eta : etas) {
        p.runs.push_back(desk_config(label + "_eta=" + num_label(eta), make(eta), 600));
      }
    };
    add("adam_bc", wide, [](double e) { return make_adam(e, 0.9, 0.999, 1e-7, true); });
    add("adamw", wide, [](double e) { return make_adamw(e, 0.004); });
    add("adafactor", logspace(-5, -3, 5), [](double e) {
      auto s = make_adam(e, 0.9, 0.8);
      s.precond.kind = PrecondKind::AdafactorLike;
      return s;
    });
    add("amsgrad", logspace(-5, -3, 5), [](double e) {
      auto s = make_adam(e);
      s.precond.kind = PrecondKind::Amsgrad;
      return s;
    });
    add("padam", logspace(-3, -1, 5), [](double e) {
      auto s = make_adam(e);
      s.precond.kind = PrecondKind::Padam;
      s.precond.exponent = kDefaultPadamExponent;
      return s;
    });
    add("nadam", logspace(-5, -3, 5), [](double e) { return make_nadam(e); });
    add("rmsprop", logspace(-4, -3, 5), [](double e) { return make_rmsprop(e, 0.995); });
    add("adagrad", logspace(-2, -1, 5), [](double e) {
      OptimizerSpec s;
      s.eta = e;
      s.precond.kind = PrecondKind::Adagrad;
      return s;
    });
  } else if (name == "fig10-sweeps") {
    p.description = "final sharpness vs eta (beta2 = 0.999) and vs beta2 (eta = 1e-3)";
    p.sweeps.push_back({"eta", detail::milestone_config("adam", make_adam(1e-4), 0.02, 3000),
                        {"eta", {1e-4, 3e-4, 1e-3}}});
    p.sweeps.push_back({"beta2", detail::milestone_config("adam", make_adam(1e-3), 0.02, 3000),
                        {"beta2", {0.9, 0.99, 0.999}}});
  } else if (name == "fig11-adam-vs-momentum") {
    p.description = "Adam(1e-4) vs heavy ball at matched steps to the loss milestone";
    p.runs.push_back(detail::milestone_config("adam_eta=0.0001", make_adam(1e-4), 0.02, 3000));
    p.sweeps.push_back(
        {"heavy_ball",
         detail::milestone_config("hb", make_momentum(MomentumKind::StandardHB, 0.1, 0.9), 0.02,
                                  3000),
         {"eta", {0.03, 0.06, 0.1}}});
    p.match_steps = true;
  } else {
    throw std::invalid_argument("unknown scenario: " + name);
  }
  return p;
}

inline nlohmann::json to_json(const ScenarioPreset& p) {
  nlohmann::json j = {{"name", p.name}, {"description", p.description}};
  if (p.quadratic) {
    const auto& q = *p.quadratic;
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json qj = {{"A", nlohmann::json::array()},
                         {"b", vec(q.objective.b)},
                         {"c", q.objective.c},
                         {"x0", vec(q.x0)},
                         {"m0", vec(q.m0)},
                         {"steps", q.steps}};
    for (Eigen::Index r = 0; r < q.objective.A.rows(); ++r) {
      qj["A"].push_back(vec(q.objective.A.row(r).transpose()));
    }
    if (q.nu0) qj["nu0"] = vec(*q.nu0);
    for (const auto& r : q.runs) qj["runs"].push_back({{"label", r.label}, {"optimizer", to_json(r.optimizer)}});
    j["quadratic"] = qj;
  }
  for (const auto& pr : p.probes) {
    j["probes"].push_back({{"label", pr.label},
                           {"kind", std::string(to_string(pr.flavor.kind))},
                           {"beta1", pr.flavor.beta1},
                           {"eta", pr.eta},
                           {"lambda_factor", pr.lambda_factor}});
  }
  for (const auto& r : p.runs) j["runs"].push_back(to_json(r));
  for (const auto& s : p.sweeps) {
    j["sweeps"].push_back({{"label", s.label},
                           {"parameter", s.axis.parameter},
                           {"values", s.axis.values},
                           {"base", to_json(s.base)}});
  }
  if (p.match_steps) j["match_steps"] = true;
  return j;
}

// ---- runner -------------------------------------------------------------------------

/// quad-run CSV: step,x0..x{d-1},grad_norm,nu0..nu{d-1}.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const Eigen::Index d = traj.steps.empty() ? 0 : traj.steps.front().x.size();
  out << "step";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x" << i;
  out << ",grad_norm";
  for (Eigen::Index i = 0; i < d; ++i) out << ",nu" << i;
  out << "\n";
  for (const auto& s : traj.steps) {
    out << s.t;
    for (Eigen::Index i = 0; i < d; ++i) out << "," << detail::fmt_num(s.x[i]);
    out << "," << detail::fmt_num(s.grad_norm);
    for (Eigen::Index i = 0; i < d; ++i) out << "," << detail::fmt_num(s.nu[i]);
    out << "\n";
  }
}

inline void write_trajectory_csv(const Trajectory& traj, const fs::path& path) {
  auto out = detail::open_for_write(path);
  write_trajectory_csv(traj, out);
}

struct QuadraticOutcome {
  std::string label;
  Trajectory trajectory;
  TrajectoryVerdict verdict;
};

struct ProbeOutcome {
  StabilityProbe probe;
  StabilityReport report;
};

/// runs[0] of a match_steps preset against the closest sweeps[0] entry.
struct MatchedComparison {
  std::size_t reference_steps = 0;
  double reference_sharpness = 0.0;
  double matched_value = 0.0;
  std::size_t matched_steps = 0;
  double matched_sharpness = 0.0;
};

struct ScenarioResult {
  std::string name;
  std::vector<QuadraticOutcome> quadratic;
  std::vector<ProbeOutcome> probes;
  std::vector<std::pair<std::string, RunResult>> runs;
  std::vector<std::vector<SweepEntry>> sweeps;
  std::optional<MatchedComparison> match;
};

/// Closest-steps reached-milestone entry; nullopt when none reached it.
inline std::optional<MatchedComparison> match_by_steps(const RunResult& reference,
                                                       const std::vector<SweepEntry>& entries) {
  if (!reference.reached_stop_loss || !reference.final_sharpness()) return std::nullopt;
  std::optional<MatchedComparison> best;
  for (const auto& e : entries) {
    if (!e.ok || !e.reached_milestone || !e.final_sharpness) continue;
    const auto gap = [&](std::size_t s) {
      return s > reference.steps_run ? s - reference.steps_run : reference.steps_run - s;
    };
    if (!best || gap(e.steps_to_milestone) < gap(best->matched_steps)) {
      best = MatchedComparison{reference.steps_run, *reference.final_sharpness(), e.value,
                               e.steps_to_milestone, *e.final_sharpness};
    }
  }
  return best;
}

namespace detail {

inline void parallel_for(std::size_t n, std::size_t parallelism,
                         const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(parallelism, n));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < k; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

/// Executes a preset. With out_dir set, writes per-run directories (metrics.csv,
/// eigs.csv, summary.json, params.bin, plots), comparison plots, and a
/// scenario.json summary.
inline ScenarioResult run_scenario(const ScenarioPreset& preset,
                                   const std::optional<fs::path>& out_dir = std::nullopt,
                                   std::size_t parallelism = 1) {
  ScenarioResult res;
  res.name = preset.name;
  nlohmann::json summary = {{"scenario", to_json(preset)}};
  if (out_dir) fs::create_directories(*out_dir);

  if (preset.quadratic) {
    const auto& q = *preset.quadratic;
    QuadRunOptions opts;
    opts.nu0 = q.nu0;
    PlotSpec chart;
    chart.title = preset.name + ": |x_t|";
    chart.y_label = "|x|";
    chart.log_y = true;
    for (const auto& r : q.runs) {
      QuadraticOutcome o{r.label, run_quadratic(q.objective, r.optimizer, q.x0, q.m0, q.steps, opts), {}};
      o.verdict = classify(o.trajectory);
      nlohmann::json rj = {{"label", r.label},
                           {"classification", to_string(o.verdict.classification)},
                           {"peak_abs", o.verdict.peak_abs},
                           {"steps", o.trajectory.steps.size() - 1},
                           {"threshold", frozen_threshold(r.optimizer)}};
      if (o.verdict.first_unstable_step) rj["first_unstable_step"] = *o.verdict.first_unstable_step;
      double g0 = o.trajectory.steps.front().grad_norm, gmax = 0.0;
      for (std::size_t t = 1; t < o.trajectory.steps.size(); ++t) {
        gmax = std::max(gmax, o.trajectory.steps[t].grad_norm);
      }
      rj["max_grad_sq_over_initial"] = g0 > 0.0 ? (gmax * gmax) / (g0 * g0) : 0.0;
      summary["quadratic"].push_back(rj);
      if (out_dir) {
        write_trajectory_csv(o.trajectory, *out_dir / (r.label + ".csv"));
        PlotSeries s;
        s.label = r.label;
        for (const auto& st : o.trajectory.steps) {
          s.x.push_back(static_cast<double>(st.t));
          s.y.push_back(st.x.norm());
        }
        chart.series.push_back(std::move(s));
      }
      res.quadratic.push_back(std::move(o));
    }
    if (out_dir && !chart.series.empty()) write_svg(*out_dir / (preset.name + ".svg"), chart);
  }

  for (const auto& pr : preset.probes) {
    const double lam = pr.lambda_factor * stability_threshold(pr.flavor, pr.eta);
    ProbeOutcome o{pr, stability_report(pr.flavor, pr.eta, lam)};
    summary["probes"].push_back({{"label", pr.label},
                                 {"threshold", o.report.threshold},
                                 {"lambda", lam},
                                 {"agf", o.report.agf}});
    res.probes.push_back(o);
  }
  if (out_dir && !res.probes.empty()) {
    auto csv = detail::open_for_write(*out_dir / "agf.csv");
    csv << "label,eta,threshold,lambda,agf\n";
    for (const auto& o : res.probes) {
      csv << o.probe.label << "," << o.probe.eta << "," << detail::fmt_num(o.report.threshold)
          << "," << detail::fmt_num(o.report.probed_eigenvalue) << ","
          << detail::fmt_num(o.report.agf) << "\n";
    }
  }

  if (!preset.runs.empty()) {
    res.runs.resize(preset.runs.size());
    detail::parallel_for(preset.runs.size(), parallelism, [&](std::size_t i) {
      auto cfg = preset.runs[i];
      cfg.scenario = preset.name;
      std::optional<fs::path> dir;
      if (out_dir) dir = *out_dir / cfg.name;
      res.runs[i] = {cfg.name, run_experiment(cfg, dir)};
      if (dir && !res.runs[i].second.log.empty()) emit_plots(res.runs[i].second.log, *dir, "run");
    });
    std::vector<std::pair<std::string, MetricsLog>> logs;
    for (const auto& [label, r] : res.runs) {
      const auto eq = assess_equilibrium(r.log);
      const auto sh = sharpening_after_crossing(r.log);
      nlohmann::json rj = {{"name", label},
                           {"ok", r.ok()},
                           {"steps_run", r.steps_run},
                           {"threshold", r.threshold},
                           {"final_sharpness", detail::opt_json(r.final_sharpness())},
                           {"final_precond_sharpness", detail::opt_json(r.final_precond_sharpness())},
                           {"final_third_median_ratio", eq.median_ratio},
                           {"final_third_drift", eq.drift},
                           {"equilibrated", eq.equilibrated()}};
      if (sh) {
        rj["crossing_step"] = sh->crossing_step;
        rj["sharpness_at_crossing"] = sh->at_crossing;
        rj["sharpness_at_end"] = sh->at_end;
      }
      if (r.log.failure) rj["failure"] = r.log.failure->message;
      summary["runs"].push_back(rj);
      if (!r.log.checkpoints().empty()) logs.emplace_back(label, r.log);
    }
    if (out_dir && !logs.empty()) emit_comparison_plot(logs, *out_dir, preset.name);
  }

  for (std::size_t i = 0; i < preset.sweeps.size(); ++i) {
    const auto& plan = preset.sweeps[i];
    std::optional<fs::path> dir;
    if (out_dir) dir = *out_dir / ("sweep_" + plan.label);
    res.sweeps.push_back(sweep(plan.base, plan.axis, dir, parallelism));
    nlohmann::json sj = {{"label", plan.label}, {"parameter", plan.axis.parameter}};
    for (const auto& e : res.sweeps.back()) sj["entries"].push_back(to_json(e));
    summary["sweeps"].push_back(sj);
  }

  if (preset.match_steps && !res.runs.empty() && !res.sweeps.empty()) {
    res.match = match_by_steps(res.runs.front().second, res.sweeps.front());
    if (res.match) {
      summary["match"] = {{"reference_steps", res.match->reference_steps},
                          {"reference_sharpness", res.match->reference_sharpness},
                          {"matched_value", res.match->matched_value},
                          {"matched_steps", res.match->matched_steps},
                          {"matched_sharpness", res.match->matched_sharpness}};
    } else {
      summary["match"] = nullptr;
    }
  }

  if (out_dir) std::ofstream(*out_dir / "scenario.json") << summary.dump(2) << "\n";
  return res;
}

}  // namespace aeos
