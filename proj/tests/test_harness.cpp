#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "aeos/harness.hpp"
#include "aeos/plots.hpp"
#include "aeos/scenarios.hpp"

using namespace aeos;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aeos_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config(std::size_t steps = 12) {
  ExperimentConfig c;
  c.name = "tiny";
  c.optimizer = make_adam(1e-3);
  c.model.hidden = {12, 12};
  c.data.source = DataSource::Synthetic;
  c.data.n_train = 40;
  c.data.n_test = 20;
  c.data.dim = 6;
  c.data.classes = 3;
  c.steps = steps;
  c.eig_every = 5;
  c.eig_tol = 1e-6;
  return c;
}

MetricsRecord rec(std::size_t step, std::optional<double> plam, double thr = 100.0,
                  std::optional<double> lam = std::nullopt) {
  MetricsRecord r;
  r.step = step;
  r.threshold = thr;
  r.precond_sharpness = plam;
  r.sharpness = plam ? std::optional<double>(lam.value_or(*plam / 10.0)) : std::nullopt;
  return r;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = tiny_config();
  c.stop_loss = 0.05;
  c.batch_size = 8;
  c.freeze_at_step = 7;
  c.nu_warmup = NuWarmup{make_adam(2e-3), 3};
  c.scenario = "fig1-adam";
  c.optimizer.weight_decay = 0.01;
  const auto j = to_json(c);
  const auto back = experiment_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.batch_size, 8u);
  EXPECT_EQ(*back.freeze_at_step, 7u);
  EXPECT_EQ(back.nu_warmup->steps, 3u);
}

TEST(Config, FullBatchKeywordAndDefaults) {
  const auto c = experiment_config_from_json(
      nlohmann::json::parse(R"({"optimizer": {"eta": 0.01}, "batch_size": "full"})"));
  EXPECT_EQ(c.batch_size, 0u);
  EXPECT_EQ(c.optimizer.eta, 0.01);
  EXPECT_EQ(c.eig_every, 20u);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"batch_size": "half"})")),
               std::invalid_argument);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"eig_every": 0})")),
               std::invalid_argument);
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch("cfg");
  std::ofstream(dir / "c.json") << to_json(tiny_config()).dump();
  EXPECT_EQ(to_json(load_experiment_config(dir / "c.json")), to_json(tiny_config()));
  EXPECT_THROW(load_experiment_config(dir / "missing.json"), std::runtime_error);
}

TEST(Data, CifarSourceWithoutFilesIsAnError) {
  DataSpec d;
  d.source = DataSource::Cifar10;
  d.path = "/nonexistent/cifar";
  EXPECT_THROW(load_data(d), std::runtime_error);
  d.source = DataSource::Auto;
  EXPECT_EQ(load_data(d).source, "synthetic");
}

TEST(Data, EnvironmentRootIsConsulted) {
  const auto dir = scratch("envroot");
  setenv(kDataRootEnv, dir.c_str(), 1);
  DataSpec d;
  EXPECT_FALSE(cifar_root(d).has_value());
  std::ofstream(dir / "data_batch_1.bin") << "x";
  ASSERT_TRUE(cifar_root(d).has_value());
  EXPECT_EQ(*cifar_root(d), dir);
  unsetenv(kDataRootEnv);
}

TEST(Metrics, HeaderIsExact) {
  EXPECT_STREQ(kMetricsHeader,
               "step,train_loss,test_loss,grad_norm,sharpness,precond_sharpness,threshold,"
               "align_topk,align_rest");
}

TEST(Metrics, CsvRoundTripKeepsAbsentCells) {
  MetricsLog log;
  log.records.push_back(rec(0, 5.0));
  log.records.push_back(rec(1, std::nullopt));
  log.records[0].align_topk = 0.25;
  log.records[0].align_rest = 0.75;
  const auto dir = scratch("csv");
  write_metrics_csv(log, dir / "m.csv");
  const auto back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(*back.records[0].precond_sharpness, 5.0);
  EXPECT_EQ(*back.records[0].align_rest, 0.75);
  EXPECT_FALSE(back.records[1].precond_sharpness.has_value());
  EXPECT_FALSE(back.records[1].test_loss.has_value());
  std::ofstream(dir / "bad.csv") << "step,loss\n0,1\n";
  EXPECT_THROW(read_metrics_csv(dir / "bad.csv"), FormatError);
}

TEST(Run, ZeroStepsRecordsInitOnly) {
  auto c = tiny_config(0);
  const auto r = run_experiment(c);
  ASSERT_EQ(r.log.records.size(), 1u);
  EXPECT_EQ(r.steps_run, 0u);
  const auto data = load_data(c.data);
  EXPECT_EQ(r.final_params, init_params(c.model.build(data.train.dim(), data.train.classes)));
  EXPECT_TRUE(r.log.records[0].is_checkpoint());
}

TEST(Run, CadenceThresholdAndOutputs) {
  auto c = tiny_config(12);
  c.alignment = true;
  c.eig_k = 2;
  const auto dir = scratch("run");
  const auto r = run_experiment(c, dir);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.log.records.size(), 13u);
  EXPECT_DOUBLE_EQ(r.threshold, 38.0 / 1e-3);
  for (const auto& x : r.log.records) {
    const bool on = x.step % 5 == 0 || x.step == 12;
    EXPECT_EQ(x.precond_sharpness.has_value(), on) << x.step;
    EXPECT_EQ(x.sharpness.has_value(), on);
    EXPECT_EQ(x.test_loss.has_value(), on);
    EXPECT_EQ(x.align_topk.has_value(), on);
    EXPECT_EQ(x.threshold, r.threshold);
    if (on) {
      EXPECT_GT(*x.sharpness, 0.0);
      EXPECT_NEAR(*x.align_topk + *x.align_rest, 1.0, 1e-9);
    }
  }
  for (const char* f : {"metrics.csv", "eigs.csv", "summary.json", "params.bin", "precond.bin"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(slurp(dir / "metrics.csv").substr(0, std::string(kMetricsHeader).size()),
            kMetricsHeader);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["data_source"], "synthetic");
  EXPECT_EQ(summary["steps_run"], 12);
  EXPECT_EQ(read_vector(dir / "params.bin"), r.final_params);
  EXPECT_EQ(read_vector(dir / "precond.bin"), r.final_precond);
  EXPECT_EQ(r.final_precond.size(), r.final_params.size());
  EXPECT_EQ(read_metrics_csv(dir / "metrics.csv").records.size(), 13u);
}

TEST(Run, PreconditionedSharpnessUsesUpcomingPreconditioner) {
  // At step 0 the Adam state has nu = 0; the reported P must include g_0^2.
  auto c = tiny_config(0);
  const auto r = run_experiment(c);
  const auto& x = r.log.records[0];
  EXPECT_LT(*x.precond_sharpness, *x.sharpness / kDefaultEpsilon * 1e-2);
}

TEST(Run, ReplayIsByteIdentical) {
  auto c = tiny_config(10);
  c.batch_size = 16;
  const auto a = scratch("replay_a"), b = scratch("replay_b");
  run_experiment(c, a);
  run_experiment(c, b);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "eigs.csv"), slurp(b / "eigs.csv"));
}

TEST(Run, StopLossEndsEarly) {
  auto c = tiny_config(500);
  c.optimizer = make_adam(1e-2);
  c.stop_loss = 0.5;
  c.eig_every = 1000;
  const auto r = run_experiment(c);
  ASSERT_TRUE(r.reached_stop_loss);
  EXPECT_LT(r.log.records.back().train_loss, 0.5);
  EXPECT_GE(r.log.records[r.log.records.size() - 2].train_loss, 0.5);
  EXPECT_TRUE(r.log.records.back().is_checkpoint());
  EXPECT_EQ(r.steps_run + 1, r.log.records.size());
}

TEST(Run, DivergenceKeepsPartialLog) {
  auto c = tiny_config(200);
  c.optimizer = make_gd(1e6);
  c.eig_every = 1000;
  const auto dir = scratch("diverge");
  const auto r = run_experiment(c, dir);
  ASSERT_FALSE(r.ok());
  EXPECT_FALSE(r.log.empty());
  EXPECT_LT(r.log.records.size(), 201u);
  EXPECT_EQ(read_metrics_csv(dir / "metrics.csv").records.size(), r.log.records.size());
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_FALSE(summary["failure"].is_null());
}

TEST(Run, FreezeStopsPreconditionerUpdates) {
  auto a = tiny_config(10), b = tiny_config(10);
  b.freeze_at_step = 4;
  const auto ra = run_experiment(a), rb = run_experiment(b);
  // Identical until the first post-freeze step changes x.
  for (std::size_t t = 0; t <= 4; ++t) {
    EXPECT_EQ(ra.log.records[t].train_loss, rb.log.records[t].train_loss) << t;
  }
  EXPECT_NE(ra.final_params, rb.final_params);
}

TEST(Run, WarmupFreezesFromTheStart) {
  auto c = tiny_config(6);
  c.nu_warmup = NuWarmup{make_adam(1e-3), 5};
  const auto r = run_experiment(c);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.log.records.size(), 7u);
  // Same init and loss at step 0; different trajectory afterwards.
  const auto plain = run_experiment(tiny_config(6));
  EXPECT_EQ(r.log.records[0].train_loss, plain.log.records[0].train_loss);
  EXPECT_NE(r.final_params, plain.final_params);
}

TEST(Analysis, EquilibriumOnSyntheticLog) {
  MetricsLog log;
  for (std::size_t s = 0; s <= 300; s += 10) log.records.push_back(rec(s, s < 100 ? 10.0 + s : 95.0 + (s % 20 == 0 ? 8 : -8)));
  const auto eq = assess_equilibrium(log);
  EXPECT_GE(eq.samples, 10u);
  EXPECT_NEAR(eq.median_ratio, 1.03, 1e-12);
  EXPECT_TRUE(eq.equilibrated());

  MetricsLog low;
  for (std::size_t s = 0; s <= 300; s += 10) low.records.push_back(rec(s, 50.0));
  EXPECT_FALSE(assess_equilibrium(low).in_band);

  MetricsLog trending;
  for (std::size_t s = 0; s <= 300; s += 10) trending.records.push_back(rec(s, 60.0 + 0.5 * s));
  EXPECT_FALSE(assess_equilibrium(trending).flat);
  EXPECT_THROW(assess_equilibrium(MetricsLog{}), std::invalid_argument);
}

TEST(Analysis, SharpeningAfterCrossing) {
  MetricsLog log;
  log.records.push_back(rec(0, 50.0, 100.0, 5.0));
  log.records.push_back(rec(10, 101.0, 100.0, 7.0));
  log.records.push_back(rec(15, std::nullopt));
  log.records.push_back(rec(20, 99.0, 100.0, 9.0));
  const auto sh = sharpening_after_crossing(log);
  ASSERT_TRUE(sh.has_value());
  EXPECT_EQ(sh->crossing_step, 10u);
  EXPECT_EQ(sh->at_crossing, 7.0);
  EXPECT_EQ(sh->at_end, 9.0);
  EXPECT_TRUE(sh->rises());
  MetricsLog never;
  never.records.push_back(rec(0, 1.0));
  EXPECT_FALSE(sharpening_after_crossing(never).has_value());
}

TEST(Analysis, UnstableStepsFollowMostRecentCheckpoint) {
  MetricsLog log;
  log.records.push_back(rec(0, 90.0));
  log.records.push_back(rec(1, std::nullopt));
  log.records.push_back(rec(2, 110.0));
  log.records.push_back(rec(3, std::nullopt));
  log.records.push_back(rec(4, 100.0));  // equal is not above
  log.records.push_back(rec(5, std::nullopt));
  EXPECT_EQ(unstable_steps(log), (std::vector<std::size_t>{2, 3}));
  for (std::size_t s : unstable_steps(log)) {
    const MetricsRecord* last = nullptr;
    for (const auto& r : log.records) {
      if (r.step <= s && r.is_checkpoint()) last = &r;
    }
    ASSERT_NE(last, nullptr);
    EXPECT_GT(*last->precond_sharpness, last->threshold);
  }
}

TEST(Sweep, AxisApplication) {
  const auto base = tiny_config();
  EXPECT_EQ(apply_axis(base, "beta2", 0.99).optimizer.precond.beta2, 0.99);
  EXPECT_EQ(apply_axis(base, "batch_size", 8).batch_size, 8u);
  EXPECT_EQ(apply_axis(base, "stop_loss", 0.1).stop_loss, 0.1);
  EXPECT_THROW(apply_axis(base, "batch_size", 2.5), std::invalid_argument);
  EXPECT_THROW(apply_axis(base, "nonsense", 1.0), std::invalid_argument);
  EXPECT_THROW(apply_axis(base, "eta", -1.0), std::invalid_argument);
  EXPECT_THROW(sweep(base, {"nonsense", {1.0}}), std::invalid_argument);
}

TEST(Sweep, OrderedResultsAndRecordedFailures) {
  auto base = tiny_config(8);
  base.eig_every = 100;
  const auto dir = scratch("sweep");
  const auto entries = sweep(base, {"eta", {1e-3, -1.0, 2e-3, 3e-3}}, dir, 3);
  ASSERT_EQ(entries.size(), 4u);
  EXPECT_EQ(entries[0].value, 1e-3);
  EXPECT_EQ(entries[3].value, 3e-3);
  EXPECT_TRUE(entries[0].ok);
  EXPECT_FALSE(entries[1].ok);
  EXPECT_FALSE(entries[1].error.empty());
  EXPECT_TRUE(entries[2].ok);
  EXPECT_DOUBLE_EQ(entries[2].threshold, 38.0 / 2e-3);
  EXPECT_TRUE(entries[3].final_sharpness.has_value());
  const auto j = nlohmann::json::parse(slurp(dir / "sweep.json"));
  EXPECT_EQ(j["entries"].size(), 4u);
  // Parallel results equal sequential ones.
  const auto seq = sweep(base, {"eta", {1e-3, -1.0, 2e-3, 3e-3}}, std::nullopt, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(to_json(seq[i]), to_json(entries[i])) << i;
  }
}

TEST(Sweep, MatchByStepsPicksClosestReachedEntry) {
  RunResult ref;
  ref.reached_stop_loss = true;
  ref.steps_run = 100;
  ref.log.records.push_back(rec(100, 5.0, 10.0, 42.0));
  std::vector<SweepEntry> es(3);
  es[0] = {0.1, "a", true, "", true, 300, 0.0, 7.0, 1.0, {}, 0.0};
  es[1] = {0.2, "b", true, "", true, 120, 0.0, 8.0, 1.0, {}, 0.0};
  es[2] = {0.3, "c", true, "", false, 101, 0.0, 9.0, 1.0, {}, 0.0};
  const auto m = match_by_steps(ref, es);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->matched_value, 0.2);
  EXPECT_EQ(m->reference_sharpness, 42.0);
  EXPECT_EQ(m->matched_sharpness, 8.0);
}

TEST(Plots, ThresholdSeriesAndHeaders) {
  MetricsLog log;
  for (std::size_t s = 0; s <= 40; ++s) log.records.push_back(rec(s, s % 10 == 0 ? std::optional<double>(s + 1.0) : std::nullopt));
  const auto dir = scratch("plots");
  emit_plots(log, dir, "fig");
  const auto csv = slurp(dir / "fig_precond_sharpness.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,precond_sharpness,threshold");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "100");
    ++rows;
  }
  EXPECT_EQ(rows, 5u);
  const auto svg = slurp(dir / "fig_precond_sharpness.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "fig_sharpness.svg"));
  EXPECT_TRUE(fs::exists(dir / "fig_train_loss.svg"));
}

TEST(Plots, ComparisonHeader) {
  MetricsLog a, b;
  a.records.push_back(rec(0, 1.0));
  b.records.push_back(rec(0, 2.0, 50.0));
  const auto dir = scratch("cmp");
  emit_comparison_plot({{"eta=1", a}, {"eta=2", b}}, dir, "fig1");
  const auto csv = slurp(dir / "fig1.csv");
  EXPECT_EQ(csv, "label,step,precond_sharpness,threshold\neta=1,0,1,100\neta=2,0,2,50\n");
  EXPECT_TRUE(fs::exists(dir / "fig1.svg"));
}

TEST(Plots, EmptySeriesIsAnErrorAndWritesNothing) {
  const auto dir = scratch("empty");
  EXPECT_THROW(emit_plots(MetricsLog{}, dir, "x"), std::invalid_argument);
  MetricsLog no_cp;
  no_cp.records.push_back(rec(0, std::nullopt));
  EXPECT_THROW(emit_plot(no_cp, dir, "x", "precond_sharpness", {"precond_sharpness"}),
               std::invalid_argument);
  EXPECT_TRUE(fs::is_empty(dir));
  EXPECT_THROW(write_svg(dir / "y.svg", PlotSpec{}), std::invalid_argument);
  EXPECT_FALSE(fs::exists(dir / "y.svg"));
}

TEST(Plots, UnwritablePathThrows) {
  MetricsLog log;
  log.records.push_back(rec(0, 1.0));
  const auto dir = scratch("unwritable");
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(emit_plots(log, dir / "file" / "sub", "x"), std::runtime_error);
}

TEST(Scenarios, AllNamesResolve) {
  EXPECT_EQ(scenario_names().size(), 13u);
  std::set<std::string> seen;
  for (const auto& n : scenario_names()) {
    const auto p = scenario(n);
    EXPECT_EQ(p.name, n);
    EXPECT_TRUE(seen.insert(n).second);
    EXPECT_TRUE(p.quadratic || !p.probes.empty() || !p.runs.empty() || !p.sweeps.empty()) << n;
    std::set<std::string> run_names;
    for (const auto& r : p.runs) {
      EXPECT_NO_THROW(r.validate());
      EXPECT_TRUE(run_names.insert(r.name).second) << r.name;
    }
    EXPECT_NO_THROW(to_json(p).dump());
  }
  EXPECT_THROW(scenario("fig99"), std::invalid_argument);
}

TEST(Scenarios, Fig2GridStraddlesBoundary) {
  const auto p = scenario("fig2-quad");
  ASSERT_TRUE(p.quadratic.has_value());
  std::vector<double> etas;
  for (const auto& r : p.quadratic->runs) {
    EXPECT_EQ(r.optimizer.momentum.kind, MomentumKind::EmaHB);
    EXPECT_EQ(r.optimizer.momentum.beta1, 0.9);
    etas.push_back(r.optimizer.eta);
  }
  EXPECT_EQ(etas, (std::vector<double>{30, 35, 37, 38.5, 39, 45}));
  EXPECT_EQ(p.quadratic->objective.A(0, 0), 1.0);
}

TEST(Scenarios, ZooGridsFollowLogspace) {
  const auto p = scenario("fig5-zoo");
  EXPECT_EQ(p.runs.size(), 40u);
  std::set<std::string> families;
  for (const auto& r : p.runs) families.insert(r.name.substr(0, r.name.find("_eta=")));
  EXPECT_EQ(families.size(), 8u);
  const auto g = logspace(-5, -3, 5);
  EXPECT_NEAR(g[0], 1e-5, 1e-20);
  EXPECT_NEAR(g[2], 1e-4, 1e-18);
  EXPECT_NEAR(g[4], 1e-3, 1e-17);
  std::vector<double> amsgrad;
  for (const auto& r : p.runs) {
    if (r.optimizer.precond.kind == PrecondKind::Amsgrad) amsgrad.push_back(r.optimizer.eta);
  }
  EXPECT_EQ(amsgrad, g);
}

TEST(Scenarios, FreezePresetFreezesMidRun) {
  const auto p = scenario("appD-freeze");
  ASSERT_EQ(p.runs.size(), 1u);
  ASSERT_TRUE(p.runs[0].freeze_at_step.has_value());
  EXPECT_GT(*p.runs[0].freeze_at_step, 0u);
  EXPECT_LT(*p.runs[0].freeze_at_step, p.runs[0].steps);
  EXPECT_EQ(p.runs[0].optimizer.precond.kind, PrecondKind::AdamNoBC);
}

TEST(Scenarios, QuadraticAndProbeScenariosRun) {
  const auto dir = scratch("scen");
  const auto r = run_scenario(scenario("appD-stable-gradients"), dir);
  ASSERT_EQ(r.quadratic.size(), 3u);
  for (const auto& q : r.quadratic) {
    EXPECT_EQ(q.trajectory.steps.size(), 31u);
    EXPECT_TRUE(fs::exists(dir / (q.label + ".csv")));
  }
  EXPECT_TRUE(fs::exists(dir / "scenario.json"));
  EXPECT_TRUE(fs::exists(dir / "appD-stable-gradients.svg"));
  const auto header = slurp(dir / "eta=20.csv");
  EXPECT_EQ(header.substr(0, header.find('\n')), "step,x0,grad_norm,nu0");

  const auto agf = run_scenario(scenario("appC-agf"));
  ASSERT_EQ(agf.probes.size(), 3u);
  for (const auto& o : agf.probes) EXPECT_GT(o.report.agf, 1.0);
}

TEST(Scenarios, TrainingScenarioWritesPerRunOutputs) {
  ScenarioPreset p;
  p.name = "mini";
  p.runs = {tiny_config(5), tiny_config(5)};
  p.runs[1].name = "tiny2";
  p.runs[1].optimizer.eta = 2e-3;
  const auto dir = scratch("mini");
  const auto r = run_scenario(p, dir, 2);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.runs[1].first, "tiny2");
  for (const char* f : {"tiny/metrics.csv", "tiny/run_precond_sharpness.svg", "tiny2/summary.json",
                        "mini.csv", "mini.svg", "scenario.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
}

TEST(Minibatch, SmallerBatchesGiveLowerPreconditionedSharpness) {
  // Mid-training median of precond_sharpness ordered batch 8 <= 32 <= full.
  auto base = tiny_config(150);
  base.data.n_train = 64;
  base.optimizer = make_adam(3e-3);
  base.eig_every = 10;
  base.eig_tol = 1e-4;
  std::vector<double> medians;
  for (std::size_t b : {8u, 32u, 0u}) {
    auto c = base;
    c.batch_size = b;
    const auto r = run_experiment(c);
    ASSERT_TRUE(r.ok());
    std::vector<double> mid;
    for (const auto* cp : r.log.checkpoints()) {
      if (cp->step >= 50 && cp->step <= 150) mid.push_back(*cp->precond_sharpness);
    }
    medians.push_back(detail::median(mid));
  }
  EXPECT_LE(medians[0], medians[1]);
  EXPECT_LE(medians[1], medians[2]);
}
