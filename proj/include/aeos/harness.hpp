#pragma once

// Training runs with curvature telemetry, sweeps over one config field, and
// the run artifacts (metrics.csv, eigs.csv, summary.json, params.bin, precond.bin).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aeos/curvature.hpp"
#include "aeos/dataset_io.hpp"
#include "aeos/network.hpp"
#include "aeos/optimizer_json.hpp"

namespace aeos {

namespace fs = std::filesystem;

inline constexpr const char* kDataRootEnv = "AEOS_DATA_ROOT";
inline constexpr const char* kMetricsHeader =
    "step,train_loss,test_loss,grad_norm,sharpness,precond_sharpness,threshold,align_topk,"
    "align_rest";

// ---- data -----------------------------------------------------------------------

enum class DataSource { Synthetic, Cifar10, Cache, Auto };

inline const char* to_string(DataSource s) {
  switch (s) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::Cifar10: return "cifar10";
    case DataSource::Cache: return "cache";
    case DataSource::Auto: return "auto";
  }
  return "?";
}

inline DataSource data_source_from_string(const std::string& s) {
  if (s == "synthetic") return DataSource::Synthetic;
  if (s == "cifar10") return DataSource::Cifar10;
  if (s == "cache") return DataSource::Cache;
  if (s == "auto") return DataSource::Auto;
  throw std::invalid_argument("unknown data source: " + s);
}

/// Where the training/test sets come from. `auto` uses CIFAR-10 when the root
/// (path, else $AEOS_DATA_ROOT) holds the binary batches and synthetic data
/// otherwise.
struct DataSpec {
  DataSource source = DataSource::Synthetic;
  std::string path;       // CIFAR-10 root or train cache file
  std::string test_path;  // test cache file (cache source only)
  std::size_t n_train = 1000;
  std::size_t n_test = 0;
  std::size_t dim = 64;                     // synthetic input dimension
  std::optional<std::size_t> downsample;    // CIFAR side length (8, 16, 32)
  int classes = 10;
  double separation = 0.5;
  double noise_decay = 1.0;
  std::uint64_t seed = 0;
};

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
  std::string source;  // what was actually loaded
};

inline std::optional<fs::path> cifar_root(const DataSpec& spec) {
  fs::path root = spec.path;
  if (root.empty()) {
    const char* env = std::getenv(kDataRootEnv);
    if (!env || !*env) return std::nullopt;
    root = env;
  }
  if (fs::is_regular_file(root)) return root;
  if (fs::is_directory(root)) {
    for (const auto& sub : {root, root / "cifar-10-batches-bin"}) {
      if (fs::exists(sub / "data_batch_1.bin")) return sub;
    }
  }
  return std::nullopt;
}

inline LoadedData load_data(const DataSpec& spec) {
  if (spec.n_train == 0) throw std::invalid_argument("data: n_train must be positive");
  LoadedData out;
  DataSource src = spec.source;
  std::optional<fs::path> root;
  if (src == DataSource::Cifar10 || src == DataSource::Auto) {
    root = cifar_root(spec);
    if (!root) {
      if (src == DataSource::Cifar10) {
        throw std::runtime_error(std::string("CIFAR-10 not found (set path or $") + kDataRootEnv +
                                 ")");
      }
      src = DataSource::Synthetic;
    } else {
      src = DataSource::Cifar10;
    }
  }
  switch (src) {
    case DataSource::Cifar10:
      out.train = load_cifar10_subset(*root, spec.n_train, spec.downsample, Split::Train);
      if (spec.n_test > 0) {
        out.test = load_cifar10_subset(*root, spec.n_test, spec.downsample, Split::Test);
      }
      out.source = "cifar10:" + root->string();
      break;
    case DataSource::Cache:
      out.train = read_dataset_cache(spec.path, Split::Train);
      if (!spec.test_path.empty()) out.test = read_dataset_cache(spec.test_path, Split::Test);
      out.source = "cache:" + spec.path;
      break;
    default:
      out.train = synthetic_dataset(spec.seed, spec.n_train, spec.dim, spec.classes,
                                    spec.separation, Split::Train, spec.noise_decay);
      if (spec.n_test > 0) {
        out.test = synthetic_dataset(spec.seed + 1, spec.n_test, spec.dim, spec.classes,
                                     spec.separation, Split::Test, spec.noise_decay);
      }
      out.source = "synthetic";
      break;
  }
  out.train.validate();
  if (out.test) out.test->validate();
  return out;
}

// ---- config -----------------------------------------------------------------------

struct ModelSpec {
  std::vector<std::size_t> hidden{200, 200, 200, 200, 200};
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  MLPConfig build(std::size_t input_dim, int classes) const {
    MLPConfig cfg;
    cfg.layer_widths.push_back(input_dim);
    cfg.layer_widths.insert(cfg.layer_widths.end(), hidden.begin(), hidden.end());
    cfg.layer_widths.push_back(static_cast<std::size_t>(classes));
    cfg.activation = activation;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

/// Frozen-Adam protocol: run `optimizer` for `steps` from the same init, then
/// start the main run from scratch with its second moment frozen at that value.
struct NuWarmup {
  OptimizerSpec optimizer;
  std::size_t steps = 0;
};

struct ExperimentConfig {
  std::string name = "run";
  OptimizerSpec optimizer = make_adam(1e-3);
  ModelSpec model;
  DataSpec data;
  LossKind loss = LossKind::SquaredError;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t steps = 1000;
  std::optional<double> stop_loss;
  std::size_t eig_every = 20;
  std::size_t eig_k = 1;
  double eig_tol = 1e-3;
  std::size_t eig_max_iter = 300;
  bool alignment = false;
  std::uint64_t seed = 0;
  std::optional<std::string> scenario;
  std::optional<std::size_t> freeze_at_step;
  std::optional<NuWarmup> nu_warmup;

  void validate() const {
    aeos::validate(optimizer);
    if (eig_every < 1) throw std::invalid_argument("eig_every must be >= 1");
    if (eig_k < 1) throw std::invalid_argument("eig_k must be >= 1");
    if (!(eig_tol > 0.0)) throw std::invalid_argument("eig_tol must be positive");
    if (stop_loss && !(*stop_loss > 0.0)) throw std::invalid_argument("stop_loss must be positive");
    if (nu_warmup) aeos::validate(nu_warmup->optimizer);
  }
};

inline nlohmann::json to_json(const DataSpec& d) {
  nlohmann::json j = {{"source", to_string(d.source)}, {"n_train", d.n_train},
                      {"n_test", d.n_test},            {"dim", d.dim},
                      {"classes", d.classes},          {"separation", d.separation},
                      {"noise_decay", d.noise_decay},  {"seed", d.seed}};
  if (!d.path.empty()) j["path"] = d.path;
  if (!d.test_path.empty()) j["test_path"] = d.test_path;
  if (d.downsample) j["downsample"] = *d.downsample;
  return j;
}

inline DataSpec data_spec_from_json(const nlohmann::json& j) {
  DataSpec d;
  d.source = data_source_from_string(j.value("source", std::string("synthetic")));
  d.path = j.value("path", std::string());
  d.test_path = j.value("test_path", std::string());
  d.n_train = j.value("n_train", d.n_train);
  d.n_test = j.value("n_test", d.n_test);
  d.dim = j.value("dim", d.dim);
  if (j.contains("downsample") && !j["downsample"].is_null()) {
    d.downsample = j["downsample"].get<std::size_t>();
  }
  d.classes = j.value("classes", d.classes);
  d.separation = j.value("separation", d.separation);
  d.noise_decay = j.value("noise_decay", d.noise_decay);
  d.seed = j.value("seed", d.seed);
  return d;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"name", c.name},
      {"optimizer", to_json(c.optimizer)},
      {"model",
       {{"hidden", c.model.hidden},
        {"activation", to_string(c.model.activation)},
        {"seed", c.model.seed}}},
      {"data", to_json(c.data)},
      {"loss", to_string(c.loss)},
      {"batch_size", c.batch_size == 0 ? nlohmann::json("full") : nlohmann::json(c.batch_size)},
      {"steps", c.steps},
      {"stop_loss", c.stop_loss ? nlohmann::json(*c.stop_loss) : nlohmann::json(nullptr)},
      {"eig_every", c.eig_every},
      {"eig_k", c.eig_k},
      {"eig_tol", c.eig_tol},
      {"eig_max_iter", c.eig_max_iter},
      {"alignment", c.alignment},
      {"seed", c.seed}};
  if (c.scenario) j["scenario"] = *c.scenario;
  if (c.freeze_at_step) j["freeze_at_step"] = *c.freeze_at_step;
  if (c.nu_warmup) {
    j["nu_warmup"] = {{"optimizer", to_json(c.nu_warmup->optimizer)},
                      {"steps", c.nu_warmup->steps}};
  }
  return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("optimizer")) c.optimizer = optimizer_spec_from_json(j.at("optimizer"));
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.hidden = m.value("hidden", c.model.hidden);
    c.model.activation = activation_from_string(m.value("activation", std::string("tanh")));
    c.model.seed = m.value("seed", c.model.seed);
  }
  if (j.contains("data")) c.data = data_spec_from_json(j.at("data"));
  c.loss = loss_kind_from_string(j.value("loss", std::string(to_string(c.loss))));
  if (j.contains("batch_size")) {
    const auto& b = j.at("batch_size");
    if (b.is_string()) {
      if (b.get<std::string>() != "full") throw std::invalid_argument("batch_size: int or \"full\"");
      c.batch_size = 0;
    } else {
      c.batch_size = b.get<std::size_t>();
    }
  }
  c.steps = j.value("steps", c.steps);
  if (j.contains("stop_loss") && !j["stop_loss"].is_null()) c.stop_loss = j["stop_loss"].get<double>();
  c.eig_every = j.value("eig_every", c.eig_every);
  c.eig_k = j.value("eig_k", c.eig_k);
  c.eig_tol = j.value("eig_tol", c.eig_tol);
  c.eig_max_iter = j.value("eig_max_iter", c.eig_max_iter);
  c.alignment = j.value("alignment", c.alignment);
  c.seed = j.value("seed", c.seed);
  if (j.contains("scenario") && !j["scenario"].is_null()) c.scenario = j["scenario"].get<std::string>();
  if (j.contains("freeze_at_step") && !j["freeze_at_step"].is_null()) {
    c.freeze_at_step = j["freeze_at_step"].get<std::size_t>();
  }
  if (j.contains("nu_warmup") && !j["nu_warmup"].is_null()) {
    const auto& w = j.at("nu_warmup");
    c.nu_warmup = NuWarmup{optimizer_spec_from_json(w.at("optimizer")), w.at("steps").get<std::size_t>()};
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return experiment_config_from_json(nlohmann::json::parse(in));
}

// ---- metrics ----------------------------------------------------------------------

struct MetricsRecord {
  std::size_t step = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  double grad_norm = 0.0;
  std::optional<double> sharpness;         // lambda_1(H)
  std::optional<double> precond_sharpness; // lambda_1(P^-1 H)
  double threshold = 0.0;
  std::optional<double> align_topk;
  std::optional<double> align_rest;
  // eig diagnostics, written to eigs.csv
  std::optional<double> sharpness_residual;
  std::optional<double> precond_residual;
  bool eig_converged = true;
  double wall_time = 0.0;

  bool is_checkpoint() const { return precond_sharpness.has_value(); }
};

struct RunFailure {
  std::size_t step = 0;
  std::string message;
};

struct MetricsLog {
  std::vector<MetricsRecord> records;
  std::optional<RunFailure> failure;

  bool empty() const { return records.empty(); }
  std::vector<const MetricsRecord*> checkpoints() const {
    std::vector<const MetricsRecord*> out;
    for (const auto& r : records) {
      if (r.is_checkpoint()) out.push_back(&r);
    }
    return out;
  }
};

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : ""; }

}  // namespace detail

inline std::string metrics_csv_row(const MetricsRecord& r) {
  using detail::fmt_num;
  using detail::fmt_opt;
  return std::to_string(r.step) + "," + fmt_num(r.train_loss) + "," + fmt_opt(r.test_loss) + "," +
         fmt_num(r.grad_norm) + "," + fmt_opt(r.sharpness) + "," + fmt_opt(r.precond_sharpness) +
         "," + fmt_num(r.threshold) + "," + fmt_opt(r.align_topk) + "," + fmt_opt(r.align_rest);
}

inline void write_metrics_csv(const MetricsLog& log, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& r : log.records) out << metrics_csv_row(r) << "\n";
}

/// Parses a metrics.csv written by this library (blank cells = absent).
inline MetricsLog read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw FormatError(path.string() + ": unexpected header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(9);
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    MetricsRecord r;
    r.step = std::stoull(cells[0]);
    r.train_loss = std::stod(cells[1]);
    r.test_loss = opt(cells[2]);
    r.grad_norm = std::stod(cells[3]);
    r.sharpness = opt(cells[4]);
    r.precond_sharpness = opt(cells[5]);
    r.threshold = std::stod(cells[6]);
    r.align_topk = opt(cells[7]);
    r.align_rest = opt(cells[8]);
    log.records.push_back(r);
  }
  return log;
}

// ---- training loop ------------------------------------------------------------------

struct RunResult {
  MetricsLog log;
  Vec final_params;
  Vec final_precond;  // P used for the last telemetry point
  std::size_t steps_run = 0;  // optimizer steps taken
  bool reached_stop_loss = false;
  std::optional<double> final_test_error;
  std::string data_source;
  double threshold = 0.0;
  double wall_time = 0.0;

  bool ok() const { return !log.failure.has_value(); }
  std::optional<double> final_sharpness() const {
    const auto cps = log.checkpoints();
    return cps.empty() ? std::nullopt : cps.back()->sharpness;
  }
  std::optional<double> final_precond_sharpness() const {
    const auto cps = log.checkpoints();
    return cps.empty() ? std::nullopt : cps.back()->precond_sharpness;
  }
};

namespace detail {

/// Preconditioner the next step will apply: the second moment updated with the
/// gradient at the current iterate (left untouched when frozen).
inline Vec upcoming_preconditioner(const OptimizerState& state, const Vec& g,
                                   const OptimizerSpec& spec) {
  if (state.frozen || !spec.precond.adaptive()) return preconditioner(state, spec);
  OptimizerState probe = state;
  update_second_moment(probe, g, spec.precond);
  return preconditioner(probe, spec);
}

class CsvAppender {
 public:
  CsvAppender() = default;
  explicit CsvAppender(const fs::path& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << "\n";
    out_.flush();
  }
  void row(const std::string& line) {
    if (!out_.is_open()) return;
    out_ << line << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline std::size_t param_count(const MLPConfig& cfg) { return cfg.num_params(); }

}  // namespace detail

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const RunResult& r) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["data_source"] = r.data_source;
  j["loss"] = to_string(cfg.loss);
  j["preprocessing"] = r.data_source.rfind("cifar10", 0) == 0
                           ? "pixels/255, per-channel mean subtracted"
                           : "none";
  j["float"] = "float64";
  j["steps_run"] = r.steps_run;
  j["reached_stop_loss"] = r.reached_stop_loss;
  j["threshold"] = r.threshold;
  j["wall_time"] = r.wall_time;
  if (!r.log.empty()) {
    const auto& last = r.log.records.back();
    j["final_train_loss"] = last.train_loss;
    j["final_grad_norm"] = last.grad_norm;
  }
  auto put = [&](const char* key, const std::optional<double>& v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  put("final_sharpness", r.final_sharpness());
  put("final_precond_sharpness", r.final_precond_sharpness());
  put("final_test_error", r.final_test_error);
  if (r.log.failure) {
    j["failure"] = {{"step", r.log.failure->step}, {"message", r.log.failure->message}};
  } else {
    j["failure"] = nullptr;
  }
  return j;
}

/// Trains per `cfg`, recording one MetricsRecord per step. Eigen telemetry
/// (sharpness, preconditioned sharpness, optional alignment, test loss) runs
/// every `eig_every` steps and on the final recorded step. With `out_dir` set,
/// metrics.csv and eigs.csv are appended row by row; summary.json,
/// params.bin and precond.bin are written at the end, including after a numerical failure.
inline RunResult run_experiment(const ExperimentConfig& cfg,
                                const std::optional<fs::path>& out_dir = std::nullopt) {
  cfg.validate();
  const auto wall0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  };

  const LoadedData data = load_data(cfg.data);
  const MLPConfig model = cfg.model.build(data.train.dim(), data.train.classes);
  const LossSurface full(model, data.train, cfg.loss);
  std::optional<LossSurface> test_surface;
  if (data.test) test_surface.emplace(model, *data.test, cfg.loss);

  RunResult result;
  result.data_source = data.source;
  result.threshold = frozen_threshold(cfg.optimizer);

  detail::CsvAppender metrics_out, eigs_out;
  if (out_dir) {
    fs::create_directories(*out_dir);
    metrics_out = detail::CsvAppender(*out_dir / "metrics.csv", kMetricsHeader);
    eigs_out = detail::CsvAppender(
        *out_dir / "eigs.csv",
        "step,sharpness,sharpness_residual,precond_sharpness,precond_residual,converged");
  }

  const Vec x0 = init_params(model);
  const auto blocks = model.blocks();
  OptimizerState state = init_state(x0, blocks);
  std::optional<MinibatchSampler> sampler;
  if (cfg.batch_size > 0) sampler.emplace(data.train.size(), cfg.batch_size, cfg.seed);

  auto batch_surface = [&]() -> LossSurface {
    if (!sampler) return full;
    return LossSurface(model, data.train, cfg.loss, sampler->next());
  };

  std::optional<Vec> warm_h, warm_p;
  std::size_t t = 0;
  try {
    if (cfg.nu_warmup) {
      OptimizerState warm = init_state(x0, blocks);
      for (std::size_t i = 0; i < cfg.nu_warmup->steps; ++i) {
        const auto lg = loss_and_gradient(batch_surface(), warm.x);
        warm = step(std::move(warm), lg.gradient, cfg.nu_warmup->optimizer);
      }
      state.nu = warm.nu;
      state.nu_max = warm.nu_max;
      state.nu_row = warm.nu_row;
      state.nu_col = warm.nu_col;
      state = freeze_preconditioner(std::move(state));
      if (sampler) sampler.emplace(data.train.size(), cfg.batch_size, cfg.seed);
    }

    for (;; ++t) {
      const LossSurface batch = batch_surface();
      const auto lg = loss_and_gradient(batch, state.x);
      MetricsRecord rec;
      rec.step = t;
      rec.train_loss = lg.loss;
      rec.grad_norm = lg.gradient.norm();
      rec.threshold = result.threshold;

      const bool stop = cfg.stop_loss && lg.loss < *cfg.stop_loss;
      const bool last = stop || t == cfg.steps;
      if (t % cfg.eig_every == 0 || last) {
        const Vec g_full = sampler ? loss_and_gradient(full, state.x).gradient : lg.gradient;
        const Vec P = detail::upcoming_preconditioner(state, g_full, cfg.optimizer);
        result.final_precond = P;
        LinearOperator hvp = [&](const Vec& v) { return hessian_vector_product(full, state.x, v); };
        TopEigsOptions opts;
        // Final point gets a tight estimate, telemetry a cheaper warm-started one.
        opts.tol = last ? std::min(cfg.eig_tol, 1e-6) : cfg.eig_tol;
        opts.max_iter = cfg.eig_max_iter;
        opts.seed = cfg.seed + t;
        opts.check_symmetry = t == 0;
        opts.start = warm_h;
        const auto eh = top_eigs(hvp, static_cast<std::size_t>(state.x.size()), 1, opts);
        opts.start = warm_p;
        opts.check_symmetry = false;
        const auto ep = top_eigs(preconditioned_operator(hvp, P),
                                 static_cast<std::size_t>(state.x.size()), cfg.eig_k, opts);
        warm_h = eh.eigenvectors.front();
        warm_p = ep.eigenvectors.front();
        rec.sharpness = eh.eigenvalues.front();
        rec.precond_sharpness = ep.eigenvalues.front();
        rec.sharpness_residual = eh.residuals.front();
        rec.precond_residual = ep.residuals.front();
        rec.eig_converged = eh.converged && ep.converged;
        if (cfg.alignment) {
          const auto a = gradient_alignment(g_full, P, ep.eigenvectors, cfg.eig_k);
          // Stored as fractions of ||P^{1/2} g||^2.
          const double total = a.total_energy > 0.0 ? a.total_energy : 1.0;
          rec.align_topk = a.top_k_energy / total;
          rec.align_rest = a.remainder_energy / total;
        }
        if (test_surface) rec.test_loss = loss_value(*test_surface, state.x);
        eigs_out.row(std::to_string(t) + "," + detail::fmt_num(*rec.sharpness) + "," +
                     detail::fmt_num(*rec.sharpness_residual) + "," +
                     detail::fmt_num(*rec.precond_sharpness) + "," +
                     detail::fmt_num(*rec.precond_residual) + "," +
                     (rec.eig_converged ? "1" : "0"));
      }
      rec.wall_time = elapsed();
      result.log.records.push_back(rec);
      metrics_out.row(metrics_csv_row(rec));
      if (stop) result.reached_stop_loss = true;
      if (last) break;

      state = step(std::move(state), lg.gradient, cfg.optimizer);
      if (cfg.freeze_at_step && state.t == *cfg.freeze_at_step) {
        state = freeze_preconditioner(std::move(state));
      }
    }
  } catch (const DivergenceError& e) {
    result.log.failure = RunFailure{t, e.what()};
  } catch (const NumericalError& e) {
    result.log.failure = RunFailure{t, e.what()};
  }

  result.steps_run = state.t;
  result.final_params = state.x;
  if (test_surface && state.x.allFinite()) {
    result.final_test_error = classification_error(*test_surface, state.x);
  }
  result.wall_time = elapsed();
  if (out_dir) {
    std::ofstream(*out_dir / "summary.json") << summary_json(cfg, result).dump(2) << "\n";
    write_vector(*out_dir / "params.bin", result.final_params);
    if (result.final_precond.size() > 0) write_vector(*out_dir / "precond.bin", result.final_precond);
  }
  return result;
}

// ---- analysis of a log ---------------------------------------------------------------

/// Final third of the run: median precond_sharpness / threshold and the drift of
/// a rolling median (window 5) across that span, both relative to threshold.
struct EquilibriumReport {
  std::size_t samples = 0;
  double median_ratio = 0.0;
  double drift = 0.0;
  bool in_band = false;
  bool flat = false;
  bool equilibrated() const { return in_band && flat; }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty range");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace detail

inline EquilibriumReport assess_equilibrium(const MetricsLog& log, double band = 0.15,
                                            double drift_bound = 0.15) {
  if (log.empty()) throw std::invalid_argument("assess_equilibrium: empty log");
  const double last_step = static_cast<double>(log.records.back().step);
  std::vector<double> ratios;
  for (const auto* r : log.checkpoints()) {
    if (3.0 * static_cast<double>(r->step) >= 2.0 * last_step) {
      ratios.push_back(*r->precond_sharpness / r->threshold);
    }
  }
  EquilibriumReport rep;
  rep.samples = ratios.size();
  if (ratios.empty()) return rep;
  rep.median_ratio = detail::median(ratios);
  rep.in_band = std::abs(rep.median_ratio - 1.0) <= band;

  const std::size_t w = std::min<std::size_t>(5, ratios.size());
  std::vector<double> rolling;
  for (std::size_t i = 0; i + w <= ratios.size(); ++i) {
    rolling.push_back(detail::median({ratios.begin() + static_cast<std::ptrdiff_t>(i),
                                      ratios.begin() + static_cast<std::ptrdiff_t>(i + w)}));
  }
  rep.drift = rolling.back() - rolling.front();
  rep.flat = std::abs(rep.drift) <= drift_bound;
  return rep;
}

/// Raw sharpness at the first checkpoint with precond_sharpness >= threshold,
/// and at the last checkpoint.
struct SharpeningReport {
  std::size_t crossing_step = 0;
  double at_crossing = 0.0;
  double at_end = 0.0;
  bool rises() const { return at_end > at_crossing; }
};

inline std::optional<SharpeningReport> sharpening_after_crossing(const MetricsLog& log) {
  const auto cps = log.checkpoints();
  for (const auto* r : cps) {
    if (*r->precond_sharpness >= r->threshold) {
      return SharpeningReport{r->step, *r->sharpness, *cps.back()->sharpness};
    }
  }
  return std::nullopt;
}

/// Steps whose most recent checkpoint (at or before the step) had
/// precond_sharpness above threshold.
inline std::vector<std::size_t> unstable_steps(const MetricsLog& log) {
  std::vector<std::size_t> out;
  std::optional<bool> above;
  for (const auto& r : log.records) {
    if (r.is_checkpoint()) above = *r.precond_sharpness > r.threshold;
    if (above && *above) out.push_back(r.step);
  }
  return out;
}

// ---- sweeps -------------------------------------------------------------------------

struct SweepAxis {
  std::string parameter;
  std::vector<double> values;
};

inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"eta",   "beta1", "beta2",      "epsilon",
                                              "weight_decay", "exponent", "batch_size",
                                              "seed",  "model_seed", "steps", "stop_loss"};
  return names;
}

inline ExperimentConfig apply_axis(ExperimentConfig cfg, const std::string& parameter,
                                   double value) {
  auto as_count = [&](const char* what) {
    if (value < 0.0 || value != std::floor(value)) {
      throw std::invalid_argument(std::string(what) + " must be a nonnegative integer");
    }
    return static_cast<std::size_t>(value);
  };
  auto& o = cfg.optimizer;
  if (parameter == "eta") o.eta = value;
  else if (parameter == "beta1") o.momentum.beta1 = value;
  else if (parameter == "beta2") o.precond.beta2 = value;
  else if (parameter == "epsilon") o.precond.epsilon = value;
  else if (parameter == "weight_decay") o.weight_decay = value;
  else if (parameter == "exponent") o.precond.exponent = value;
  else if (parameter == "batch_size") cfg.batch_size = as_count("batch_size");
  else if (parameter == "seed") cfg.seed = as_count("seed");
  else if (parameter == "model_seed") cfg.model.seed = as_count("model_seed");
  else if (parameter == "steps") cfg.steps = as_count("steps");
  else if (parameter == "stop_loss") cfg.stop_loss = value;
  else throw std::invalid_argument("unknown sweep parameter: " + parameter);
  std::ostringstream name;
  name << cfg.name << "_" << parameter << "=" << value;
  cfg.name = name.str();
  cfg.validate();
  return cfg;
}

struct SweepEntry {
  double value = 0.0;
  std::string run_name;
  bool ok = false;
  std::string error;
  bool reached_milestone = false;
  std::size_t steps_to_milestone = 0;  // steps run when not reached
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> final_sharpness;
  std::optional<double> final_precond_sharpness;
  std::optional<double> final_test_error;
  double threshold = 0.0;
};

inline nlohmann::json to_json(const SweepEntry& e) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"value", e.value},
          {"run", e.run_name},
          {"ok", e.ok},
          {"error", e.error},
          {"reached_milestone", e.reached_milestone},
          {"steps_to_milestone", e.steps_to_milestone},
          {"final_train_loss", std::isfinite(e.final_train_loss) ? nlohmann::json(e.final_train_loss)
                                                                 : nlohmann::json(nullptr)},
          {"final_sharpness", opt(e.final_sharpness)},
          {"final_precond_sharpness", opt(e.final_precond_sharpness)},
          {"final_test_error", opt(e.final_test_error)},
          {"threshold", e.threshold}};
}

/// Runs base with each axis value (up to `parallelism` at a time). Each run
/// writes under out_dir/<index>_<parameter>=<value>/ when out_dir is set; a
/// failing run is recorded and the sweep continues. Results keep axis order.
inline std::vector<SweepEntry> sweep(const ExperimentConfig& base, const SweepAxis& axis,
                                     const std::optional<fs::path>& out_dir = std::nullopt,
                                     std::size_t parallelism = 1) {
  if (std::find(sweep_parameters().begin(), sweep_parameters().end(), axis.parameter) ==
      sweep_parameters().end()) {
    throw std::invalid_argument("unknown sweep parameter: " + axis.parameter);
  }
  if (axis.values.empty()) throw std::invalid_argument("sweep: no values");
  std::vector<SweepEntry> entries(axis.values.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      SweepEntry& e = entries[i];
      e.value = axis.values[i];
      try {
        const auto cfg = apply_axis(base, axis.parameter, e.value);
        e.run_name = cfg.name;
        std::optional<fs::path> dir;
        if (out_dir) {
          std::ostringstream sub;
          sub << i << "_" << axis.parameter << "=" << e.value;
          dir = *out_dir / sub.str();
        }
        const auto r = run_experiment(cfg, dir);
        e.ok = r.ok();
        if (r.log.failure) e.error = r.log.failure->message;
        e.reached_milestone = r.reached_stop_loss;
        e.steps_to_milestone = r.steps_run;
        if (!r.log.empty()) e.final_train_loss = r.log.records.back().train_loss;
        e.final_sharpness = r.final_sharpness();
        e.final_precond_sharpness = r.final_precond_sharpness();
        e.final_test_error = r.final_test_error;
        e.threshold = r.threshold;
      } catch (const std::exception& ex) {
        e.ok = false;
        e.error = ex.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(parallelism, entries.size()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  if (out_dir) {
    fs::create_directories(*out_dir);
    nlohmann::json j = {{"parameter", axis.parameter}, {"base", to_json(base)}};
    for (const auto& e : entries) j["entries"].push_back(to_json(e));
    std::ofstream(*out_dir / "sweep.json") << j.dump(2) << "\n";
  }
  return entries;
}

}  // namespace aeos
