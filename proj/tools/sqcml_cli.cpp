// Command-line pipeline driver: model, simulate, dataset, train, rollout, analyze.
//
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include "sqcml/sqcml.hpp"

namespace {

using namespace sqcml;
namespace fs = std::filesystem;

struct ModelChoice {
  std::string id;
  std::string file;

  models::SiteExcitonModel load() const {
    if (!file.empty()) return models::load_model(file);
    return models::build_model(id.empty() ? "I" : id);
  }
};

void add_model_options(CLI::App* app, ModelChoice& m) {
  auto* id = app->add_option("--model", m.id, "Built-in model I..VI")
                 ->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI"}));
  app->add_option("--model-file", m.file, "Model config JSON")->check(CLI::ExistingFile)->excludes(id);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  io::write_atomic(path, text);
}

// ---- model -----------------------------------------------------------------

struct ModelOpts {
  ModelChoice model;
  std::string out;
};

int cmd_model(const ModelOpts& o) {
  const auto m = o.model.load();
  std::cout << m.label() << ": " << m.n_states() << " states, " << m.n_modes() << " modes, dim " << m.dim() << "\n";
  std::cout << "V [eV] =\n" << m.v() << "\n";
  if (!o.out.empty()) models::save_model(o.out, m);
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct SimulateOpts {
  ModelChoice model;
  std::size_t ntraj = 500;
  std::size_t init_state = 1;
  double t_end = 100.0;
  double record_dt = 1.0;
  double dt = 0.01;
  double gamma = 1.0 / 3.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simulate(const SimulateOpts& o, std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = o.model.load();
  if (o.init_state < 1 || o.init_state > model.n_states())
    throw CLI::ValidationError("--init-state", "must lie in 1.." + std::to_string(model.n_states()));
  sqc::EnsembleConfig cfg;
  cfg.n_traj = o.ntraj;
  cfg.init_state = o.init_state - 1;
  cfg.seed = o.seed;
  cfg.t_end = o.t_end;
  cfg.record_dt = o.record_dt;
  cfg.integrator.dt_internal = o.dt;
  cfg.window.gamma = o.gamma;
  cfg.workers = workers;
  const auto ens = sqc::run_ensemble(model, cfg);

  double drift = 0.0;
  for (const auto& t : ens.trajectories) drift = std::max(drift, sqc::energy_drift(model, t, cfg.window));
  sqc::save_ensemble(o.out, ens);
  std::cout << "n_traj " << ens.size() << "\nn_records " << ens.n_records() << "\ndim " << ens.dim()
            << "\nmax_energy_drift_eV " << drift << "\nwall_seconds " << seconds_since(t0) << "\n";
  return 0;
}

// ---- dataset ---------------------------------------------------------------

struct DatasetOpts {
  std::string in;
  std::size_t seq_len = 5;
  std::uint64_t seed = 0;
  bool standardize = false;
  std::string out;
};

int cmd_dataset(const DatasetOpts& o) {
  const auto bytes = io::read_all(o.in);
  const auto ens = sqc::decode_ensemble(bytes);
  if (o.seq_len > ens.n_records())
    throw std::invalid_argument("--seq-len " + std::to_string(o.seq_len) + " exceeds the " +
                                std::to_string(ens.n_records()) + " records per trajectory");
  const auto ds = dataset::build_dataset(ens, {o.seq_len, o.seed, o.standardize}, io::content_hash(bytes));
  dataset::save_dataset(o.out, ds);
  std::cout << "sequences_per_trajectory " << (ens.n_records() - o.seq_len + 1) << "\ntrain " << ds.train.size()
            << "\nvalidation " << ds.validation.size() << "\ndim " << ds.dim << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
  std::string data;
  surrogate::TrainConfig cfg{};
  std::string out;
  std::string loss_csv;
  bool quiet = false;
};

int cmd_train(TrainOpts o) {
  const auto ds = dataset::load_dataset(o.data);
  o.cfg.seq_len = ds.seq_len;
  auto progress = [&](std::size_t epoch, double tl, double vl) {
    if (!o.quiet) std::cerr << "epoch " << (epoch + 1) << " train " << tl << " validation " << vl << "\n";
  };
  auto res = surrogate::train(ds, o.cfg, progress);
  surrogate::Checkpoint ck{res.params, o.cfg, res.report, ds.provenance, ds.scaling};
  surrogate::save_checkpoint(o.out, ck);

  if (!o.loss_csv.empty()) {
    std::ostringstream os;
    os << "epoch,train_loss,validation_loss\n";
    for (std::size_t e = 0; e < res.report.train_loss.size(); ++e)
      os << (e + 1) << ',' << analysis::format_number(res.report.train_loss[e]) << ','
         << analysis::format_number(res.report.validation_loss[e]) << '\n';
    write_text(o.loss_csv, os.str());
  }
  std::cout << "best_epoch " << (res.report.best_epoch + 1) << "\nbest_validation_loss "
            << res.report.validation_loss[res.report.best_epoch] << "\nwall_seconds " << res.report.wall_seconds
            << "\n";
  return 0;
}

// ---- rollout ---------------------------------------------------------------

struct RolloutOpts {
  std::string checkpoint;
  ModelChoice model;
  std::size_t ntraj = 2500;
  std::size_t steps = 100;
  std::size_t init_state = 1;
  double record_dt = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_rollout(const RolloutOpts& o, std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ck = surrogate::load_checkpoint(o.checkpoint);
  const auto model = o.model.load();
  surrogate::require_dim(ck, model.dim());
  if (o.init_state < 1 || o.init_state > model.n_states())
    throw CLI::ValidationError("--init-state", "must lie in 1.." + std::to_string(model.n_states()));
  analysis::RolloutConfig cfg;
  cfg.n_traj = o.ntraj;
  cfg.total_steps = o.steps;
  cfg.seq_len = ck.seq_len();
  cfg.seed = o.seed;
  cfg.init_state = o.init_state - 1;
  cfg.record_dt = o.record_dt;
  cfg.workers = workers;
  const auto ens = analysis::rollout_ensemble(model, ck, cfg);
  sqc::save_ensemble(o.out, ens);
  std::cout << "n_traj " << ens.size() << "\nn_records " << ens.n_records() << "\nchunks_per_trajectory "
            << analysis::chunk_count(cfg.seq_len, cfg.total_steps) << "\nwall_seconds " << seconds_since(t0) << "\n";
  return 0;
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeOpts {
  std::string in, pred, ref, out;
  ModelChoice model;
  std::vector<double> slices{20, 40, 60, 80, 100};
  std::size_t var = 0;
  std::size_t bins = 60;
  std::vector<double> range{-3.0, 3.0};
  double gamma = 1.0 / 3.0;
};

int cmd_analyze_populations(const AnalyzeOpts& o) {
  const auto ens = sqc::load_ensemble(o.in);
  const auto pops = sqc::populations(ens, {o.gamma});
  write_text(o.out, analysis::populations_csv(pops));
  if (!pops.all_defined()) std::cerr << "warning: populations undefined at some times (no assigned trajectory)\n";
  return 0;
}

int cmd_analyze_compare(const AnalyzeOpts& o) {
  const auto c = analysis::compare_populations(sqc::load_ensemble(o.pred), sqc::load_ensemble(o.ref), {o.gamma});
  write_text(o.out, analysis::comparison_csv(c));
  if (!c.undefined.empty()) std::cerr << "warning: " << c.undefined.size() << " undefined time points skipped\n";
  return 0;
}

int cmd_analyze_mae(const AnalyzeOpts& o) {
  std::optional<models::SiteExcitonModel> model;
  if (!o.model.id.empty() || !o.model.file.empty()) model = o.model.load();
  const auto t = analysis::dof_mae(sqc::load_ensemble(o.pred), sqc::load_ensemble(o.ref), o.slices,
                                   model ? &*model : nullptr);
  write_text(o.out, analysis::mae_csv(t));
  return 0;
}

int cmd_analyze_hist(const AnalyzeOpts& o) {
  if (o.range.size() != 2) throw CLI::ValidationError("--range", "expects lo,hi");
  const auto h = analysis::coordinate_histogram(sqc::load_ensemble(o.in), o.var, o.bins, o.range[0], o.range[1]);
  write_text(o.out, analysis::histogram_csv(h));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MM-SQC trajectory simulation and LSTM trajectory surrogates"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  std::size_t workers = sqcml::default_workers();
  app.add_option("--workers", workers, "Worker threads (env SQCML_WORKERS)")
      ->envname("SQCML_WORKERS")
      ->check(CLI::PositiveNumber);
  std::string record_config;
  app.add_option("--record-config", record_config, "Write the resolved run configuration to this file");

  ModelOpts model_o;
  auto* model_cmd = app.add_subcommand("model", "Print or export a model definition");
  add_model_options(model_cmd, model_o.model);
  model_cmd->add_option("--out", model_o.out, "Write the model config JSON here");

  SimulateOpts sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run an MM-SQC trajectory ensemble");
  add_model_options(sim_cmd, sim.model);
  sim_cmd->add_option("--ntraj", sim.ntraj, "Number of trajectories")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--init-state", sim.init_state, "Initially occupied state (1-based)");
  sim_cmd->add_option("--t-end", sim.t_end, "Propagation time [fs]")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--record-dt", sim.record_dt, "Recording interval [fs]")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--dt", sim.dt, "RK4 step [fs]")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--gamma", sim.gamma, "Zero-point parameter")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--seed", sim.seed, "Seed for initial sampling");
  sim_cmd->add_option("--out", sim.out, "Ensemble output file")->required();

  DatasetOpts ds;
  auto* ds_cmd = app.add_subcommand("dataset", "Split an ensemble into training/validation sequences");
  ds_cmd->add_option("--in", ds.in, "Ensemble file")->required()->check(CLI::ExistingFile);
  ds_cmd->add_option("--seq-len", ds.seq_len, "Sequence length L")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
  ds_cmd->add_option("--seed", ds.seed, "Split seed");
  ds_cmd->add_flag("--standardize", ds.standardize, "Standardize features with training-set moments");
  ds_cmd->add_option("--out", ds.out, "Dataset output file")->required();

  TrainOpts tr;
  auto* tr_cmd = app.add_subcommand("train", "Train the one-to-many LSTM");
  tr_cmd->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--hidden", tr.cfg.hidden, "LSTM neurons")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  tr_cmd->add_option("--batch", tr.cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--epochs", tr.cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--seed", tr.cfg.seed, "Seed for initialization and batch order");
  tr_cmd->add_option("--out", tr.out, "Checkpoint output file")->required();
  tr_cmd->add_option("--loss-csv", tr.loss_csv, "Per-epoch loss history CSV");
  tr_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  RolloutOpts ro;
  auto* ro_cmd = app.add_subcommand("rollout", "Predict trajectories from fresh initial samples");
  ro_cmd->add_option("--checkpoint", ro.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  add_model_options(ro_cmd, ro.model);
  ro_cmd->add_option("--ntraj", ro.ntraj, "Number of trajectories")->check(CLI::PositiveNumber);
  ro_cmd->add_option("--steps", ro.steps, "Predicted steps after t = 0")->check(CLI::PositiveNumber);
  ro_cmd->add_option("--init-state", ro.init_state, "Initially occupied state (1-based)");
  ro_cmd->add_option("--record-dt", ro.record_dt, "Time between steps [fs]")->check(CLI::PositiveNumber);
  ro_cmd->add_option("--seed", ro.seed, "Seed for initial sampling");
  ro_cmd->add_option("--out", ro.out, "Ensemble output file")->required();

  AnalyzeOpts an;
  auto* an_cmd = app.add_subcommand("analyze", "Population, MAE and histogram analyses");
  an_cmd->require_subcommand(1);
  auto* an_pop = an_cmd->add_subcommand("populations", "Window-binned populations CSV");
  an_pop->add_option("--in", an.in)->required()->check(CLI::ExistingFile);
  an_pop->add_option("--gamma", an.gamma);
  an_pop->add_option("--out", an.out, "CSV file ('-' for stdout)");
  auto* an_cmp = an_cmd->add_subcommand("compare", "Population deviation between two ensembles");
  an_cmp->add_option("--pred", an.pred)->required()->check(CLI::ExistingFile);
  an_cmp->add_option("--ref", an.ref)->required()->check(CLI::ExistingFile);
  an_cmp->add_option("--gamma", an.gamma);
  an_cmp->add_option("--out", an.out, "CSV file ('-' for stdout)");
  auto* an_mae = an_cmd->add_subcommand("mae", "Per-DOF mean absolute error table");
  an_mae->add_option("--pred", an.pred)->required()->check(CLI::ExistingFile);
  an_mae->add_option("--ref", an.ref)->required()->check(CLI::ExistingFile);
  an_mae->add_option("--slices", an.slices, "Slice times [fs]")->delimiter(',');
  add_model_options(an_mae, an.model);
  an_mae->add_option("--out", an.out, "CSV file ('-' for stdout)");
  auto* an_hist = an_cmd->add_subcommand("hist", "Time-resolved histogram of one variable");
  an_hist->add_option("--in", an.in)->required()->check(CLI::ExistingFile);
  an_hist->add_option("--var", an.var, "Variable index (0-based, x_e|p_e|Q|P order)");
  an_hist->add_option("--bins", an.bins)->check(CLI::PositiveNumber);
  an_hist->add_option("--range", an.range, "lo,hi")->delimiter(',')->expected(2);
  an_hist->add_option("--out", an.out, "CSV file ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!record_config.empty()) io::write_atomic(record_config, app.config_to_str(true, false));
    if (model_cmd->parsed()) return cmd_model(model_o);
    if (sim_cmd->parsed()) return cmd_simulate(sim, workers);
    if (ds_cmd->parsed()) return cmd_dataset(ds);
    if (tr_cmd->parsed()) return cmd_train(tr);
    if (ro_cmd->parsed()) return cmd_rollout(ro, workers);
    if (an_pop->parsed()) return cmd_analyze_populations(an);
    if (an_cmp->parsed()) return cmd_analyze_compare(an);
    if (an_mae->parsed()) return cmd_analyze_mae(an);
    if (an_hist->parsed()) return cmd_analyze_hist(an);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
