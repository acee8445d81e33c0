#pragma once

// Autoregressive rollout of trained networks and ensemble comparisons.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqcml/binary_io.hpp"
#include "sqcml/checkpoint.hpp"
#include "sqcml/dataset.hpp"
#include "sqcml/lstm.hpp"
#include "sqcml/parallel.hpp"
#include "sqcml/sqc.hpp"

namespace sqcml::analysis {

using Eigen::Index;
using Eigen::MatrixXd;
using sqc::Ensemble;
using sqc::Trajectory;
using surrogate::LstmParams;

class RolloutError : public std::runtime_error {
 public:
  RolloutError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Rolls a batch of initial vectors (D x B) forward by total_steps.
///
/// Each chunk maps its input to L-1 new vectors; the last vector of a chunk
/// seeds the next one. The final chunk is truncated so exactly total_steps
/// vectors follow the initial one. Returns total_steps + 1 matrices (D x B).
inline std::vector<MatrixXd> rollout_batch(const MatrixXd& x0, const LstmParams& params, std::size_t seq_len,
                                           std::size_t total_steps,
                                           const dataset::FeatureScaling* scaling = nullptr) {
  surrogate::check_seq_len(seq_len);
  if (x0.rows() != params.D) throw std::invalid_argument("rollout: state dimension does not match network");
  std::vector<MatrixXd> out;
  out.reserve(total_steps + 1);
  out.push_back(x0);

  // Work in the network's feature space; convert back per output.
  auto to_net = [&](MatrixXd m) {
    if (scaling) m = ((m.colwise() - scaling->mean).array().colwise() / scaling->scale.array()).matrix();
    return m;
  };
  auto from_net = [&](MatrixXd m) {
    if (scaling) m = ((m.array().colwise() * scaling->scale.array()).matrix().colwise() + scaling->mean).eval();
    return m;
  };

  MatrixXd input = to_net(x0);
  while (out.size() <= total_steps) {
    auto chunk = surrogate::predict_sequence(input, seq_len, params);
    const auto take = std::min(chunk.size(), total_steps + 1 - out.size());
    for (std::size_t k = 0; k < take; ++k) {
      if (!chunk[k].allFinite()) throw RolloutError(out.size(), "non-finite prediction");
      out.push_back(from_net(chunk[k]));
    }
    input = std::move(chunk.back());
  }
  return out;
}

inline Trajectory rollout_trajectory(const Eigen::VectorXd& x0, const LstmParams& params, std::size_t seq_len,
                                     std::size_t total_steps, std::size_t n_states, double record_dt = 1.0,
                                     const dataset::FeatureScaling* scaling = nullptr) {
  const auto steps = rollout_batch(MatrixXd(x0), params, seq_len, total_steps, scaling);
  Trajectory t;
  t.record_dt = record_dt;
  t.n_states = n_states;
  t.records.resize(static_cast<Index>(steps.size()), x0.size());
  for (std::size_t i = 0; i < steps.size(); ++i) t.records.row(static_cast<Index>(i)) = steps[i].col(0).transpose();
  return t;
}

/// Number of forward passes needed for total_steps predicted vectors.
inline std::size_t chunk_count(std::size_t seq_len, std::size_t total_steps) {
  surrogate::check_seq_len(seq_len);
  return (total_steps + seq_len - 2) / (seq_len - 1);
}

struct RolloutConfig {
  std::size_t n_traj = 2500;
  std::size_t total_steps = 100;
  std::size_t seq_len = 5;
  std::uint64_t seed = 0;
  std::size_t init_state = 0;
  double record_dt = 1.0;
  sqc::WindowConfig window{};
  std::size_t workers = 1;
};

/// Trajectories are rolled out in blocks of this many columns. The block
/// layout is fixed, so results do not depend on the worker count.
inline constexpr std::size_t kRolloutBlock = 64;

inline Ensemble rollout_ensemble(const models::SiteExcitonModel& model, const surrogate::Checkpoint& ck,
                                 const RolloutConfig& cfg) {
  surrogate::require_dim(ck, model.dim());
  if (cfg.seq_len != ck.seq_len())
    throw std::invalid_argument("rollout: chunk length " + std::to_string(cfg.seq_len) +
                                " differs from the checkpoint's " + std::to_string(ck.seq_len()));
  if (cfg.n_traj < 1 || cfg.total_steps < 1) throw std::invalid_argument("rollout: n_traj and steps must be >= 1");

  Ensemble ens;
  ens.model_label = model.label();
  ens.source = "lstm-rollout";
  ens.n_states = model.n_states();
  ens.n_modes = model.n_modes();
  ens.init_state = cfg.init_state;
  ens.record_dt = cfg.record_dt;
  ens.seed = cfg.seed;
  ens.trajectories.resize(cfg.n_traj);

  const auto D = static_cast<Index>(model.dim());
  const auto n_blocks = (cfg.n_traj + kRolloutBlock - 1) / kRolloutBlock;
  const auto* scaling = ck.scaling ? &*ck.scaling : nullptr;
  parallel_for(n_blocks, cfg.workers, [&](std::size_t blk) {
    const auto first = blk * kRolloutBlock;
    const auto n = std::min(kRolloutBlock, cfg.n_traj - first);
    MatrixXd x0(D, static_cast<Index>(n));
    for (std::size_t j = 0; j < n; ++j)
      x0.col(static_cast<Index>(j)) =
          sqc::sample_for_trajectory(model, cfg.init_state, cfg.window, cfg.seed, first + j).values();
    const auto steps = rollout_batch(x0, ck.params, cfg.seq_len, cfg.total_steps, scaling);
    for (std::size_t j = 0; j < n; ++j) {
      auto& t = ens.trajectories[first + j];
      t.record_dt = cfg.record_dt;
      t.n_states = model.n_states();
      t.records.resize(static_cast<Index>(steps.size()), D);
      for (std::size_t i = 0; i < steps.size(); ++i)
        t.records.row(static_cast<Index>(i)) = steps[i].col(static_cast<Index>(j)).transpose();
    }
  });
  return ens;
}

// ---- comparisons -----------------------------------------------------------

inline void require_same_grid(const Ensemble& a, const Ensemble& b) {
  if (a.n_states != b.n_states || a.n_modes != b.n_modes) throw std::invalid_argument("ensembles describe different models");
  if (a.n_records() != b.n_records() || a.record_dt != b.record_dt)
    throw std::invalid_argument("ensembles do not share a time grid");
}

struct PopulationComparison {
  std::vector<double> max_abs;   // per state
  std::vector<double> mean_abs;  // per state
  double mean_abs_all = 0.0;     // over states and defined times
  std::vector<std::size_t> undefined;  // time indices undefined in either ensemble
};

inline PopulationComparison compare_populations(const sqc::PopulationSeries& pred, const sqc::PopulationSeries& ref) {
  if (pred.n_times() != ref.n_times() || pred.n_states() != ref.n_states())
    throw std::invalid_argument("compare_populations: series do not share a grid");
  const auto n_s = pred.n_states();
  PopulationComparison c;
  c.max_abs.assign(n_s, 0.0);
  c.mean_abs.assign(n_s, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < pred.n_times(); ++i) {
    if (!pred.defined[i] || !ref.defined[i]) {
      c.undefined.push_back(i);
      continue;
    }
    ++used;
    for (std::size_t k = 0; k < n_s; ++k) {
      const double d = std::abs(pred.population(i, k) - ref.population(i, k));
      c.max_abs[k] = std::max(c.max_abs[k], d);
      c.mean_abs[k] += d;
    }
  }
  double all = 0.0;
  for (std::size_t k = 0; k < n_s; ++k) {
    c.mean_abs[k] = used ? c.mean_abs[k] / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    all += c.mean_abs[k];
  }
  c.mean_abs_all = all / static_cast<double>(n_s);
  return c;
}

inline PopulationComparison compare_populations(const Ensemble& pred, const Ensemble& ref,
                                                const sqc::WindowConfig& cfg = {}) {
  require_same_grid(pred, ref);
  return compare_populations(sqc::populations(pred, cfg), sqc::populations(ref, cfg));
}

struct DofErrorTable {
  std::vector<double> slice_times;
  std::vector<std::string> labels;  // Q<state>_<mode> then P<state>_<mode>, 1-based
  MatrixXd mae;                     // labels x slices
};

inline std::vector<std::string> nuclear_labels(const Ensemble& ens, const models::SiteExcitonModel* model = nullptr) {
  std::vector<std::string> labels;
  for (const char* kind : {"Q", "P"}) {
    if (model) {
      for (std::size_t k = 0; k < model->n_states(); ++k)
        for (std::size_t j = model->first_mode(k); j < model->end_mode(k); ++j)
          labels.push_back(std::string(kind) + std::to_string(k + 1) + "_" + std::to_string(j - model->first_mode(k) + 1));
    } else {
      for (std::size_t j = 0; j < ens.n_modes; ++j) labels.push_back(std::string(kind) + std::to_string(j + 1));
    }
  }
  return labels;
}

/// Mean absolute error per nuclear coordinate and momentum at each slice
/// time, pairing trajectory i of `pred` with trajectory i of `ref`.
inline DofErrorTable dof_mae(const Ensemble& pred, const Ensemble& ref, const std::vector<double>& slice_times,
                             const models::SiteExcitonModel* model = nullptr) {
  require_same_grid(pred, ref);
  if (pred.size() != ref.size() || pred.size() == 0)
    throw std::invalid_argument("dof_mae: ensembles must hold the same non-zero number of trajectories");
  const auto nv = pred.n_modes;
  const auto off = static_cast<Index>(2 * pred.n_states);
  DofErrorTable tab;
  tab.slice_times = slice_times;
  tab.labels = nuclear_labels(pred, model);
  tab.mae = MatrixXd::Zero(static_cast<Index>(2 * nv), static_cast<Index>(slice_times.size()));
  for (std::size_t s = 0; s < slice_times.size(); ++s) {
    const auto idx = sqc::whole_multiple(slice_times[s], pred.record_dt, "dof_mae slice time");
    if (idx >= pred.n_records()) throw std::invalid_argument("dof_mae: slice time beyond the trajectories");
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const auto a = pred.trajectories[t].records.row(static_cast<Index>(idx));
      const auto b = ref.trajectories[t].records.row(static_cast<Index>(idx));
      tab.mae.col(static_cast<Index>(s)) +=
          (a.segment(off, static_cast<Index>(2 * nv)) - b.segment(off, static_cast<Index>(2 * nv))).cwiseAbs().transpose();
    }
    tab.mae.col(static_cast<Index>(s)) /= static_cast<double>(pred.size());
  }
  return tab;
}

struct Histogram {
  std::vector<double> times;
  std::vector<double> bin_centers;
  MatrixXd density;                  // times x bins, fraction of trajectories per bin
  std::vector<double> outside;       // fraction outside the range, per time
};

inline Histogram coordinate_histogram(const Ensemble& ens, std::size_t variable, std::size_t bins, double lo, double hi) {
  if (variable >= ens.dim()) throw std::invalid_argument("coordinate_histogram: variable index out of range");
  if (bins == 0 || !(hi > lo)) throw std::invalid_argument("coordinate_histogram: empty range");
  if (ens.size() == 0) throw std::invalid_argument("coordinate_histogram: empty ensemble");
  const auto n_t = ens.n_records();
  Histogram h;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) h.bin_centers.push_back(lo + (static_cast<double>(b) + 0.5) * width);
  h.density = MatrixXd::Zero(static_cast<Index>(n_t), static_cast<Index>(bins));
  h.outside.assign(n_t, 0.0);
  const double unit = 1.0 / static_cast<double>(ens.size());
  for (std::size_t i = 0; i < n_t; ++i) {
    h.times.push_back(static_cast<double>(i) * ens.record_dt);
    for (const auto& t : ens.trajectories) {
      const double v = t.records(static_cast<Index>(i), static_cast<Index>(variable));
      if (!(v >= lo && v <= hi)) {
        h.outside[i] += unit;
        continue;
      }
      auto b = static_cast<std::size_t>((v - lo) / width);
      if (b >= bins) b = bins - 1;
      h.density(static_cast<Index>(i), static_cast<Index>(b)) += unit;
    }
  }
  return h;
}

// ---- CSV output ------------------------------------------------------------

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Columns: time,P1..Pn,unassigned
inline std::string populations_csv(const sqc::PopulationSeries& s) {
  std::ostringstream os;
  os << "time";
  for (std::size_t k = 0; k < s.n_states(); ++k) os << ",P" << (k + 1);
  os << ",unassigned\n";
  for (std::size_t i = 0; i < s.n_times(); ++i) {
    os << format_number(s.times[i]);
    for (std::size_t k = 0; k < s.n_states(); ++k) os << ',' << format_number(s.population(i, k));
    os << ',' << format_number(s.unassigned[i]) << '\n';
  }
  return os.str();
}

/// Columns: state,max_abs_dev,mean_abs_dev ; a final "all" row carries the
/// state-averaged mean deviation and the undefined point count.
inline std::string comparison_csv(const PopulationComparison& c) {
  std::ostringstream os;
  os << "state,max_abs_dev,mean_abs_dev,undefined_points\n";
  double worst = 0.0;
  for (std::size_t k = 0; k < c.max_abs.size(); ++k) {
    os << (k + 1) << ',' << format_number(c.max_abs[k]) << ',' << format_number(c.mean_abs[k]) << ','
       << c.undefined.size() << '\n';
    worst = std::max(worst, c.max_abs[k]);
  }
  os << "all," << format_number(worst) << ',' << format_number(c.mean_abs_all) << ',' << c.undefined.size() << '\n';
  return os.str();
}

/// Columns: dof_label,t<slice>... (e.g. t20,t40)
inline std::string mae_csv(const DofErrorTable& t) {
  std::ostringstream os;
  os << "dof_label";
  for (double s : t.slice_times) os << ",t" << format_number(s);
  os << '\n';
  for (std::size_t r = 0; r < t.labels.size(); ++r) {
    os << t.labels[r];
    for (Index c = 0; c < t.mae.cols(); ++c) os << ',' << format_number(t.mae(static_cast<Index>(r), c));
    os << '\n';
  }
  return os.str();
}

/// Columns: time,bin_center,density
inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os << "time,bin_center,density\n";
  for (std::size_t i = 0; i < h.times.size(); ++i)
    for (std::size_t b = 0; b < h.bin_centers.size(); ++b)
      os << format_number(h.times[i]) << ',' << format_number(h.bin_centers[b]) << ','
         << format_number(h.density(static_cast<Index>(i), static_cast<Index>(b))) << '\n';
  return os.str();
}

}  // namespace sqcml::analysis
