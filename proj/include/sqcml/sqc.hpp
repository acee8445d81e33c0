#pragma once

// Symmetrical quasi-classical dynamics on the Meyer-Miller mapping
// Hamiltonian with triangle windows.
//
// Phase-space vectors are laid out as x_e | p_e | Q | P, where x_e and p_e hold
// one mapping oscillator per electronic state and Q, P follow the model's
// state-major mode order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqcml/binary_io.hpp"
#include "sqcml/models.hpp"
#include "sqcml/parallel.hpp"
#include "sqcml/rng.hpp"
#include "sqcml/units.hpp"

namespace sqcml::sqc {

using models::SiteExcitonModel;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct WindowConfig {
  double gamma = 1.0 / 3.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("WindowConfig: gamma must lie in (0, 1)");
  }
};

struct IntegratorConfig {
  double dt_internal = 0.01;  // fs
  double hbar = units::hbar;  // eV*fs
};

class PhaseSpaceState {
 public:
  PhaseSpaceState(std::size_t n_states, std::size_t n_modes, double t = 0.0)
      : n_states_(n_states), n_modes_(n_modes), t_(t), values_(Eigen::VectorXd::Zero(2 * (n_states + n_modes))) {}

  PhaseSpaceState(std::size_t n_states, Eigen::VectorXd values, double t = 0.0)
      : n_states_(n_states), t_(t), values_(std::move(values)) {
    const auto d = static_cast<std::size_t>(values_.size());
    if (d < 2 * n_states || d % 2 != 0) throw std::invalid_argument("PhaseSpaceState: bad vector length");
    n_modes_ = d / 2 - n_states;
  }

  explicit PhaseSpaceState(const SiteExcitonModel& model, double t = 0.0)
      : PhaseSpaceState(model.n_states(), model.n_modes(), t) {}

  std::size_t n_states() const { return n_states_; }
  std::size_t n_modes() const { return n_modes_; }
  std::size_t dim() const { return static_cast<std::size_t>(values_.size()); }
  double t() const { return t_; }
  void set_t(double t) { t_ = t; }

  auto x_e() { return values_.segment(0, ne()); }
  auto p_e() { return values_.segment(ne(), ne()); }
  auto q() { return values_.segment(2 * ne(), nv()); }
  auto p() { return values_.segment(2 * ne() + nv(), nv()); }
  auto x_e() const { return values_.segment(0, ne()); }
  auto p_e() const { return values_.segment(ne(), ne()); }
  auto q() const { return values_.segment(2 * ne(), nv()); }
  auto p() const { return values_.segment(2 * ne() + nv(), nv()); }

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  void check(const SiteExcitonModel& model) const {
    if (n_states_ != model.n_states() || n_modes_ != model.n_modes())
      throw std::invalid_argument("PhaseSpaceState: dimensions do not match model " + model.label());
  }

 private:
  Eigen::Index ne() const { return static_cast<Eigen::Index>(n_states_); }
  Eigen::Index nv() const { return static_cast<Eigen::Index>(n_modes_); }

  std::size_t n_states_;
  std::size_t n_modes_ = 0;
  double t_;
  Eigen::VectorXd values_;
};

/// Mapping action n = (x^2 + p^2)/2 - gamma.
inline double action(double x, double p, const WindowConfig& cfg = {}) { return 0.5 * (x * x + p * p) - cfg.gamma; }

/// Triangle window of state k, evaluated on the actions n.
///
/// With e = n + gamma, state k is occupied when e_k >= 1, every other e_j >= 0,
/// and e_k + e_j < 2 for every other j. The pairwise bound is strict so the
/// windows of different states are exactly disjoint.
inline bool in_window(const Eigen::Ref<const Eigen::VectorXd>& n, std::size_t k, const WindowConfig& cfg = {}) {
  const double g = cfg.gamma;
  const double ek = n(k) + g;
  if (!(ek >= 1.0)) return false;
  for (Eigen::Index j = 0; j < n.size(); ++j) {
    if (static_cast<std::size_t>(j) == k) continue;
    const double ej = n(j) + g;
    if (!(ej >= 0.0 && ek + ej < 2.0)) return false;
  }
  return true;
}

inline std::optional<std::size_t> window_assign_actions(const Eigen::Ref<const Eigen::VectorXd>& n,
                                                        const WindowConfig& cfg = {}) {
  for (Eigen::Index k = 0; k < n.size(); ++k)
    if (in_window(n, static_cast<std::size_t>(k), cfg)) return static_cast<std::size_t>(k);
  return std::nullopt;
}

inline std::optional<std::size_t> window_assign(const Eigen::Ref<const Eigen::VectorXd>& x_e,
                                                const Eigen::Ref<const Eigen::VectorXd>& p_e,
                                                const WindowConfig& cfg = {}) {
  if (x_e.size() != p_e.size() || x_e.size() < 2)
    throw std::invalid_argument("window_assign: need matching x_e/p_e with at least two states");
  Eigen::VectorXd n(x_e.size());
  for (Eigen::Index k = 0; k < n.size(); ++k) n(k) = action(x_e(k), p_e(k), cfg);
  return window_assign_actions(n, cfg);
}

inline std::optional<std::size_t> window_assign(const PhaseSpaceState& s, const WindowConfig& cfg = {}) {
  return window_assign(s.x_e(), s.p_e(), cfg);
}

/// Mapping Hamiltonian with the state-independent bath energy counted once:
///   H = H_ph + sum_k n_k (V_kk + sum_j kappa_kj Q_kj) + 1/2 sum_{k!=l} (x_k x_l + p_k p_l) V_kl
inline double mm_energy(const SiteExcitonModel& model, const PhaseSpaceState& s, const WindowConfig& cfg = {}) {
  s.check(model);
  const auto x = s.x_e();
  const auto p = s.p_e();
  Eigen::VectorXd diag;
  models::diabatic_diagonal(model, s.q(), diag);
  double h = models::bath_energy(model, s.q(), s.p());
  const auto n = model.n_states();
  for (std::size_t k = 0; k < n; ++k) {
    h += action(x(k), p(k), cfg) * diag(k);
    for (std::size_t l = 0; l < n; ++l)
      if (l != k) h += 0.5 * (x(k) * x(l) + p(k) * p(l)) * model.v()(k, l);
  }
  return h;
}

namespace detail {

// Hamilton's equations, dy/dt = J grad H / hbar, written into `dy`.
inline void eom_into(const SiteExcitonModel& model, const Eigen::VectorXd& y, double gamma, double hbar,
                     Eigen::VectorXd& diag, Eigen::VectorXd& dy) {
  const auto ne = static_cast<Eigen::Index>(model.n_states());
  const auto nv = static_cast<Eigen::Index>(model.n_modes());
  const double* x = y.data();
  const double* p = x + ne;
  const double* q = p + ne;
  const double* pn = q + nv;
  double* dx = dy.data();
  double* dp = dx + ne;
  double* dq = dp + ne;
  double* dpn = dq + nv;
  const double inv = 1.0 / hbar;
  const auto& v = model.v();
  const auto& w = model.omega();
  const auto& kappa = model.kappa();

  models::diabatic_diagonal(model, y.segment(2 * ne, nv), diag);
  for (Eigen::Index k = 0; k < ne; ++k) {
    double sx = p[k] * diag(k);
    double sp = x[k] * diag(k);
    for (Eigen::Index l = 0; l < ne; ++l) {
      if (l == k) continue;
      sx += p[l] * v(k, l);
      sp += x[l] * v(k, l);
    }
    dx[k] = inv * sx;
    dp[k] = -inv * sp;
  }
  for (Eigen::Index j = 0; j < nv; ++j) {
    const auto k = static_cast<Eigen::Index>(model.owner(static_cast<std::size_t>(j)));
    const double nk = 0.5 * (x[k] * x[k] + p[k] * p[k]) - gamma;
    dq[j] = inv * w[j] * pn[j];
    dpn[j] = -inv * (w[j] * q[j] + kappa[j] * nk);
  }
}

inline std::string variable_name(std::size_t n_states, std::size_t n_modes, std::size_t idx) {
  const std::size_t ne = n_states;
  if (idx < ne) return "x_e[" + std::to_string(idx) + "]";
  if (idx < 2 * ne) return "p_e[" + std::to_string(idx - ne) + "]";
  if (idx < 2 * ne + n_modes) return "Q[" + std::to_string(idx - 2 * ne) + "]";
  return "P[" + std::to_string(idx - 2 * ne - n_modes) + "]";
}

}  // namespace detail

/// Time derivative of every phase-space variable, in fs^-1.
inline Eigen::VectorXd eom(const SiteExcitonModel& model, const PhaseSpaceState& s, const WindowConfig& cfg = {},
                           double hbar = units::hbar) {
  s.check(model);
  Eigen::VectorXd dy(s.values().size()), diag;
  detail::eom_into(model, s.values(), cfg.gamma, hbar, diag, dy);
  return dy;
}

/// Draws an initial condition inside the triangle window of `init_state`.
///
/// Electronic actions e_k = n_k + gamma are uniform over the window support
/// (e_init in [1,2], others in [0,1], e_init + e_j < 2), with uniform angles.
/// Each phonon mode sits on its ground-state ring Q^2 + P^2 = 1.
inline PhaseSpaceState sample_initial(const SiteExcitonModel& model, std::size_t init_state, const WindowConfig& cfg,
                                      Stream& rng) {
  const auto n = model.n_states();
  if (init_state >= n) throw std::invalid_argument("sample_initial: init_state out of range");
  PhaseSpaceState s(model);

  std::vector<double> e(n);
  for (bool accepted = false; !accepted;) {
    for (std::size_t k = 0; k < n; ++k) e[k] = (k == init_state) ? rng.uniform(1.0, 2.0) : rng.uniform(0.0, 1.0);
    accepted = true;
    for (std::size_t k = 0; k < n; ++k)
      if (k != init_state && !(e[init_state] + e[k] < 2.0)) accepted = false;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double theta = rng.uniform(0.0, 2.0 * units::pi);
    const double r = std::sqrt(2.0 * e[k]);
    s.x_e()(k) = r * std::cos(theta);
    s.p_e()(k) = -r * std::sin(theta);
  }
  for (std::size_t j = 0; j < model.n_modes(); ++j) {
    const double phi = rng.uniform(0.0, 2.0 * units::pi);
    s.q()(j) = std::cos(phi);
    s.p()(j) = -std::sin(phi);
  }
  (void)cfg;
  return s;
}

struct Trajectory {
  double record_dt = 1.0;
  std::size_t n_states = 0;
  RowMatrix records;  // one row per recorded time, t_i = i * record_dt

  std::size_t size() const { return static_cast<std::size_t>(records.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(records.cols()); }
  double time(std::size_t i) const { return static_cast<double>(i) * record_dt; }
  PhaseSpaceState state(std::size_t i) const {
    return PhaseSpaceState(n_states, Eigen::VectorXd(records.row(static_cast<Eigen::Index>(i)).transpose()), time(i));
  }
};

class PropagationError : public std::runtime_error {
 public:
  PropagationError(double t, std::string variable)
      : std::runtime_error("non-finite value in " + variable + " at t = " + std::to_string(t) + " fs"),
        t_(t),
        variable_(std::move(variable)) {}
  double t() const { return t_; }
  const std::string& variable() const { return variable_; }

 private:
  double t_;
  std::string variable_;
};

/// Returns n such that n * unit == span up to rounding, or throws.
inline std::size_t whole_multiple(double span, double unit, const char* what) {
  if (!(unit > 0.0) || !(span >= 0.0)) throw std::invalid_argument(std::string(what) + ": intervals must be positive");
  const double r = std::round(span / unit);
  if (std::abs(r * unit - span) > 1e-9 * std::max(1.0, std::abs(span)))
    throw std::invalid_argument(std::string(what) + ": interval is not a whole multiple");
  return static_cast<std::size_t>(r);
}

/// Fixed-step classical RK4. Records every record_dt, including t = 0.
inline Trajectory propagate(const SiteExcitonModel& model, const PhaseSpaceState& initial,
                            const IntegratorConfig& icfg, double t_end, double record_dt,
                            const WindowConfig& wcfg = {}) {
  initial.check(model);
  const auto n_records = whole_multiple(t_end, record_dt, "propagate t_end/record_dt") + 1;
  const auto substeps = whole_multiple(record_dt, icfg.dt_internal, "propagate record_dt/dt_internal");
  const double h = icfg.dt_internal;
  const auto d = static_cast<Eigen::Index>(initial.dim());

  Trajectory traj;
  traj.record_dt = record_dt;
  traj.n_states = model.n_states();
  traj.records.resize(static_cast<Eigen::Index>(n_records), d);

  Eigen::VectorXd y = initial.values(), k1(d), k2(d), k3(d), k4(d), tmp(d), diag;
  auto f = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    detail::eom_into(model, in, wcfg.gamma, icfg.hbar, diag, out);
  };
  traj.records.row(0) = y.transpose();
  for (std::size_t r = 1; r < n_records; ++r) {
    for (std::size_t s = 0; s < substeps; ++s) {
      f(y, k1);
      tmp = y + 0.5 * h * k1;
      f(tmp, k2);
      tmp = y + 0.5 * h * k2;
      f(tmp, k3);
      tmp = y + h * k3;
      f(tmp, k4);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!y.allFinite()) {
        Eigen::Index bad = 0;
        while (bad < d && std::isfinite(y(bad))) ++bad;
        const double t = (static_cast<double>(r - 1) * static_cast<double>(substeps) + static_cast<double>(s + 1)) * h;
        throw PropagationError(t, detail::variable_name(model.n_states(), model.n_modes(), static_cast<std::size_t>(bad)));
      }
    }
    traj.records.row(static_cast<Eigen::Index>(r)) = y.transpose();
  }
  return traj;
}

/// Largest |H(t) - H(0)| over the recorded states.
inline double energy_drift(const SiteExcitonModel& model, const Trajectory& traj, const WindowConfig& cfg = {}) {
  const double e0 = mm_energy(model, traj.state(0), cfg);
  double worst = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) worst = std::max(worst, std::abs(mm_energy(model, traj.state(i), cfg) - e0));
  return worst;
}

// ---- ensembles -------------------------------------------------------------

struct Ensemble {
  std::string model_label;
  std::string source = "mm-sqc";
  std::size_t n_states = 0;
  std::size_t n_modes = 0;
  std::size_t init_state = 0;
  double record_dt = 1.0;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  std::size_t dim() const { return 2 * (n_states + n_modes); }
  std::size_t n_records() const { return trajectories.empty() ? 0 : trajectories.front().size(); }

  bool operator==(const Ensemble& o) const {
    if (model_label != o.model_label || source != o.source || n_states != o.n_states || n_modes != o.n_modes ||
        init_state != o.init_state || record_dt != o.record_dt || seed != o.seed || size() != o.size())
      return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (trajectories[i].records != o.trajectories[i].records) return false;
    return true;
  }
};

struct EnsembleConfig {
  std::size_t n_traj = 500;
  std::size_t init_state = 0;
  std::uint64_t seed = 0;
  double t_end = 100.0;
  double record_dt = 1.0;
  IntegratorConfig integrator{};
  WindowConfig window{};
  std::size_t workers = 1;
};

/// Name of the per-trajectory initial-condition stream. Reference dynamics and
/// surrogate rollouts sharing a seed start from identical conditions.
inline constexpr const char* kSamplingStream = "sampling";

class EnsembleError : public std::runtime_error {
 public:
  EnsembleError(std::size_t index, const std::string& what)
      : std::runtime_error("trajectory " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

inline PhaseSpaceState sample_for_trajectory(const SiteExcitonModel& model, std::size_t init_state,
                                             const WindowConfig& cfg, std::uint64_t seed, std::size_t index) {
  Stream rng(seed, kSamplingStream, index);
  return sample_initial(model, init_state, cfg, rng);
}

inline Ensemble run_ensemble(const SiteExcitonModel& model, const EnsembleConfig& cfg) {
  if (cfg.n_traj < 1) throw std::invalid_argument("run_ensemble: n_traj must be >= 1");
  cfg.window.validate();
  Ensemble ens;
  ens.model_label = model.label();
  ens.n_states = model.n_states();
  ens.n_modes = model.n_modes();
  ens.init_state = cfg.init_state;
  ens.record_dt = cfg.record_dt;
  ens.seed = cfg.seed;
  ens.trajectories.resize(cfg.n_traj);
  parallel_for(cfg.n_traj, cfg.workers, [&](std::size_t i) {
    try {
      const auto s0 = sample_for_trajectory(model, cfg.init_state, cfg.window, cfg.seed, i);
      ens.trajectories[i] = propagate(model, s0, cfg.integrator, cfg.t_end, cfg.record_dt, cfg.window);
    } catch (const std::exception& e) {
      throw EnsembleError(i, e.what());
    }
  });
  return ens;
}

inline constexpr io::Magic kEnsembleMagic = io::make_magic("SQCTRAJ1");
inline constexpr int kEnsembleVersion = 1;

/// Payload order: trajectory-major, then time, then variable (x_e|p_e|Q|P).
inline std::string encode_ensemble(const Ensemble& ens) {
  const auto n_rec = ens.n_records();
  const auto d = ens.dim();
  std::vector<double> payload;
  payload.reserve(ens.size() * n_rec * d);
  for (const auto& t : ens.trajectories) {
    if (t.size() != n_rec || t.dim() != d) throw std::invalid_argument("encode_ensemble: ragged ensemble");
    payload.insert(payload.end(), t.records.data(), t.records.data() + t.records.size());
  }
  io::json h;
  h["format"] = "sqcml-ensemble";
  h["format_version"] = kEnsembleVersion;
  h["model_label"] = ens.model_label;
  h["source"] = ens.source;
  h["n_traj"] = ens.size();
  h["n_records"] = n_rec;
  h["n_steps"] = n_rec == 0 ? 0 : n_rec - 1;
  h["record_dt"] = ens.record_dt;
  h["dim"] = d;
  h["n_states"] = ens.n_states;
  h["n_modes"] = ens.n_modes;
  h["init_state"] = ens.init_state;
  h["variable_ordering"] = "x_e|p_e|Q|P";
  h["seed"] = ens.seed;
  return io::encode(kEnsembleMagic, std::move(h), payload);
}

inline Ensemble decode_ensemble(std::string_view bytes) {
  auto d = io::decode(kEnsembleMagic, bytes);
  const auto& h = d.header;
  if (io::field<int>(h, "format_version") != kEnsembleVersion)
    throw io::IoError(io::Errc::version_mismatch, "unsupported ensemble format version");
  Ensemble ens;
  ens.model_label = io::field<std::string>(h, "model_label");
  ens.source = io::field<std::string>(h, "source");
  ens.n_states = io::field<std::size_t>(h, "n_states");
  ens.n_modes = io::field<std::size_t>(h, "n_modes");
  ens.init_state = io::field<std::size_t>(h, "init_state");
  ens.record_dt = io::field<double>(h, "record_dt");
  ens.seed = io::field<std::uint64_t>(h, "seed");
  const auto n_traj = io::field<std::size_t>(h, "n_traj");
  const auto n_rec = io::field<std::size_t>(h, "n_records");
  const auto dim = io::field<std::size_t>(h, "dim");
  if (dim != ens.dim() || io::field<std::string>(h, "variable_ordering") != "x_e|p_e|Q|P")
    throw io::IoError(io::Errc::dimension_mismatch, "dim does not equal 2*(n_states + n_modes)");
  if (d.payload.size() != n_traj * n_rec * dim)
    throw io::IoError(io::Errc::truncated, "payload size disagrees with n_traj * n_records * dim");

  ens.trajectories.resize(n_traj);
  const double* p = d.payload.data();
  for (auto& t : ens.trajectories) {
    t.record_dt = ens.record_dt;
    t.n_states = ens.n_states;
    t.records = Eigen::Map<const RowMatrix>(p, static_cast<Eigen::Index>(n_rec), static_cast<Eigen::Index>(dim));
    p += n_rec * dim;
  }
  return ens;
}

inline void save_ensemble(const std::filesystem::path& path, const Ensemble& ens) {
  io::write_atomic(path, encode_ensemble(ens));
}

inline Ensemble load_ensemble(const std::filesystem::path& path) { return decode_ensemble(io::read_all(path)); }

// ---- populations -----------------------------------------------------------

struct PopulationSeries {
  std::vector<double> times;
  Eigen::MatrixXd population;          // n_times x n_states, NaN where undefined
  std::vector<double> unassigned;      // fraction of trajectories in no window
  std::vector<std::size_t> counts;     // trajectories assigned to some state
  std::vector<bool> defined;

  std::size_t n_times() const { return times.size(); }
  std::size_t n_states() const { return static_cast<std::size_t>(population.cols()); }
  bool all_defined() const {
    for (bool b : defined)
      if (!b) return false;
    return true;
  }
};

/// Window-binned populations, renormalized over assigned trajectories.
inline PopulationSeries populations(const Ensemble& ens, const WindowConfig& cfg = {}) {
  if (ens.size() == 0) throw std::invalid_argument("populations: empty ensemble");
  const auto n_t = ens.n_records();
  const auto n_s = ens.n_states;
  for (const auto& t : ens.trajectories)
    if (t.size() != n_t) throw std::invalid_argument("populations: trajectories do not share a time grid");

  PopulationSeries out;
  out.population = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_t), static_cast<Eigen::Index>(n_s));
  out.times.resize(n_t);
  out.unassigned.resize(n_t);
  out.counts.resize(n_t);
  out.defined.resize(n_t);
  Eigen::VectorXd n(static_cast<Eigen::Index>(n_s));
  for (std::size_t i = 0; i < n_t; ++i) {
    out.times[i] = static_cast<double>(i) * ens.record_dt;
    std::vector<std::size_t> hits(n_s, 0);
    std::size_t assigned = 0;
    for (const auto& t : ens.trajectories) {
      const auto row = t.records.row(static_cast<Eigen::Index>(i));
      for (std::size_t k = 0; k < n_s; ++k)
        n(k) = action(row(static_cast<Eigen::Index>(k)), row(static_cast<Eigen::Index>(n_s + k)), cfg);
      if (auto k = window_assign_actions(n, cfg)) {
        ++hits[*k];
        ++assigned;
      }
    }
    out.counts[i] = assigned;
    out.unassigned[i] = 1.0 - static_cast<double>(assigned) / static_cast<double>(ens.size());
    out.defined[i] = assigned > 0;
    for (std::size_t k = 0; k < n_s; ++k)
      out.population(i, k) = assigned > 0 ? static_cast<double>(hits[k]) / static_cast<double>(assigned)
                                          : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace sqcml::sqc
