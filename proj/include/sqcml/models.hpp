#pragma once

// Site-exciton electron-phonon Hamiltonians.
//
//   H = sum_k |k> V_kk <k| + sum_{k!=l} |k> V_kl <l|
//     + sum_k sum_j 1/2 w_kj (Q_kj^2 + P_kj^2)
//     + sum_k |k> (sum_j kappa_kj Q_kj) <k|
//
// Each electronic state owns its own list of harmonic modes. Coordinates are
// dimensionless (mass- and frequency-scaled), energies in eV. Flattened mode
// arrays are ordered state-major, then mode index within the state.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sqcml/binary_io.hpp"
#include "sqcml/units.hpp"

namespace sqcml::models {

struct Mode {
  double omega;  // eV
  double kappa;  // eV
};

struct DebyeBathSpec {
  double lambda;       // reorganization energy, eV
  double omega_c;      // characteristic frequency, eV
  std::size_t n_modes;
  double delta_omega;  // grid spacing, eV

  void validate() const {
    if (!(lambda >= 0.0) || !(omega_c > 0.0) || n_modes == 0 || !(delta_omega > 0.0))
      throw std::invalid_argument("DebyeBathSpec: lambda must be >= 0; omega_c, n_modes, delta_omega > 0");
  }
};

/// Debye spectral density J(w) = 2 lambda w w_c / (w^2 + w_c^2).
inline double debye_spectral_density(double lambda, double omega_c, double omega) {
  return 2.0 * lambda * omega * omega_c / (omega * omega + omega_c * omega_c);
}

/// Equidistant discretization w_i = i*dw, kappa_i = sqrt((2/pi) J(w_i) dw).
inline std::vector<Mode> discretize_debye(const DebyeBathSpec& spec) {
  spec.validate();
  std::vector<Mode> modes;
  modes.reserve(spec.n_modes);
  for (std::size_t i = 1; i <= spec.n_modes; ++i) {
    const double w = static_cast<double>(i) * spec.delta_omega;
    const double j = debye_spectral_density(spec.lambda, spec.omega_c, w);
    modes.push_back({w, std::sqrt(2.0 / units::pi * j * spec.delta_omega)});
  }
  return modes;
}

/// Bath used by models V and VI: lambda = 62.5 cm^-1, w_c = 500 cm^-1,
/// 70 modes on a 12 cm^-1 grid.
inline DebyeBathSpec default_debye_bath() {
  return {units::from_wavenumber(62.5), units::from_wavenumber(500.0), 70, units::from_wavenumber(12.0)};
}

/// The eight PBI modes (omega, kappa) in eV attached to each state of models I-IV.
inline std::vector<Mode> pbi_modes() {
  return {{0.0680, -0.0266}, {0.0811, -0.0194}, {0.1649, -0.1120}, {0.1727, -0.0720},
          {0.1748, 0.0378},  {0.1823, 0.0383},  {0.1991, 0.1101},  {0.2020, 0.0642}};
}

class SiteExcitonModel {
 public:
  SiteExcitonModel(std::string label, Eigen::MatrixXd v, std::vector<std::vector<Mode>> modes_per_state)
      : label_(std::move(label)), v_(std::move(v)), modes_(std::move(modes_per_state)) {
    const auto n = v_.rows();
    if (n < 1 || v_.cols() != n) throw std::invalid_argument("SiteExcitonModel: v must be square and non-empty");
    if (static_cast<std::size_t>(n) != modes_.size())
      throw std::invalid_argument("SiteExcitonModel: need one mode list per state");
    if (!v_.allFinite()) throw std::invalid_argument("SiteExcitonModel: v has non-finite entries");
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index l = 0; l < k; ++l)
        if (v_(k, l) != v_(l, k)) throw std::invalid_argument("SiteExcitonModel: v must be symmetric");

    offsets_.push_back(0);
    for (std::size_t k = 0; k < modes_.size(); ++k) {
      for (const auto& m : modes_[k]) {
        if (!(m.omega > 0.0) || !std::isfinite(m.omega) || !std::isfinite(m.kappa))
          throw std::invalid_argument("SiteExcitonModel: modes need omega > 0 and finite kappa");
        omega_.push_back(m.omega);
        kappa_.push_back(m.kappa);
        owner_.push_back(k);
      }
      offsets_.push_back(omega_.size());
    }
  }

  const std::string& label() const { return label_; }
  std::size_t n_states() const { return modes_.size(); }
  /// Total number of phonon modes N_v over all states.
  std::size_t n_modes() const { return omega_.size(); }
  /// Phase-space dimension 2 N_e + 2 N_v.
  std::size_t dim() const { return 2 * n_states() + 2 * n_modes(); }

  const Eigen::MatrixXd& v() const { return v_; }
  const std::vector<Mode>& modes(std::size_t state) const { return modes_.at(state); }
  const std::vector<std::vector<Mode>>& modes_per_state() const { return modes_; }

  // Flattened (state-major) views.
  const std::vector<double>& omega() const { return omega_; }
  const std::vector<double>& kappa() const { return kappa_; }
  std::size_t owner(std::size_t mode) const { return owner_[mode]; }
  std::size_t first_mode(std::size_t state) const { return offsets_[state]; }
  std::size_t end_mode(std::size_t state) const { return offsets_[state + 1]; }

  /// Copy with every coupling constant set to zero.
  SiteExcitonModel without_coupling() const {
    auto modes = modes_;
    for (auto& list : modes)
      for (auto& m : list) m.kappa = 0.0;
    return SiteExcitonModel(label_ + "-uncoupled", v_, std::move(modes));
  }

 private:
  std::string label_;
  Eigen::MatrixXd v_;
  std::vector<std::vector<Mode>> modes_;
  std::vector<double> omega_, kappa_;
  std::vector<std::size_t> owner_;
  std::vector<std::size_t> offsets_;
};

enum class ModelId { I, II, III, IV, V, VI };

inline ModelId parse_model_id(std::string_view s) {
  if (s == "I") return ModelId::I;
  if (s == "II") return ModelId::II;
  if (s == "III") return ModelId::III;
  if (s == "IV") return ModelId::IV;
  if (s == "V") return ModelId::V;
  if (s == "VI") return ModelId::VI;
  throw std::invalid_argument("unknown model identifier '" + std::string(s) + "' (expected I..VI)");
}

inline const char* to_string(ModelId id) {
  static constexpr const char* names[] = {"I", "II", "III", "IV", "V", "VI"};
  return names[static_cast<int>(id)];
}

inline SiteExcitonModel build_model(ModelId id) {
  auto sym = [](std::initializer_list<std::initializer_list<double>> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(n, n);
    Eigen::Index r = 0;
    for (const auto& row : rows) {
      Eigen::Index c = 0;
      for (double x : row) m(r, c++) = x;
      ++r;
    }
    return m;
  };
  auto replicate = [](std::size_t n, const std::vector<Mode>& modes) {
    return std::vector<std::vector<Mode>>(n, modes);
  };
  const std::string label = std::string("Model ") + to_string(id);

  switch (id) {
    case ModelId::I:
      return {label, sym({{0.0, 0.2}, {0.2, 0.0}}), replicate(2, pbi_modes())};
    case ModelId::II:
      return {label, sym({{0.2, 0.2}, {0.2, 0.0}}), replicate(2, pbi_modes())};
    case ModelId::III:
      return {label, sym({{0.0, 0.2, 0.0}, {0.2, 0.0, 0.2}, {0.0, 0.2, 0.0}}), replicate(3, pbi_modes())};
    case ModelId::IV:
      // Diagonal as tabulated: (0.2, 0.1, 0.0).
      return {label, sym({{0.2, 0.2, 0.0}, {0.2, 0.1, 0.2}, {0.0, 0.2, 0.0}}), replicate(3, pbi_modes())};
    case ModelId::V:
      return {label, sym({{0.00, 0.03}, {0.03, 0.00}}), replicate(2, discretize_debye(default_debye_bath()))};
    case ModelId::VI:
      return {label, sym({{0.03, 0.03}, {0.03, 0.00}}), replicate(2, discretize_debye(default_debye_bath()))};
  }
  throw std::invalid_argument("unknown model identifier");
}

inline SiteExcitonModel build_model(std::string_view id) { return build_model(parse_model_id(id)); }

struct DiabaticElements {
  Eigen::VectorXd diag;     // V_kk + sum_j kappa_kj Q_kj
  Eigen::MatrixXd offdiag;  // V_kl for k != l, zero on the diagonal
};

inline void check_length(const SiteExcitonModel& model, Eigen::Index n, const char* what) {
  if (static_cast<std::size_t>(n) != model.n_modes())
    throw std::invalid_argument(std::string(what) + " has length " + std::to_string(n) + ", model has " +
                                std::to_string(model.n_modes()) + " modes");
}

/// Diagonal energies only; the hot path of the equations of motion.
template <typename Derived>
void diabatic_diagonal(const SiteExcitonModel& model, const Eigen::MatrixBase<Derived>& q, Eigen::VectorXd& diag) {
  const auto n = model.n_states();
  diag.resize(static_cast<Eigen::Index>(n));
  const auto& kappa = model.kappa();
  for (std::size_t k = 0; k < n; ++k) {
    double s = model.v()(k, k);
    for (std::size_t j = model.first_mode(k); j < model.end_mode(k); ++j) s += kappa[j] * q(j);
    diag(k) = s;
  }
}

inline DiabaticElements diabatic_elements(const SiteExcitonModel& model, const Eigen::Ref<const Eigen::VectorXd>& q) {
  check_length(model, q.size(), "Q");
  DiabaticElements e;
  diabatic_diagonal(model, q, e.diag);
  e.offdiag = model.v();
  e.offdiag.diagonal().setZero();
  return e;
}

inline double bath_energy(const SiteExcitonModel& model, const Eigen::Ref<const Eigen::VectorXd>& q,
                          const Eigen::Ref<const Eigen::VectorXd>& p) {
  check_length(model, q.size(), "Q");
  check_length(model, p.size(), "P");
  double e = 0.0;
  const auto& w = model.omega();
  for (std::size_t j = 0; j < w.size(); ++j) e += 0.5 * w[j] * (q(j) * q(j) + p(j) * p(j));
  return e;
}

// ---- model config file -----------------------------------------------------

inline nlohmann::json to_json(const SiteExcitonModel& model) {
  nlohmann::json j;
  j["label"] = model.label();
  j["n_states"] = model.n_states();
  auto& v = j["v"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.v().rows(); ++r)
    for (Eigen::Index c = 0; c < model.v().cols(); ++c) v.push_back(model.v()(r, c));
  auto& mps = j["modes_per_state"] = nlohmann::json::array();
  for (const auto& list : model.modes_per_state()) {
    auto arr = nlohmann::json::array();
    for (const auto& m : list) arr.push_back({{"omega", m.omega}, {"kappa", m.kappa}});
    mps.push_back(std::move(arr));
  }
  return j;
}

inline SiteExcitonModel model_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("n_states").get<std::size_t>();
    const auto& v = j.at("v");
    if (!v.is_array() || v.size() != n * n) throw std::invalid_argument("model config: v must hold n_states^2 values");
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) m(r, c) = v[r * n + c].get<double>();
    std::vector<std::vector<Mode>> modes;
    for (const auto& list : j.at("modes_per_state")) {
      auto& out = modes.emplace_back();
      for (const auto& e : list) out.push_back({e.at("omega").get<double>(), e.at("kappa").get<double>()});
    }
    return {j.value("label", std::string("custom")), std::move(m), std::move(modes)};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const SiteExcitonModel& model) {
  io::write_atomic(path, to_json(model).dump(2) + "\n");
}

inline SiteExcitonModel load_model(const std::filesystem::path& path) {
  const auto text = io::read_all(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("model config " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace sqcml::models
