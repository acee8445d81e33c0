#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sqcml/sqc.hpp"

using namespace sqcml;
using models::ModelId;
using sqc::PhaseSpaceState;

namespace {

const sqc::WindowConfig kWin{};

PhaseSpaceState random_state(const models::SiteExcitonModel& m, std::uint64_t seed) {
  PhaseSpaceState s(m);
  Stream rng(seed, "test-state");
  for (Eigen::Index i = 0; i < s.values().size(); ++i) s.values()(i) = rng.uniform(-1.5, 1.5);
  return s;
}

models::SiteExcitonModel single_mode_model(double omega) {
  return {"single", Eigen::MatrixXd::Zero(2, 2), {{{omega, 0.0}}, {}}};
}

}  // namespace

TEST(Action, Examples) {
  EXPECT_NEAR(sqc::action(std::sqrt(2.0), 0.0), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(sqc::action(0.0, 0.0), -1.0 / 3.0);
  EXPECT_NEAR(sqc::action(1.0, 1.0), 2.0 / 3.0, 1e-15);
}

TEST(WindowAssign, Examples) {
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector2d(0.8, -0.1)), std::optional<std::size_t>(0));
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector2d(-0.1, 0.8)), std::optional<std::size_t>(1));
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector2d(0.5, 0.5)), std::nullopt);
  EXPECT_EQ(sqc::window_assign(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()), std::nullopt);
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector3d(0.8, -0.1, 0.2)), std::optional<std::size_t>(0));
  // e_1 + e_3 >= 2 closes the window
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector3d(0.9, -0.1, 0.5)), std::nullopt);
  EXPECT_THROW(sqc::window_assign(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

TEST(WindowAssign, WindowsAreDisjoint) {
  Stream rng(11, "windows");
  for (int n_states : {2, 3}) {
    Eigen::VectorXd n(n_states);
    for (int s = 0; s < 100000; ++s) {
      for (int k = 0; k < n_states; ++k) n(k) = rng.uniform(-0.5, 2.0);
      int open = 0;
      for (int k = 0; k < n_states; ++k) open += sqc::in_window(n, static_cast<std::size_t>(k)) ? 1 : 0;
      ASSERT_LE(open, 1);
    }
  }
  // boundary point shared by both closures belongs to neither window
  EXPECT_EQ(sqc::window_assign_actions(Eigen::Vector2d(2.0 / 3.0, 2.0 / 3.0)), std::nullopt);
}

TEST(MmEnergy, Examples) {
  const auto m1 = models::build_model(ModelId::I);
  EXPECT_EQ(sqc::mm_energy(m1, PhaseSpaceState(m1)), 0.0);

  const auto m2 = models::build_model(ModelId::II);
  PhaseSpaceState s(m2);
  EXPECT_NEAR(sqc::mm_energy(m2, s), -0.2 / 3.0, 1e-15);
  s.x_e()(0) = std::sqrt(2.0 * (1.0 + 1.0 / 3.0));
  EXPECT_NEAR(sqc::mm_energy(m2, s), 0.2, 1e-15);
}

TEST(MmEnergy, DimensionMismatchRejected) {
  const auto m1 = models::build_model(ModelId::I);
  const auto m3 = models::build_model(ModelId::III);
  EXPECT_THROW(sqc::mm_energy(m1, PhaseSpaceState(m3)), std::invalid_argument);
  EXPECT_THROW(sqc::eom(m1, PhaseSpaceState(m3)), std::invalid_argument);
}

TEST(Eom, ZeroStateOfUncoupledModelIsStationary) {
  const auto m = models::build_model(ModelId::I).without_coupling();
  EXPECT_EQ(sqc::eom(m, PhaseSpaceState(m)), Eigen::VectorXd::Zero(36));
}

TEST(Eom, ZeroStateOfCoupledModelFeelsZeroPointForce) {
  // n_k = -gamma at x = p = 0, so dP/dt = kappa * gamma / hbar.
  const auto m = models::build_model(ModelId::I);
  const auto dy = sqc::eom(m, PhaseSpaceState(m));
  EXPECT_EQ(dy.head(4 + 16), Eigen::VectorXd::Zero(20));
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(dy(20 + j), m.kappa()[j] / 3.0 / units::hbar, 1e-15);
}

TEST(Eom, MatchesSymplecticGradientOfEnergy) {
  for (auto id : {ModelId::I, ModelId::IV, ModelId::V}) {
    const auto m = models::build_model(id);
    const auto s = random_state(m, 3);
    const auto d = static_cast<Eigen::Index>(m.dim());
    const auto grad = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& y) { return sqc::mm_energy(m, PhaseSpaceState(m.n_states(), y)); }, s.values(),
        1e-6);
    // dy/dt = J grad H / hbar with position/momentum pairs (x_e, p_e) and (Q, P)
    const auto ne = static_cast<Eigen::Index>(m.n_states());
    const auto nv = static_cast<Eigen::Index>(m.n_modes());
    Eigen::VectorXd expected(d);
    expected.segment(0, ne) = grad.segment(ne, ne) / units::hbar;
    expected.segment(ne, ne) = -grad.segment(0, ne) / units::hbar;
    expected.segment(2 * ne, nv) = grad.segment(2 * ne + nv, nv) / units::hbar;
    expected.segment(2 * ne + nv, nv) = -grad.segment(2 * ne, nv) / units::hbar;
    const auto dy = sqc::eom(m, s);
    EXPECT_LT((dy - expected).norm() / dy.norm(), 1e-8) << models::to_string(id);
  }
}

TEST(SampleInitial, InsideInitialWindowAndOnGroundRing) {
  for (auto id : {ModelId::I, ModelId::III}) {
    const auto m = models::build_model(id);
    for (std::size_t init = 0; init < m.n_states(); ++init) {
      for (std::uint64_t i = 0; i < 2000; ++i) {
        Stream rng(5, "sampling", i);
        const auto s = sqc::sample_initial(m, init, kWin, rng);
        ASSERT_EQ(sqc::window_assign(s), std::optional<std::size_t>(init));
        for (std::size_t j = 0; j < m.n_modes(); ++j)
          ASSERT_NEAR(s.q()(j) * s.q()(j) + s.p()(j) * s.p()(j), 1.0, 1e-15);
        ASSERT_EQ(s.t(), 0.0);
      }
    }
  }
}

TEST(SampleInitial, MeanActionMatchesTriangleCentroid) {
  // e_1 uniform on {e1 in [1,2], e2 in [0,1], e1 + e2 <= 2}: the centroid of
  // the triangle with vertices (1,0), (2,0), (1,1) is e1 = 4/3.
  const auto m = models::build_model(ModelId::I);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Stream rng(17, "sampling", static_cast<std::uint64_t>(i));
    const auto s = sqc::sample_initial(m, 0, kWin, rng);
    sum += sqc::action(s.x_e()(0), s.p_e()(0)) + kWin.gamma;
  }
  EXPECT_NEAR(sum / n, 4.0 / 3.0, 0.01);
}

TEST(SampleInitial, InvalidStateRejected) {
  const auto m = models::build_model(ModelId::I);
  Stream rng(1, "x");
  EXPECT_THROW(sqc::sample_initial(m, 2, kWin, rng), std::invalid_argument);
}

TEST(Propagate, RecordCount) {
  const auto m = models::build_model(ModelId::I);
  const auto t = sqc::propagate(m, PhaseSpaceState(m), {}, 100.0, 1.0);
  EXPECT_EQ(t.size(), 101u);
  EXPECT_EQ(t.dim(), 36u);
  EXPECT_DOUBLE_EQ(t.time(100), 100.0);
  EXPECT_THROW(sqc::propagate(m, PhaseSpaceState(m), {}, 100.5, 1.0), std::invalid_argument);
  EXPECT_THROW(sqc::propagate(m, PhaseSpaceState(m), {0.3, units::hbar}, 10.0, 1.0), std::invalid_argument);
}

TEST(Propagate, HarmonicModeReturnsAfterOnePeriod) {
  const double omega = 0.2;
  const auto m = single_mode_model(omega);
  PhaseSpaceState s(m);
  s.q()(0) = 1.0;
  const double period = 2.0 * units::pi * units::hbar / omega;  // ~20.68 fs
  EXPECT_NEAR(period, 20.68, 0.01);
  // integrate exactly one period on a grid that resolves it
  const double dt = period / 2000.0;
  const auto t = sqc::propagate(m, s, {dt, units::hbar}, period, period);
  EXPECT_NEAR(t.records(1, 4), 1.0, 1e-6);
  EXPECT_NEAR(t.records(1, 5), 0.0, 1e-6);
}

TEST(Propagate, UncoupledAmplitudesFollowUnitaryEvolution) {
  const auto m = models::build_model(ModelId::I).without_coupling();
  Stream rng(23, "sampling", 0);
  const auto s0 = sqc::sample_initial(m, 0, kWin, rng);
  const auto traj = sqc::propagate(m, s0, {}, 100.0, 1.0);
  Eigen::VectorXcd c0(2);
  for (int k = 0; k < 2; ++k) c0(k) = std::complex<double>(s0.x_e()(k), s0.p_e()(k)) / std::sqrt(2.0);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto c = oracle::unitary_amplitudes(m.v(), c0, traj.time(i), units::hbar);
    const auto s = traj.state(i);
    for (int k = 0; k < 2; ++k) {
      const std::complex<double> got(s.x_e()(k) / std::sqrt(2.0), s.p_e()(k) / std::sqrt(2.0));
      ASSERT_LT(std::abs(got - c(k)), 1e-6) << "t=" << traj.time(i);
      ASSERT_NEAR(std::norm(got), std::norm(c(k)), 1e-6);
    }
  }
}

TEST(Propagate, ConservesEnergy) {
  const auto m = models::build_model(ModelId::I);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto s0 = sqc::sample_for_trajectory(m, 0, kWin, 99, i);
    const auto traj = sqc::propagate(m, s0, {}, 100.0, 1.0);
    EXPECT_LE(sqc::energy_drift(m, traj), 1e-5);
  }
}

TEST(Propagate, TimeReversal) {
  const auto m = models::build_model(ModelId::II);
  const auto s0 = sqc::sample_for_trajectory(m, 0, kWin, 7, 0);
  const auto fwd = sqc::propagate(m, s0, {}, 10.0, 10.0);
  auto back = fwd.state(1);
  back.p_e() = -back.p_e();
  back.p() = -back.p();
  const auto rev = sqc::propagate(m, back, {}, 10.0, 10.0);
  auto end = rev.state(1);
  end.p_e() = -end.p_e();
  end.p() = -end.p();
  EXPECT_LT((end.values() - s0.values()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Propagate, NonFiniteStateReported) {
  // RK4 is unstable for omega*dt > 2.83; the mode blows up to infinity.
  const auto m = single_mode_model(0.2);
  PhaseSpaceState s(m);
  s.q()(0) = 1.0;
  try {
    sqc::propagate(m, s, {10.0, units::hbar}, 100000.0, 10.0);
    FAIL() << "expected PropagationError";
  } catch (const sqc::PropagationError& e) {
    EXPECT_GT(e.t(), 0.0);
    // the diverging mode poisons the electronic derivatives in the same step
    EXPECT_FALSE(e.variable().empty());
    EXPECT_NE(std::string(e.what()).find(e.variable()), std::string::npos);
  }
}

TEST(RunEnsemble, ShapeAndDeterminism) {
  const auto m = models::build_model(ModelId::I);
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 500;
  cfg.seed = 42;
  const auto a = sqc::run_ensemble(m, cfg);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(a.n_records(), 101u);
  EXPECT_EQ(a.dim(), 36u);

  cfg.n_traj = 20;
  const auto b = sqc::run_ensemble(m, cfg);
  cfg.workers = 3;
  const auto c = sqc::run_ensemble(m, cfg);
  EXPECT_TRUE(b == c);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.trajectories[i].records, b.trajectories[i].records);
}

TEST(RunEnsemble, DebyeModelDimension) {
  const auto m = models::build_model(ModelId::V);
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 2;
  cfg.t_end = 5.0;
  const auto e = sqc::run_ensemble(m, cfg);
  EXPECT_EQ(e.dim(), 284u);
  EXPECT_EQ(e.trajectories[0].dim(), 284u);
}

TEST(RunEnsemble, ErrorsCarryTrajectoryIndex) {
  const auto m = single_mode_model(0.2);
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 3;
  cfg.t_end = 100000.0;
  cfg.record_dt = 10.0;
  cfg.integrator.dt_internal = 10.0;
  try {
    sqc::run_ensemble(m, cfg);
    FAIL();
  } catch (const sqc::EnsembleError& e) {
    EXPECT_EQ(e.index(), 0u);
  }
  cfg.n_traj = 0;
  EXPECT_THROW(sqc::run_ensemble(m, cfg), std::invalid_argument);
}

TEST(Populations, InitialAndNormalized) {
  const auto m = models::build_model(ModelId::II);
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 200;
  cfg.t_end = 30.0;
  const auto e = sqc::run_ensemble(m, cfg);
  const auto pops = sqc::populations(e);
  EXPECT_EQ(pops.population(0, 0), 1.0);
  EXPECT_EQ(pops.unassigned[0], 0.0);
  for (std::size_t i = 0; i < pops.n_times(); ++i) {
    ASSERT_TRUE(pops.defined[i]);
    EXPECT_NEAR(pops.population.row(static_cast<Eigen::Index>(i)).sum(), 1.0, 1e-12);
  }
}

TEST(Populations, RabiOscillationOfUncoupledDimer) {
  const auto m = models::build_model(ModelId::I).without_coupling();
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 2000;
  cfg.t_end = 20.0;
  cfg.seed = 3;
  const auto pops = sqc::populations(sqc::run_ensemble(m, cfg));
  for (std::size_t i = 0; i < pops.n_times(); ++i) {
    const double c = std::cos(0.2 * pops.times[i] / units::hbar);
    EXPECT_NEAR(pops.population(i, 0), c * c, 0.05) << pops.times[i];
  }
}

TEST(Populations, AllUnassignedIsFlagged) {
  sqc::Ensemble e;
  e.n_states = 2;
  e.n_modes = 1;
  sqc::Trajectory t;
  t.n_states = 2;
  t.records = sqc::RowMatrix::Zero(3, 6);
  e.trajectories = {t, t};
  const auto pops = sqc::populations(e);
  EXPECT_FALSE(pops.all_defined());
  EXPECT_TRUE(std::isnan(pops.population(1, 0)));
  EXPECT_EQ(pops.unassigned[2], 1.0);
  EXPECT_THROW(sqc::populations(sqc::Ensemble{}), std::invalid_argument);
}

TEST(EnsembleFile, RoundTripAndCorruption) {
  const auto m = models::build_model(ModelId::III);
  sqc::EnsembleConfig cfg;
  cfg.n_traj = 4;
  cfg.t_end = 5.0;
  cfg.seed = 8;
  const auto e = sqc::run_ensemble(m, cfg);
  const auto path = std::filesystem::temp_directory_path() / "sqcml_ens_test.traj";
  sqc::save_ensemble(path, e);
  EXPECT_TRUE(sqc::load_ensemble(path) == e);

  auto bytes = io::read_all(path);
  EXPECT_EQ(sqc::encode_ensemble(sqc::decode_ensemble(bytes)), bytes);
  try {
    sqc::decode_ensemble(bytes.substr(0, bytes.size() - 8));
    FAIL();
  } catch (const io::IoError& err) {
    EXPECT_EQ(err.code(), io::Errc::truncated);
  }
  auto bad = bytes;
  bad[0] = 'X';
  try {
    sqc::decode_ensemble(bad);
    FAIL();
  } catch (const io::IoError& err) {
    EXPECT_EQ(err.code(), io::Errc::bad_magic);
  }
  bad = bytes;
  bad[17] = '#';
  try {
    sqc::decode_ensemble(bad);
    FAIL();
  } catch (const io::IoError& err) {
    EXPECT_EQ(err.code(), io::Errc::corrupt_header);
  }
  std::filesystem::remove(path);
}
