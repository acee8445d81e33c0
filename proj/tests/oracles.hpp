#pragma once

// Independent reference computations used only by tests. Nothing here calls
// the code paths it checks.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

/// c(t) = exp(-i V t / hbar) c0 by eigendecomposition of the symmetric V.
inline Eigen::VectorXcd unitary_amplitudes(const Eigen::MatrixXd& v, const Eigen::VectorXcd& c0, double t,
                                           double hbar) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  const Eigen::MatrixXcd u = es.eigenvectors().cast<cplx>();
  Eigen::VectorXcd phase(v.rows());
  for (Eigen::Index k = 0; k < v.rows(); ++k) phase(k) = std::exp(cplx(0.0, -es.eigenvalues()(k) * t / hbar));
  return u * phase.asDiagonal() * u.adjoint() * c0;
}

/// Composite Simpson rule on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Central-difference gradient of f at x.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x(i);
    x(i) = x0 + h;
    const double fp = f(x);
    x(i) = x0 - h;
    const double fm = f(x);
    x(i) = x0;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Scalar-by-scalar LSTM cell with gates i, f, o, g, written from the textbook
/// equations with plain loops and separately supplied weights.
struct ScalarCell {
  // w[gate][row][col], u[gate][row][col], b[gate][row]
  std::vector<std::vector<std::vector<double>>> w, u;
  std::vector<std::vector<double>> b;

  void step(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c) const {
    const std::size_t H = h.size();
    std::vector<double> z[4];
    for (int g = 0; g < 4; ++g) {
      z[g].assign(H, 0.0);
      for (std::size_t r = 0; r < H; ++r) {
        double s = b[g][r];
        for (std::size_t k = 0; k < x.size(); ++k) s += w[g][r][k] * x[k];
        for (std::size_t k = 0; k < H; ++k) s += u[g][r][k] * h[k];
        z[g][r] = s;
      }
    }
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t r = 0; r < H; ++r) {
      const double in = sig(z[0][r]), fg = sig(z[1][r]), cand = std::tanh(z[3][r]);
      c[r] = fg * c[r] + in * cand;
    }
    for (std::size_t r = 0; r < H; ++r) h[r] = sig(z[2][r]) * std::tanh(c[r]);
  }
};

}  // namespace oracle
