#pragma once

// One-to-many LSTM: a single state vector enters the cell; every later step
// consumes the previous dense read-out, so the network emits L-1 vectors from
// one input. All batched quantities are column-major with one column per
// sequence.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sqcml/rng.hpp"

namespace sqcml::surrogate {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Gate : Index { input = 0, forget = 1, output = 2, cell = 3 };

/// Gate weights are stacked row-wise in the order i, f, o, g.
struct LstmParams {
  Index D = 0;
  Index H = 0;
  MatrixXd Wx;  // 4H x D, input weights W_i..W_g
  MatrixXd Wh;  // 4H x H, recurrent weights U_i..U_g
  VectorXd b;   // 4H, gate biases
  MatrixXd Wd;  // D x H, dense read-out
  VectorXd bd;  // D

  static LstmParams zeros(Index d, Index h) {
    if (d <= 0 || h <= 0) throw std::invalid_argument("LstmParams: dimensions must be positive");
    return {d, h, MatrixXd::Zero(4 * h, d), MatrixXd::Zero(4 * h, h), VectorXd::Zero(4 * h), MatrixXd::Zero(d, h),
            VectorXd::Zero(d)};
  }

  auto W(Gate g) { return Wx.middleRows(static_cast<Index>(g) * H, H); }
  auto U(Gate g) { return Wh.middleRows(static_cast<Index>(g) * H, H); }
  auto bias(Gate g) { return b.segment(static_cast<Index>(g) * H, H); }
  auto W(Gate g) const { return Wx.middleRows(static_cast<Index>(g) * H, H); }
  auto U(Gate g) const { return Wh.middleRows(static_cast<Index>(g) * H, H); }
  auto bias(Gate g) const { return b.segment(static_cast<Index>(g) * H, H); }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(Wx.size() + Wh.size() + b.size() + Wd.size() + bd.size());
  }

  bool same_shape(const LstmParams& o) const { return D == o.D && H == o.H; }

  bool all_finite() const {
    return Wx.allFinite() && Wh.allFinite() && b.allFinite() && Wd.allFinite() && bd.allFinite();
  }

  bool operator==(const LstmParams& o) const {
    return same_shape(o) && Wx == o.Wx && Wh == o.Wh && b == o.b && Wd == o.Wd && bd == o.bd;
  }

  /// Applies fn to corresponding storage arrays of several same-shaped
  /// parameter sets, e.g. for elementwise optimizer updates.
  template <typename Fn, typename... Ps>
  static void zip(Fn&& fn, Ps&... ps) {
    fn(ps.Wx...);
    fn(ps.Wh...);
    fn(ps.b...);
    fn(ps.Wd...);
    fn(ps.bd...);
  }
};

/// A named view onto one parameter tensor.
struct TensorView {
  std::string name;
  Eigen::Ref<MatrixXd> values;
};

/// The 14 parameter tensors in checkpoint order:
/// W_i W_f W_o W_g U_i U_f U_o U_g b_i b_f b_o b_g W_d b_d.
inline std::vector<TensorView> tensors(LstmParams& p) {
  static constexpr const char* suffix[] = {"i", "f", "o", "g"};
  std::vector<TensorView> out;
  for (Index g = 0; g < 4; ++g) out.push_back({std::string("W_") + suffix[g], p.Wx.middleRows(g * p.H, p.H)});
  for (Index g = 0; g < 4; ++g) out.push_back({std::string("U_") + suffix[g], p.Wh.middleRows(g * p.H, p.H)});
  for (Index g = 0; g < 4; ++g) out.push_back({std::string("b_") + suffix[g], p.b.segment(g * p.H, p.H)});
  out.push_back({"W_d", p.Wd});
  out.push_back({"b_d", p.bd});
  return out;
}

/// Glorot-uniform weights, zero biases except forget-gate bias 1.
inline LstmParams init_params(Index d, Index h, std::uint64_t seed) {
  auto p = LstmParams::zeros(d, h);
  Stream rng(seed, "init");
  for (auto& t : tensors(p)) {
    if (t.name[0] == 'b') continue;
    const double fan = static_cast<double>(t.values.rows() + t.values.cols());
    const double a = std::sqrt(6.0 / fan);
    for (Index c = 0; c < t.values.cols(); ++c)
      for (Index r = 0; r < t.values.rows(); ++r) t.values(r, c) = rng.uniform(-a, a);
  }
  p.bias(Gate::forget).setOnes();
  return p;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct CellCache {
  MatrixXd x, h_prev, c_prev;
  MatrixXd i, f, o, g;  // gate activations
  MatrixXd c, tanh_c;
};

struct CellStep {
  MatrixXd h;
  MatrixXd c;
  CellCache cache;
};

/// One LSTM step for a batch of columns.
inline CellStep cell_forward(const MatrixXd& x, const MatrixXd& h, const MatrixXd& c, const LstmParams& p) {
  const Index B = x.cols();
  if (x.rows() != p.D || h.rows() != p.H || c.rows() != p.H || h.cols() != B || c.cols() != B)
    throw std::invalid_argument("cell_forward: shape mismatch");
  MatrixXd z = p.Wx * x;
  z.noalias() += p.Wh * h;
  z.colwise() += p.b;

  CellStep s;
  auto& k = s.cache;
  const Index H = p.H;
  k.i = z.middleRows(0, H).unaryExpr([](double v) { return sigmoid(v); });
  k.f = z.middleRows(H, H).unaryExpr([](double v) { return sigmoid(v); });
  k.o = z.middleRows(2 * H, H).unaryExpr([](double v) { return sigmoid(v); });
  k.g = z.middleRows(3 * H, H).array().tanh().matrix();
  k.c = k.f.cwiseProduct(c) + k.i.cwiseProduct(k.g);
  k.tanh_c = k.c.array().tanh().matrix();
  s.h = k.o.cwiseProduct(k.tanh_c);
  s.c = k.c;
  k.x = x;
  k.h_prev = h;
  k.c_prev = c;
  return s;
}

struct ForwardPass {
  std::vector<MatrixXd> outputs;  // y_1 .. y_{L-1}, each D x B
  std::vector<MatrixXd> hidden;   // h_1 .. h_{L-1}, each H x B
  std::vector<CellCache> caches;
};

inline void check_seq_len(std::size_t seq_len) {
  if (seq_len < 2) throw std::invalid_argument("sequence length must be >= 2");
}

/// Unrolls L-1 steps from the inputs x0 (D x B), starting from h = c = 0.
inline ForwardPass one_to_many_forward(const MatrixXd& x0, std::size_t seq_len, const LstmParams& p) {
  check_seq_len(seq_len);
  if (x0.rows() != p.D) throw std::invalid_argument("one_to_many_forward: input dimension mismatch");
  const Index B = x0.cols();
  ForwardPass fp;
  MatrixXd h = MatrixXd::Zero(p.H, B), c = MatrixXd::Zero(p.H, B);
  const MatrixXd* in = &x0;
  for (std::size_t t = 1; t < seq_len; ++t) {
    auto step = cell_forward(*in, h, c, p);
    h = std::move(step.h);
    c = std::move(step.c);
    MatrixXd y = p.Wd * h;
    y.colwise() += p.bd;
    fp.caches.push_back(std::move(step.cache));
    fp.hidden.push_back(h);
    fp.outputs.push_back(std::move(y));
    in = &fp.outputs.back();
  }
  return fp;
}

/// Inference-only unroll: returns the L-1 outputs without caches.
inline std::vector<MatrixXd> predict_sequence(const MatrixXd& x0, std::size_t seq_len, const LstmParams& p) {
  check_seq_len(seq_len);
  if (x0.rows() != p.D) throw std::invalid_argument("predict_sequence: input dimension mismatch");
  const Index B = x0.cols();
  const Index H = p.H;
  std::vector<MatrixXd> out;
  out.reserve(seq_len - 1);
  MatrixXd h = MatrixXd::Zero(H, B), c = MatrixXd::Zero(H, B), z(4 * H, B);
  const MatrixXd* in = &x0;
  for (std::size_t t = 1; t < seq_len; ++t) {
    z.noalias() = p.Wx * *in;
    z.noalias() += p.Wh * h;
    z.colwise() += p.b;
    auto gates = z.array();
    const auto i = gates.middleRows(0, H).unaryExpr([](double v) { return sigmoid(v); }).eval();
    const auto f = gates.middleRows(H, H).unaryExpr([](double v) { return sigmoid(v); }).eval();
    const auto o = gates.middleRows(2 * H, H).unaryExpr([](double v) { return sigmoid(v); }).eval();
    const auto g = gates.middleRows(3 * H, H).tanh().eval();
    c = (f * c.array() + i * g).matrix();
    h = (o * c.array().tanh()).matrix();
    MatrixXd y = p.Wd * h;
    y.colwise() += p.bd;
    out.push_back(std::move(y));
    in = &out.back();
  }
  return out;
}

/// Mean squared error over all (L-1)*D entries of one sequence.
inline double sequence_loss(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("sequence_loss: shape mismatch");
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

/// Mean squared error over every step, feature and batch column, together
/// with its gradient with respect to each output.
inline std::pair<double, std::vector<MatrixXd>> batch_loss(const std::vector<MatrixXd>& outputs,
                                                           const std::vector<MatrixXd>& targets) {
  if (outputs.size() != targets.size()) throw std::invalid_argument("batch_loss: step count mismatch");
  double count = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    if (outputs[t].rows() != targets[t].rows() || outputs[t].cols() != targets[t].cols())
      throw std::invalid_argument("batch_loss: shape mismatch");
    count += static_cast<double>(outputs[t].size());
  }
  double loss = 0.0;
  std::vector<MatrixXd> grads;
  grads.reserve(outputs.size());
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    MatrixXd diff = outputs[t] - targets[t];
    loss += diff.squaredNorm();
    grads.push_back((2.0 / count) * diff);
  }
  return {count > 0 ? loss / count : 0.0, std::move(grads)};
}

/// Backpropagation through time, including the path through fed-back
/// outputs. `output_grads[t]` is dLoss/dy_{t+1}.
inline LstmParams backward(const ForwardPass& fp, const std::vector<MatrixXd>& output_grads, const LstmParams& p) {
  const auto steps = fp.caches.size();
  if (steps == 0 || fp.hidden.size() != steps || fp.outputs.size() != steps)
    throw std::invalid_argument("backward: missing forward cache");
  if (output_grads.size() != steps) throw std::invalid_argument("backward: gradient count does not match forward");

  auto grads = LstmParams::zeros(p.D, p.H);
  const Index H = p.H;
  const Index B = fp.outputs.front().cols();
  MatrixXd dh_next = MatrixXd::Zero(H, B), dc_next = MatrixXd::Zero(H, B), dx_next;
  MatrixXd dz(4 * H, B);

  for (std::size_t s = steps; s-- > 0;) {
    const auto& k = fp.caches[s];
    MatrixXd dy = output_grads[s];
    if (s + 1 < steps) dy += dx_next;
    if (dy.rows() != p.D || dy.cols() != B) throw std::invalid_argument("backward: gradient shape mismatch");

    grads.Wd.noalias() += dy * fp.hidden[s].transpose();
    grads.bd += dy.rowwise().sum();
    MatrixXd dh = p.Wd.transpose() * dy + dh_next;

    const auto o = k.o.array(), i = k.i.array(), f = k.f.array(), g = k.g.array(), tc = k.tanh_c.array();
    const MatrixXd dc = (dh.array() * o * (1.0 - tc * tc) + dc_next.array()).matrix();
    dz.middleRows(0, H) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(H, H) = (dc.array() * k.c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dz.middleRows(3 * H, H) = (dc.array() * i * (1.0 - g * g)).matrix();

    grads.Wx.noalias() += dz * k.x.transpose();
    grads.Wh.noalias() += dz * k.h_prev.transpose();
    grads.b += dz.rowwise().sum();

    if (s > 0) dx_next.noalias() = p.Wx.transpose() * dz;
    dh_next.noalias() = p.Wh.transpose() * dz;
    dc_next = (dc.array() * f).matrix();
  }
  return grads;
}

}  // namespace sqcml::surrogate
