#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqcml/adam.hpp"
#include "sqcml/dataset.hpp"
#include "sqcml/lstm.hpp"
#include "sqcml/rng.hpp"

namespace sqcml::surrogate {

struct TrainConfig {
  std::size_t seq_len = 5;
  std::size_t hidden = 2000;
  double learning_rate = 1e-5;
  std::size_t batch_size = 50;
  std::size_t epochs = 2000;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (seq_len < 2) throw std::invalid_argument("TrainConfig: seq_len must be >= 2");
    if (hidden == 0 || batch_size == 0 || epochs == 0)
      throw std::invalid_argument("TrainConfig: hidden, batch_size and epochs must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("TrainConfig: learning_rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
      throw std::invalid_argument("TrainConfig: invalid Adam moment settings");
  }

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // 0-based
  double wall_seconds = 0.0;

  // Wall time is ignored; NaN entries (no validation set) compare equal.
  bool operator==(const TrainReport& o) const {
    auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
      return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                        [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); });
    };
    return same(train_loss, o.train_loss) && same(validation_loss, o.validation_loss) && best_epoch == o.best_epoch;
  }
};

struct TrainResult {
  LstmParams params;
  TrainReport report;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

struct Batch {
  MatrixXd x0;                    // D x B
  std::vector<MatrixXd> targets;  // L-1 entries, D x B
};

inline Batch make_batch(const std::vector<dataset::Sequence>& seqs, std::span<const std::size_t> idx) {
  Batch b;
  if (idx.empty()) return b;
  const auto L = seqs[idx[0]].rows();
  const auto D = seqs[idx[0]].cols();
  const auto B = static_cast<Index>(idx.size());
  b.x0.resize(D, B);
  b.targets.assign(static_cast<std::size_t>(L - 1), MatrixXd(D, B));
  for (Index j = 0; j < B; ++j) {
    const auto& s = seqs[idx[static_cast<std::size_t>(j)]];
    b.x0.col(j) = s.row(0).transpose();
    for (Index t = 1; t < L; ++t) b.targets[static_cast<std::size_t>(t - 1)].col(j) = s.row(t).transpose();
  }
  return b;
}

/// Mean squared error over a whole sequence set, evaluated in fixed chunks.
inline double evaluate_loss(const std::vector<dataset::Sequence>& seqs, std::size_t seq_len, const LstmParams& p,
                            std::size_t chunk = 256) {
  if (seqs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<std::size_t> idx(seqs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto n = std::min(chunk, idx.size() - start);
    const auto b = make_batch(seqs, std::span(idx).subspan(start, n));
    const auto out = predict_sequence(b.x0, seq_len, p);
    for (std::size_t t = 0; t < out.size(); ++t) total += (out[t] - b.targets[t]).squaredNorm();
  }
  return total / static_cast<double>(seqs.size() * (seq_len - 1) * static_cast<std::size_t>(p.D));
}

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double validation_loss)>;

/// Mini-batch Adam on the training set. Batch order is reshuffled every epoch
/// from the seeded "batch" stream; the parameters with the lowest validation
/// loss (training loss when there is no validation set) are returned.
inline TrainResult train(const dataset::SequenceDataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {},
                         const LstmParams* initial = nullptr) {
  cfg.validate();
  if (ds.seq_len != cfg.seq_len)
    throw std::invalid_argument("train: dataset sequence length " + std::to_string(ds.seq_len) +
                                " differs from configured " + std::to_string(cfg.seq_len));
  if (ds.train.empty()) throw std::invalid_argument("train: empty training set");
  const auto start = std::chrono::steady_clock::now();

  const auto D = static_cast<Index>(ds.dim);
  const auto H = static_cast<Index>(cfg.hidden);
  LstmParams params = initial ? *initial : init_params(D, H, cfg.seed);
  if (params.D != D || params.H != H) throw std::invalid_argument("train: initial parameters have wrong shape");
  auto adam = AdamState::for_params(params);
  const auto adam_cfg = cfg.adam();

  TrainResult result{params, {}};
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stream rng(cfg.seed, "batch", epoch);
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size, ++batch_no) {
      const auto n = std::min(cfg.batch_size, order.size() - first);
      const auto batch = make_batch(ds.train, std::span(order).subspan(first, n));
      const auto fp = one_to_many_forward(batch.x0, cfg.seq_len, params);
      auto [loss, dy] = batch_loss(fp.outputs, batch.targets);
      if (!std::isfinite(loss)) throw TrainingError(epoch, batch_no, "non-finite training loss");
      auto grads = backward(fp, dy, params);
      adam_step(params, std::move(grads), adam, adam_cfg);
      loss_sum += loss * static_cast<double>(n);
    }
    if (!params.all_finite()) throw TrainingError(epoch, batch_no, "non-finite parameters");

    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_loss = evaluate_loss(ds.validation, cfg.seq_len, params);
    if (!ds.validation.empty() && !std::isfinite(val_loss))
      throw TrainingError(epoch, batch_no, "non-finite validation loss");
    result.report.train_loss.push_back(train_loss);
    result.report.validation_loss.push_back(val_loss);

    const double score = ds.validation.empty() ? train_loss : val_loss;
    if (score < best) {
      best = score;
      result.report.best_epoch = epoch;
      result.params = params;
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace sqcml::surrogate
