#pragma once

// Sliding-window sequence datasets built from trajectory ensembles.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqcml/binary_io.hpp"
#include "sqcml/rng.hpp"
#include "sqcml/sqc.hpp"

namespace sqcml::dataset {

using StateVector = Eigen::VectorXd;
using Sequence = sqc::RowMatrix;  // seq_len rows, one state vector per row

/// Flat x_e | p_e | Q | P vector of a phase-space state.
inline StateVector vectorize(const sqc::PhaseSpaceState& s) { return s.values(); }

/// All stride-1 windows of length L, in chronological order.
inline std::vector<Sequence> split_sequences(const sqc::Trajectory& traj, std::size_t seq_len) {
  if (seq_len < 2) throw std::invalid_argument("split_sequences: sequence length must be >= 2");
  if (traj.size() < seq_len)
    throw std::invalid_argument("split_sequences: trajectory has " + std::to_string(traj.size()) +
                                " records, fewer than sequence length " + std::to_string(seq_len));
  const auto count = traj.size() - seq_len + 1;
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.emplace_back(traj.records.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(seq_len)));
  return out;
}

struct Partition {
  std::vector<Sequence> train;
  std::vector<Sequence> validation;
};

/// Number of validation sequences drawn from a trajectory contributing n.
inline std::size_t validation_count(std::size_t n) { return n / 4; }

/// Per-trajectory random 3:1 split; the merged sets are then shuffled as
/// whole sequences.
inline Partition partition(const std::vector<std::vector<Sequence>>& per_trajectory, std::uint64_t split_seed) {
  Partition out;
  for (std::size_t t = 0; t < per_trajectory.size(); ++t) {
    const auto& seqs = per_trajectory[t];
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Stream rng(split_seed, "split", t);
    shuffle(order.begin(), order.end(), rng);
    const auto n_val = validation_count(seqs.size());
    std::vector<bool> is_val(seqs.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
    for (std::size_t i = 0; i < seqs.size(); ++i) (is_val[i] ? out.validation : out.train).push_back(seqs[i]);
  }
  Stream train_rng(split_seed, "shuffle", 0);
  Stream val_rng(split_seed, "shuffle", 1);
  shuffle(out.train.begin(), out.train.end(), train_rng);
  shuffle(out.validation.begin(), out.validation.end(), val_rng);
  return out;
}

/// Per-feature affine map x -> (x - mean) / scale. Off unless requested.
struct FeatureScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static FeatureScaling fit(const std::vector<Sequence>& seqs) {
    if (seqs.empty()) throw std::invalid_argument("FeatureScaling::fit: no sequences");
    const auto d = seqs.front().cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
    double n = 0;
    for (const auto& s : seqs) {
      sum += s.colwise().sum().transpose();
      sq += s.array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(s.rows());
    }
    FeatureScaling f;
    f.mean = sum / n;
    f.scale = (sq / n - f.mean.cwiseProduct(f.mean)).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < d; ++i)
      if (!(f.scale(i) > 1e-12)) f.scale(i) = 1.0;
    return f;
  }

  template <typename M>
  void apply_rows(M& rows) const {
    rows = ((rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }
  template <typename M>
  void invert_rows(M& rows) const {
    rows = ((rows.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose()).eval();
  }
};

struct Provenance {
  std::string source_hash;
  std::uint64_t split_seed = 0;
};

struct SequenceDataset {
  std::size_t seq_len = 0;
  std::size_t dim = 0;
  std::vector<Sequence> train;
  std::vector<Sequence> validation;
  Provenance provenance;
  std::optional<FeatureScaling> scaling;

  bool operator==(const SequenceDataset& o) const {
    auto same = [](const std::vector<Sequence>& a, const std::vector<Sequence>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
      return true;
    };
    if (scaling.has_value() != o.scaling.has_value()) return false;
    if (scaling && (scaling->mean != o.scaling->mean || scaling->scale != o.scaling->scale)) return false;
    return seq_len == o.seq_len && dim == o.dim && provenance.source_hash == o.provenance.source_hash &&
           provenance.split_seed == o.provenance.split_seed && same(train, o.train) && same(validation, o.validation);
  }
};

struct DatasetOptions {
  std::size_t seq_len = 5;
  std::uint64_t split_seed = 0;
  bool standardize = false;
};

inline SequenceDataset build_dataset(const sqc::Ensemble& ens, const DatasetOptions& opt, std::string source_hash = {}) {
  std::vector<std::vector<Sequence>> per_traj;
  per_traj.reserve(ens.size());
  for (const auto& t : ens.trajectories) per_traj.push_back(split_sequences(t, opt.seq_len));
  auto parts = partition(per_traj, opt.split_seed);

  SequenceDataset ds;
  ds.seq_len = opt.seq_len;
  ds.dim = ens.dim();
  ds.train = std::move(parts.train);
  ds.validation = std::move(parts.validation);
  ds.provenance = {std::move(source_hash), opt.split_seed};
  if (opt.standardize) {
    ds.scaling = FeatureScaling::fit(ds.train);
    for (auto& s : ds.train) ds.scaling->apply_rows(s);
    for (auto& s : ds.validation) ds.scaling->apply_rows(s);
  }
  return ds;
}

inline constexpr io::Magic kDatasetMagic = io::make_magic("SQCDATA1");
inline constexpr int kDatasetVersion = 1;

/// Payload: train block then validation block, sequence-major, row-major
/// within each sequence.
inline std::string encode_dataset(const SequenceDataset& ds) {
  std::vector<double> payload;
  payload.reserve((ds.train.size() + ds.validation.size()) * ds.seq_len * ds.dim);
  for (const auto* set : {&ds.train, &ds.validation})
    for (const auto& s : *set) {
      if (static_cast<std::size_t>(s.rows()) != ds.seq_len || static_cast<std::size_t>(s.cols()) != ds.dim)
        throw std::invalid_argument("encode_dataset: sequence shape disagrees with dataset");
      payload.insert(payload.end(), s.data(), s.data() + s.size());
    }
  io::json h;
  h["format"] = "sqcml-dataset";
  h["format_version"] = kDatasetVersion;
  h["seq_len"] = ds.seq_len;
  h["dim"] = ds.dim;
  h["n_train"] = ds.train.size();
  h["n_validation"] = ds.validation.size();
  h["provenance"] = {{"source_hash", ds.provenance.source_hash}, {"split_seed", ds.provenance.split_seed}};
  if (ds.scaling) {
    h["scaling"]["mean"] = std::vector<double>(ds.scaling->mean.begin(), ds.scaling->mean.end());
    h["scaling"]["scale"] = std::vector<double>(ds.scaling->scale.begin(), ds.scaling->scale.end());
  }
  return io::encode(kDatasetMagic, std::move(h), payload);
}

inline std::optional<FeatureScaling> scaling_from_header(const io::json& h, std::size_t dim) {
  if (!h.contains("scaling") || h["scaling"].is_null()) return std::nullopt;
  const auto mean = io::field<std::vector<double>>(h["scaling"], "mean");
  const auto scale = io::field<std::vector<double>>(h["scaling"], "scale");
  if (mean.size() != dim || scale.size() != dim)
    throw io::IoError(io::Errc::dimension_mismatch, "scaling vectors do not match dim");
  FeatureScaling f;
  f.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(dim));
  f.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(dim));
  return f;
}

inline SequenceDataset decode_dataset(std::string_view bytes) {
  auto d = io::decode(kDatasetMagic, bytes);
  const auto& h = d.header;
  if (io::field<int>(h, "format_version") != kDatasetVersion)
    throw io::IoError(io::Errc::version_mismatch, "unsupported dataset format version");
  SequenceDataset ds;
  ds.seq_len = io::field<std::size_t>(h, "seq_len");
  ds.dim = io::field<std::size_t>(h, "dim");
  if (ds.seq_len < 2 || ds.dim == 0) throw io::IoError(io::Errc::dimension_mismatch, "seq_len must be >= 2 and dim > 0");
  const auto n_train = io::field<std::size_t>(h, "n_train");
  const auto n_val = io::field<std::size_t>(h, "n_validation");
  if (!h.contains("provenance")) throw io::IoError(io::Errc::corrupt_header, "missing provenance");
  ds.provenance.source_hash = io::field<std::string>(h["provenance"], "source_hash");
  ds.provenance.split_seed = io::field<std::uint64_t>(h["provenance"], "split_seed");
  ds.scaling = scaling_from_header(h, ds.dim);

  const auto per = ds.seq_len * ds.dim;
  if (d.payload.size() != (n_train + n_val) * per)
    throw io::IoError(io::Errc::truncated, "payload size disagrees with sequence counts and dimensions");
  const double* p = d.payload.data();
  auto take = [&](std::size_t n, std::vector<Sequence>& out) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i, p += per)
      out.emplace_back(
          Eigen::Map<const Sequence>(p, static_cast<Eigen::Index>(ds.seq_len), static_cast<Eigen::Index>(ds.dim)));
  };
  take(n_train, ds.train);
  take(n_val, ds.validation);
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const SequenceDataset& ds) {
  io::write_atomic(path, encode_dataset(ds));
}

inline SequenceDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_all(path)); }

}  // namespace sqcml::dataset
