#pragma once

// Checkpoint file: binary container (see binary_io.hpp) with tag "SQCCKPT1".
// Payload tensors in order W_i W_f W_o W_g U_i U_f U_o U_g b_i b_f b_o b_g W_d
// b_d, each stored row-major.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sqcml/binary_io.hpp"
#include "sqcml/dataset.hpp"
#include "sqcml/lstm.hpp"
#include "sqcml/train.hpp"

namespace sqcml::surrogate {

struct Checkpoint {
  LstmParams params;
  TrainConfig config;
  TrainReport report;
  dataset::Provenance data;
  std::optional<dataset::FeatureScaling> scaling;

  std::size_t seq_len() const { return config.seq_len; }
};

inline constexpr io::Magic kCheckpointMagic = io::make_magic("SQCCKPT1");
inline constexpr int kCheckpointVersion = 1;

inline std::string encode_checkpoint(const Checkpoint& ck) {
  auto p = ck.params;
  std::vector<double> payload;
  payload.reserve(p.parameter_count());
  std::vector<std::string> order;
  for (const auto& t : tensors(p)) {
    order.push_back(t.name);
    for (Index r = 0; r < t.values.rows(); ++r)
      for (Index c = 0; c < t.values.cols(); ++c) payload.push_back(t.values(r, c));
  }
  const auto& c = ck.config;
  io::json h;
  h["format"] = "sqcml-checkpoint";
  h["format_version"] = kCheckpointVersion;
  h["D"] = p.D;
  h["H"] = p.H;
  h["L"] = c.seq_len;
  h["tensor_order"] = order;
  h["config"] = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
                 {"seed", c.seed},                   {"beta1", c.beta1},           {"beta2", c.beta2},
                 {"epsilon", c.epsilon}};
  h["epoch"] = ck.report.best_epoch;
  h["train_loss"] = ck.report.train_loss;
  h["validation_loss"] = ck.report.validation_loss;
  h["wall_seconds"] = ck.report.wall_seconds;
  h["dataset"] = {{"source_hash", ck.data.source_hash}, {"split_seed", ck.data.split_seed}};
  if (ck.scaling) {
    h["scaling"]["mean"] = std::vector<double>(ck.scaling->mean.begin(), ck.scaling->mean.end());
    h["scaling"]["scale"] = std::vector<double>(ck.scaling->scale.begin(), ck.scaling->scale.end());
  }
  return io::encode(kCheckpointMagic, std::move(h), payload);
}

namespace detail {

// JSON has no NaN; undefined losses are written as null.
inline std::vector<double> loss_series(const io::json& h, const char* key) {
  if (!h.contains(key) || !h[key].is_array()) throw io::IoError(io::Errc::corrupt_header, std::string("missing ") + key);
  std::vector<double> out;
  for (const auto& v : h[key]) {
    if (v.is_null()) out.push_back(std::numeric_limits<double>::quiet_NaN());
    else if (v.is_number()) out.push_back(v.get<double>());
    else throw io::IoError(io::Errc::corrupt_header, std::string("non-numeric entry in ") + key);
  }
  return out;
}

}  // namespace detail

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  auto d = io::decode(kCheckpointMagic, bytes);
  const auto& h = d.header;
  if (io::field<int>(h, "format_version") != kCheckpointVersion)
    throw io::IoError(io::Errc::version_mismatch, "unsupported checkpoint format version");
  const auto D = io::field<Index>(h, "D");
  const auto H = io::field<Index>(h, "H");
  if (D <= 0 || H <= 0) throw io::IoError(io::Errc::dimension_mismatch, "D and H must be positive");

  Checkpoint ck;
  ck.params = LstmParams::zeros(D, H);
  if (d.payload.size() != ck.params.parameter_count())
    throw io::IoError(io::Errc::truncated, "payload size disagrees with D and H");
  const double* p = d.payload.data();
  for (auto& t : tensors(ck.params))
    for (Index r = 0; r < t.values.rows(); ++r)
      for (Index c = 0; c < t.values.cols(); ++c) t.values(r, c) = *p++;

  auto& c = ck.config;
  c.seq_len = io::field<std::size_t>(h, "L");
  c.hidden = static_cast<std::size_t>(H);
  if (!h.contains("config")) throw io::IoError(io::Errc::corrupt_header, "missing config");
  const auto& hc = h["config"];
  c.learning_rate = io::field<double>(hc, "learning_rate");
  c.batch_size = io::field<std::size_t>(hc, "batch_size");
  c.epochs = io::field<std::size_t>(hc, "epochs");
  c.seed = io::field<std::uint64_t>(hc, "seed");
  c.beta1 = io::field<double>(hc, "beta1");
  c.beta2 = io::field<double>(hc, "beta2");
  c.epsilon = io::field<double>(hc, "epsilon");

  ck.report.best_epoch = io::field<std::size_t>(h, "epoch");
  ck.report.train_loss = detail::loss_series(h, "train_loss");
  ck.report.validation_loss = detail::loss_series(h, "validation_loss");
  ck.report.wall_seconds = io::field<double>(h, "wall_seconds");
  if (!h.contains("dataset")) throw io::IoError(io::Errc::corrupt_header, "missing dataset provenance");
  ck.data.source_hash = io::field<std::string>(h["dataset"], "source_hash");
  ck.data.split_seed = io::field<std::uint64_t>(h["dataset"], "split_seed");
  ck.scaling = dataset::scaling_from_header(h, static_cast<std::size_t>(D));
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_all(path)); }

/// Rejects a checkpoint whose state dimension differs from `dim`.
inline void require_dim(const Checkpoint& ck, std::size_t dim) {
  if (static_cast<std::size_t>(ck.params.D) != dim)
    throw io::IoError(io::Errc::dimension_mismatch, "checkpoint has D = " + std::to_string(ck.params.D) +
                                                        ", expected " + std::to_string(dim));
}

}  // namespace sqcml::surrogate
