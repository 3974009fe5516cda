#pragma once

// Artifact formats: versioned CSVs (metrics, embeddings, ablation) and the
// binary weights file ("MOVW" magic + version byte + dims + little-endian
// doubles). Doubles print with 17 significant digits so CSVs round-trip
// exactly and identical runs produce byte-identical files.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mover/eval.hpp"
#include "mover/model.hpp"
#include "mover/objective.hpp"

namespace mover {

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_double_le(std::ostream& out, double x) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

inline double read_double_le(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void write_u32_le(std::ostream& out, std::uint32_t x) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((x >> (8 * i)) & 0xFF);
  out.write(bytes, 4);
}

inline std::uint32_t read_u32_le(std::istream& in) {
  char bytes[4];
  in.read(bytes, 4);
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i)
    x |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return x;
}

inline std::ofstream open_for_write(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace detail

inline void write_metrics_csv(const std::string& path, const std::vector<LossBreakdown>& history) {
  auto out = detail::open_for_write(path);
  out << "# mover-metrics-v1\n";
  out << "step,mover_loss,contrastive_loss,total,group_count,mean_pos_volume,mean_neg_volume\n";
  for (std::size_t s = 0; s < history.size(); ++s) {
    const auto& h = history[s];
    out << s << ',' << detail::format_double(h.mover_loss) << ','
        << detail::format_double(h.contrastive_loss) << ',' << detail::format_double(h.total)
        << ',' << h.group_count << ',' << detail::format_double(h.mean_pos_volume) << ','
        << detail::format_double(h.mean_neg_volume) << '\n';
  }
}

inline void write_embeddings_csv(const std::string& path,
                                 const std::vector<Eigen::MatrixXd>& embeddings,
                                 const std::vector<int>& labels) {
  auto out = detail::open_for_write(path);
  out << "# mover-embeddings-v1\n";
  out << "modality,index,label";
  const Eigen::Index d = embeddings.empty() ? 0 : embeddings[0].cols();
  for (Eigen::Index j = 0; j < d; ++j) out << ",v" << j;
  out << '\n';
  for (std::size_t m = 0; m < embeddings.size(); ++m) {
    for (Eigen::Index i = 0; i < embeddings[m].rows(); ++i) {
      out << (m + 1) << ',' << i << ',' << labels[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < embeddings[m].cols(); ++j)
        out << ',' << detail::format_double(embeddings[m](i, j));
      out << '\n';
    }
  }
}

inline void write_ablation_csv(const std::string& path, const AblationReport& report) {
  auto out = detail::open_for_write(path);
  out << "# mover-ablation-v1\n";
  out << "variant,seed,direction,K,recall\n";
  for (const auto& row : report.rows)
    out << row.variant << ',' << row.seed << ',' << (row.query_modality + 1) << "->"
        << (row.target_modality + 1) << ",1," << detail::format_double(row.recall1) << '\n';
}

inline constexpr char kWeightsMagic[4] = {'M', 'O', 'V', 'W'};
inline constexpr std::uint8_t kWeightsVersion = 1;

inline void save_weights(const std::string& path, const std::vector<LinearEncoder>& encoders) {
  auto out = detail::open_for_write(path, /*binary=*/true);
  out.write(kWeightsMagic, 4);
  out.put(static_cast<char>(kWeightsVersion));
  detail::write_u32_le(out, static_cast<std::uint32_t>(encoders.size()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(encoders[0].weight.rows()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(encoders[0].weight.cols()));
  for (const auto& enc : encoders)
    for (Eigen::Index i = 0; i < enc.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < enc.weight.cols(); ++j)
        detail::write_double_le(out, enc.weight(i, j));
  if (!out) throw std::runtime_error("failed writing weights: " + path);
}

inline std::vector<LinearEncoder> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kWeightsMagic, 4))
    throw std::runtime_error("bad magic in weights file: " + path);
  const int version = in.get();
  if (version != kWeightsVersion)
    throw std::runtime_error("unsupported weights version in: " + path);
  const std::uint32_t k = detail::read_u32_le(in);
  const std::uint32_t d = detail::read_u32_le(in);
  const std::uint32_t d_in = detail::read_u32_le(in);
  std::vector<LinearEncoder> encoders(k);
  for (std::uint32_t m = 0; m < k; ++m) {
    encoders[m].modality = static_cast<int>(m);
    encoders[m].weight.resize(d, d_in);
    for (std::uint32_t i = 0; i < d; ++i)
      for (std::uint32_t j = 0; j < d_in; ++j)
        encoders[m].weight(i, j) = detail::read_double_le(in);
  }
  if (!in) throw std::runtime_error("truncated weights file: " + path);
  return encoders;
}

}  // namespace mover
