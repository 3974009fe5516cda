#pragma once

// Toy modality encoders (single linear maps + L2 normalization with its exact
// backward pass) and the seeded synthetic k-modal dataset: C class prototypes
// on the unit sphere, per-sample shared latents, and per-modality orthogonal
// mixing maps standing in for genuinely different input spaces.

#include <Eigen/Dense>
#include <Eigen/QR>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mover/rng.hpp"

namespace mover {

inline constexpr double kNormFloor = 1e-12;
// Misalignment scale of the pretrained-analog encoder initialization (see
// initial_encoders below). 0.3 gives initial cross-modal cosine ≈ 0.92 for
// matching samples — partially aligned, far from converged.
inline constexpr double kInitMisalignment = 0.3;

struct LinearEncoder {
  Eigen::MatrixXd weight;  // d x d_in
  int modality = 0;
};

namespace detail {

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// Haar-ish random orthogonal map: QR of a Gaussian matrix with the sign of
// R's diagonal fixed (makes the factorization unique, hence seeded-stable).
inline Eigen::MatrixXd random_orthogonal(Rng& rng, Eigen::Index n) {
  const Eigen::MatrixXd a = gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace detail

// Rows of the result are the unit-normalized encodings of the input rows.
inline Eigen::MatrixXd encode(const LinearEncoder& enc, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != enc.weight.cols())
    throw std::invalid_argument("encode: input dimension does not match encoder");
  Eigen::MatrixXd y = inputs * enc.weight.transpose();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double n = y.row(i).norm();
    if (n < kNormFloor) {
      std::ostringstream msg;
      msg << "encode: embedding row " << i << " has norm " << n
          << " below " << kNormFloor << " (degenerate encoder state)";
      throw std::runtime_error(msg.str());
    }
    y.row(i) /= n;
  }
  return y;
}

// Gradient of a scalar loss w.r.t. the encoder weight, given the gradient
// w.r.t. the normalized outputs: per row, dL/dy = (I - vvᵀ)/‖y‖ · dL/dv,
// then dL/dW = Σ_i dL/dy_i · x_iᵀ.
inline Eigen::MatrixXd encode_backward(const LinearEncoder& enc, const Eigen::MatrixXd& inputs,
                                       const Eigen::MatrixXd& upstream) {
  Eigen::MatrixXd y = inputs * enc.weight.transpose();
  Eigen::MatrixXd dy(upstream.rows(), upstream.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double n = y.row(i).norm();
    const Eigen::RowVectorXd v = y.row(i) / n;
    dy.row(i) = (upstream.row(i) - upstream.row(i).dot(v) * v) / n;
  }
  return dy.transpose() * inputs;
}

struct SyntheticDataset {
  std::vector<Eigen::MatrixXd> inputs;    // k matrices, each B x d_in
  std::vector<int> labels;                // B entries in [0, C)
  Eigen::MatrixXd prototypes;             // C x d_in, unit rows
  std::vector<Eigen::MatrixXd> mixers;    // k orthogonal d_in x d_in maps
  int classes = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// latent_i = prototype[label_i] + σ·ξ_i (shared across modalities);
// modality-m input_i = R_m · latent_i. Labels are i mod C, so every class is
// populated whenever B ≥ C.
inline SyntheticDataset generate_synthetic(int classes, int k, int batch, int d_in, double sigma,
                                           std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("generate_synthetic: C must be >= 2");
  if (batch < classes) throw std::invalid_argument("generate_synthetic: B must be >= C");
  if (sigma < 0.0) throw std::invalid_argument("generate_synthetic: sigma must be >= 0");
  SyntheticDataset ds;
  ds.classes = classes;
  ds.sigma = sigma;
  ds.seed = seed;

  Rng root(seed);
  Rng proto_rng = root.substream(1);
  ds.prototypes = detail::gaussian_matrix(proto_rng, classes, d_in);
  for (int c = 0; c < classes; ++c) ds.prototypes.row(c).normalize();

  ds.labels.resize(batch);
  Rng noise_rng = root.substream(2);
  Eigen::MatrixXd latents(batch, d_in);
  for (int i = 0; i < batch; ++i) {
    ds.labels[i] = i % classes;
    latents.row(i) = ds.prototypes.row(ds.labels[i]);
    for (int j = 0; j < d_in; ++j) latents(i, j) += sigma * noise_rng.normal();
  }

  ds.inputs.resize(k);
  ds.mixers.resize(k);
  for (int m = 0; m < k; ++m) {
    Rng mix_rng = root.substream(16 + static_cast<std::uint64_t>(m));
    ds.mixers[m] = detail::random_orthogonal(mix_rng, d_in);
    ds.inputs[m] = latents * ds.mixers[m].transpose();
  }
  return ds;
}

// Pretrained-analog initialization: W_m = ((S + η·Ξ_m)/√(1+η²)) · R_mᵀ/√d_in
// with a shared Gaussian core S and per-modality Gaussian perturbations Ξ_m.
// Marginally each W_m is a seeded Gaussian of scale 1/√d_in (right-multiplying
// by an orthogonal matrix preserves the Gaussian law); jointly the encoders
// approximately invert their modality's mixing into one shared frame, the
// desk-scale stand-in for pretrained encoders whose embeddings start roughly
// aligned across modalities.
inline std::vector<LinearEncoder> initial_encoders(const SyntheticDataset& ds, int d,
                                                   std::uint64_t seed) {
  const int k = static_cast<int>(ds.inputs.size());
  const Eigen::Index d_in = ds.inputs[0].cols();
  Rng init_rng = Rng(seed).substream(7);
  const Eigen::MatrixXd core = detail::gaussian_matrix(init_rng, d, d_in);
  const double eta = kInitMisalignment;
  const double scale = 1.0 / (std::sqrt(1.0 + eta * eta) * std::sqrt(static_cast<double>(d_in)));
  std::vector<LinearEncoder> encoders(k);
  for (int m = 0; m < k; ++m) {
    const Eigen::MatrixXd perturb = detail::gaussian_matrix(init_rng, d, d_in);
    encoders[m].weight = scale * (core + eta * perturb) * ds.mixers[m].transpose();
    encoders[m].modality = m;
  }
  return encoders;
}

}  // namespace mover
