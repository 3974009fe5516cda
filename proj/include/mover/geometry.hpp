#pragma once

// Parallelotope volume of a group of k vectors (columns of V, d x k):
//   vol(V) = sqrt(det(VᵀV))
// with the analytic gradient dvol/dV = vol · V · G⁻¹ (from
// d vol = ½ vol · tr(G⁻¹ dG), dG = dVᵀV + VᵀdV), and a central
// finite-difference oracle. Gradients are with respect to raw matrix entries;
// callers apply any normalization Jacobians themselves.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <stdexcept>

namespace mover {

// det(G) falls below this → the group is flagged degenerate and its volume
// clamps to exactly 0 (a rank-deficient Gram yields det at rounding-noise
// level, ~1e-16; sqrt would amplify that noise to ~1e-8 and pollute finite
// differences taken in the identically-zero region).
inline constexpr double kSingularityFloor = 1e-12;
// Ridge added to G when inverting it for the gradient of a degenerate group.
inline constexpr double kGradientRidge = 1e-8;

struct VolumeResult {
  double volume = 0.0;
  Eigen::MatrixXd gradient;  // d x k
  bool degenerate = false;
};

// Gram matrix of the columns, exactly symmetrized.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& v) {
  Eigen::MatrixXd g = v.transpose() * v;
  return 0.5 * (g + g.transpose());
}

namespace detail {

// Determinant of a symmetric PSD matrix: Cholesky when it succeeds, exact LU
// determinant otherwise (a jittered Cholesky would report ~2e-12 for a rank-
// deficient Gram, which is above the singularity floor and would misreport
// duplicated columns as non-degenerate).
inline double psd_det(const Eigen::MatrixXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() == Eigen::Success) {
    double d = 1.0;
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < g.rows(); ++i) d *= l(i, i) * l(i, i);
    return d;
  }
  return g.determinant();
}

}  // namespace detail

inline double volume_value(const Eigen::MatrixXd& v) {
  const double det = detail::psd_det(gram(v));
  return det < kSingularityFloor ? 0.0 : std::sqrt(det);
}

inline VolumeResult volume(const Eigen::MatrixXd& v) {
  VolumeResult r;
  const Eigen::MatrixXd g = gram(v);
  const double det = detail::psd_det(g);
  r.degenerate = det < kSingularityFloor;
  r.volume = r.degenerate ? 0.0 : std::sqrt(det);
  if (r.degenerate) {
    Eigen::MatrixXd reg = g;
    reg.diagonal().array() += kGradientRidge;
    r.gradient = r.volume * (reg.ldlt().solve(v.transpose())).transpose();
  } else {
    r.gradient = r.volume * (Eigen::LLT<Eigen::MatrixXd>(g).solve(v.transpose())).transpose();
  }
  return r;
}

inline Eigen::MatrixXd grad_volume(const Eigen::MatrixXd& v) {
  return volume(v).gradient;
}

// Central finite differences of volume_value over raw entries (columns are
// not re-normalized; the gradient contract is entrywise).
inline Eigen::MatrixXd volume_finite_diff(const Eigen::MatrixXd& v, double h) {
  if (h < 1e-7 || h > 1e-3) throw std::invalid_argument("finite-difference step h outside [1e-7, 1e-3]");
  Eigen::MatrixXd out(v.rows(), v.cols());
  Eigen::MatrixXd p = v;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const double orig = p(r, c);
      p(r, c) = orig + h;
      const double up = volume_value(p);
      p(r, c) = orig - h;
      const double dn = volume_value(p);
      p(r, c) = orig;
      out(r, c) = (up - dn) / (2.0 * h);
    }
  }
  return out;
}

// max |a-b| / max(max|b|, floor): the shared relative-error metric for
// gradient checks.
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace mover
