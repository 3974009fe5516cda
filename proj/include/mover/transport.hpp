#pragma once

// Entropic optimal transport between modality embedding sets: squared-
// Euclidean cost matrices, log-domain Sinkhorn with uniform marginals, the
// anchored-product composition of pairwise plans into k-tuple weights, and
// the three group-generation strategies (hard / top-k' / soft sampling).

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mover/rng.hpp"

namespace mover {

inline constexpr double kSinkhornTol = 1e-9;
inline constexpr int kSinkhornMaxIters = 2000;
inline constexpr double kPruneThreshold = 1e-8;

// Squared Euclidean distances between unit rows: 2 - 2<a_i, b_j>, clamped to
// [0, 4] against rounding.
inline Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target) {
  if (source.cols() != target.cols())
    throw std::invalid_argument("cost_matrix: embedding dimensions differ");
  Eigen::MatrixXd c = (-2.0 * (source * target.transpose())).array() + 2.0;
  return c.cwiseMax(0.0).cwiseMin(4.0);
}

struct TransportPlan {
  Eigen::MatrixXd entries;  // B_p x B_q, nonnegative, marginals ~uniform
  double epsilon = 0.0;
  int iterations = 0;
  double marginal_error = 0.0;
  bool converged = false;
  Eigen::VectorXd f, g;  // dual potentials (marginals absorbed), warm-startable
};

// Log-domain Sinkhorn with uniform marginals 1/B_p, 1/B_q. The potentials
// absorb the marginals, so the plan is exp((f ⊕ g - C)/ε). Optional initial
// potentials warm-start the solve (training re-solves on slowly moving
// embeddings).
//
// The loop works in the scaled domain (f/ε, g/ε against -C/ε, transposed copy
// for the f-pass) so every reduction runs over a contiguous column, and the
// plan is materialized from the same exponentials the g-update computes —
// two exp sweeps per iteration instead of three plus strided row reductions.
inline TransportPlan sinkhorn(const Eigen::MatrixXd& cost, double epsilon,
                              int max_iters = kSinkhornMaxIters, double tol = kSinkhornTol,
                              const Eigen::VectorXd* f0 = nullptr,
                              const Eigen::VectorXd* g0 = nullptr) {
  if (epsilon <= 0.0) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_m = 1.0 / static_cast<double>(m);

  TransportPlan plan;
  plan.epsilon = epsilon;
  Eigen::VectorXd fe = (f0 && f0->size() == n) ? Eigen::VectorXd(*f0 / epsilon)
                                               : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd ge = (g0 && g0->size() == m) ? Eigen::VectorXd(*g0 / epsilon)
                                               : Eigen::VectorXd::Zero(m);
  const Eigen::MatrixXd cn = -cost / epsilon;  // n x m
  const Eigen::MatrixXd cnt = cn.transpose();  // m x n: rows of cn, contiguous

  plan.entries.resize(n, m);
  Eigen::VectorXd work_m(m), work_n(n);

  for (int it = 1; it <= max_iters; ++it) {
    // f-update: row marginals exact in exact arithmetic.
    for (Eigen::Index i = 0; i < n; ++i) {
      work_m = ge + cnt.col(i);
      const double mx = work_m.maxCoeff();
      fe(i) = log_a - (mx + std::log((work_m.array() - mx).exp().sum()));
    }
    // g-update: column marginals exact; rows drift, measured below. The plan
    // column is the normalized form of the same exponentials.
    for (Eigen::Index j = 0; j < m; ++j) {
      work_n = fe + cn.col(j);
      const double mx = work_n.maxCoeff();
      work_n = (work_n.array() - mx).exp();
      const double total = work_n.sum();
      ge(j) = log_b - (mx + std::log(total));
      plan.entries.col(j) = work_n * (inv_m / total);
    }
    plan.iterations = it;

    if (!plan.entries.allFinite()) {
      std::ostringstream msg;
      msg << "sinkhorn: NaN in potentials at epsilon=" << epsilon;
      throw std::runtime_error(msg.str());
    }
    const double row_err = (plan.entries.rowwise().sum().array() - inv_n).abs().maxCoeff();
    const double col_err = (plan.entries.colwise().sum().array() - inv_m).abs().maxCoeff();
    plan.marginal_error = std::max(row_err, col_err);
    if (plan.marginal_error < tol) {
      plan.converged = true;
      break;
    }
  }
  plan.f = epsilon * fe;
  plan.g = epsilon * ge;
  return plan;
}

struct MatchGroup {
  std::vector<int> indices;  // one sample index per modality
  double weight = 0.0;
};

namespace detail {

inline void check_anchor_sizes(const std::vector<TransportPlan>& plans) {
  if (plans.empty()) throw std::invalid_argument("group composition: no plans given");
  const Eigen::Index b = plans.front().entries.rows();
  for (const auto& p : plans)
    if (p.entries.rows() != b)
      throw std::invalid_argument("group composition: anchor batch sizes differ across plans");
}

// weight(i_1..i_k) = B^(k-2) · ∏_m π^(1,m)[i_1, i_m], the anchored product.
inline double composed_weight(const std::vector<TransportPlan>& plans, int anchor,
                              const std::vector<int>& partners) {
  const double b = static_cast<double>(plans.front().entries.rows());
  double w = std::pow(b, static_cast<double>(plans.size()) - 1.0);
  for (std::size_t m = 0; m < plans.size(); ++m) w *= plans[m].entries(anchor, partners[m]);
  return w;
}

}  // namespace detail

// Dense enumeration of all k-tuples above the prune threshold. Exponential in
// k; meant for small batches and for oracle checks — training uses the
// strategies below.
inline std::vector<MatchGroup> compose_group_weights(const std::vector<TransportPlan>& plans,
                                                     double prune = kPruneThreshold) {
  detail::check_anchor_sizes(plans);
  const Eigen::Index b = plans.front().entries.rows();
  std::vector<MatchGroup> out;
  std::vector<int> partners(plans.size(), 0);
  for (int i = 0; i < b; ++i) {
    std::fill(partners.begin(), partners.end(), 0);
    while (true) {
      const double w = detail::composed_weight(plans, i, partners);
      if (w > prune) {
        MatchGroup g;
        g.indices.reserve(plans.size() + 1);
        g.indices.push_back(i);
        g.indices.insert(g.indices.end(), partners.begin(), partners.end());
        g.weight = w;
        out.push_back(std::move(g));
      }
      // odometer over partner indices
      std::size_t m = 0;
      while (m < partners.size()) {
        if (++partners[m] < plans[m].entries.cols()) break;
        partners[m] = 0;
        ++m;
      }
      if (m == partners.size()) break;
    }
  }
  return out;
}

// One group per anchor: the row-argmax in every pairwise plan (ties -> lowest
// index).
inline std::vector<MatchGroup> hard_groups(const std::vector<TransportPlan>& plans) {
  detail::check_anchor_sizes(plans);
  const Eigen::Index b = plans.front().entries.rows();
  std::vector<MatchGroup> out;
  out.reserve(b);
  std::vector<int> partners(plans.size());
  for (int i = 0; i < b; ++i) {
    for (std::size_t m = 0; m < plans.size(); ++m) {
      const auto row = plans[m].entries.row(i);
      int best = 0;
      for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = static_cast<int>(j);
      partners[m] = best;
    }
    MatchGroup g;
    g.indices.push_back(i);
    g.indices.insert(g.indices.end(), partners.begin(), partners.end());
    g.weight = detail::composed_weight(plans, i, partners);
    if (g.weight > 0.0) out.push_back(std::move(g));
  }
  return out;
}

// Cartesian product of the k' highest-weight indices per pairwise row:
// k'^(k-1) tuples per anchor (ties -> lowest index first).
inline std::vector<MatchGroup> topk_groups(const std::vector<TransportPlan>& plans, int kprime) {
  detail::check_anchor_sizes(plans);
  const Eigen::Index b = plans.front().entries.rows();
  if (kprime < 1 || kprime > b) throw std::invalid_argument("topk_groups: k' must be in [1, B]");
  std::vector<MatchGroup> out;
  std::vector<std::vector<int>> candidates(plans.size());
  std::vector<int> order(b);
  for (int i = 0; i < b; ++i) {
    for (std::size_t m = 0; m < plans.size(); ++m) {
      std::iota(order.begin(), order.end(), 0);
      const auto row = plans[m].entries.row(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](int x, int y) { return row(x) > row(y); });
      candidates[m].assign(order.begin(), order.begin() + kprime);
    }
    std::vector<std::size_t> pick(plans.size(), 0);
    std::vector<int> partners(plans.size());
    while (true) {
      for (std::size_t m = 0; m < plans.size(); ++m) partners[m] = candidates[m][pick[m]];
      MatchGroup g;
      g.indices.push_back(i);
      g.indices.insert(g.indices.end(), partners.begin(), partners.end());
      g.weight = detail::composed_weight(plans, i, partners);
      if (g.weight > 0.0) out.push_back(std::move(g));
      std::size_t m = 0;
      while (m < pick.size()) {
        if (++pick[m] < static_cast<std::size_t>(kprime)) break;
        pick[m] = 0;
        ++m;
      }
      if (m == pick.size()) break;
    }
  }
  return out;
}

// samples_per_anchor tuples per anchor, each modality index drawn from the
// normalized pairwise row; duplicates merged (weight kept, not summed).
inline std::vector<MatchGroup> soft_sample_groups(const std::vector<TransportPlan>& plans,
                                                  int samples_per_anchor, std::uint64_t seed) {
  detail::check_anchor_sizes(plans);
  const Eigen::Index b = plans.front().entries.rows();
  Rng rng(seed);
  std::vector<MatchGroup> out;
  for (int i = 0; i < b; ++i) {
    std::vector<std::vector<double>> cdfs(plans.size());
    for (std::size_t m = 0; m < plans.size(); ++m) {
      const auto row = plans[m].entries.row(i);
      const double total = row.sum();
      if (!(total > 0.0)) {
        std::ostringstream msg;
        msg << "soft_sample_groups: zero plan row at anchor index " << i;
        throw std::invalid_argument(msg.str());
      }
      cdfs[m].resize(row.size());
      double acc = 0.0;
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        acc += row(j) / total;
        cdfs[m][j] = acc;
      }
      cdfs[m].back() = 1.0;
    }
    std::vector<std::vector<int>> seen;
    std::vector<int> partners(plans.size());
    for (int s = 0; s < samples_per_anchor; ++s) {
      for (std::size_t m = 0; m < plans.size(); ++m) {
        const double u = rng.uniform();
        partners[m] = static_cast<int>(
            std::lower_bound(cdfs[m].begin(), cdfs[m].end(), u) - cdfs[m].begin());
      }
      if (std::find(seen.begin(), seen.end(), partners) != seen.end()) continue;
      seen.push_back(partners);
      MatchGroup g;
      g.indices.push_back(i);
      g.indices.insert(g.indices.end(), partners.begin(), partners.end());
      g.weight = detail::composed_weight(plans, i, partners);
      if (g.weight > 0.0) out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace mover
