#pragma once

// The training objective: transport-weighted group-measure loss, the
// volume-contrastive loss, their weighted total, and a plain-SGD training
// loop with alternating OT re-solves (plans detached from gradients).
//
// The group measure is the parallelotope volume by default; the ablation's
// "no volume" variants swap in the mean pairwise cosine distance of the
// group. Ablations can also replace OT matching with identity pairing.

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mover/config.hpp"
#include "mover/geometry.hpp"
#include "mover/model.hpp"
#include "mover/rng.hpp"
#include "mover/transport.hpp"

namespace mover {

enum class GroupMeasure { volume, cosine_spread };

struct MeasureResult {
  double value = 0.0;
  Eigen::MatrixXd gradient;  // d x k, w.r.t. raw column entries
};

// Group alignment measure and its gradient. cosine_spread is
// (2/(k(k-1)))·Σ_{p<q} (1 - v_pᵀ v_q) — the volume-free ablation stand-in.
inline MeasureResult group_measure(const Eigen::MatrixXd& v, GroupMeasure measure) {
  MeasureResult r;
  if (measure == GroupMeasure::volume) {
    VolumeResult vol = volume(v);
    r.value = vol.volume;
    r.gradient = std::move(vol.gradient);
    return r;
  }
  const Eigen::Index k = v.cols();
  const double scale = 2.0 / (static_cast<double>(k) * static_cast<double>(k - 1));
  const Eigen::MatrixXd g = gram(v);
  double sum = 0.0;
  for (Eigen::Index p = 0; p < k; ++p)
    for (Eigen::Index q = p + 1; q < k; ++q) sum += 1.0 - g(p, q);
  r.value = scale * sum;
  // d/dv_p Σ_{p<q}(1 - v_pᵀv_q) = -Σ_{q≠p} v_q
  r.gradient = Eigen::MatrixXd::Zero(v.rows(), k);
  for (Eigen::Index p = 0; p < k; ++p)
    for (Eigen::Index q = 0; q < k; ++q)
      if (q != p) r.gradient.col(p) -= scale * v.col(q);
  return r;
}

struct LossBreakdown {
  double mover_loss = 0.0;
  double contrastive_loss = 0.0;
  double total = 0.0;
  int group_count = 0;
  double mean_pos_volume = 0.0;
  double mean_neg_volume = 0.0;
};

namespace detail {

inline Eigen::MatrixXd stack_group(const std::vector<Eigen::MatrixXd>& embeddings,
                                   const std::vector<int>& modalities,
                                   const std::vector<int>& indices) {
  const Eigen::Index d = embeddings[static_cast<std::size_t>(modalities[0])].cols();
  Eigen::MatrixXd v(d, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c)
    v.col(static_cast<Eigen::Index>(c)) =
        embeddings[static_cast<std::size_t>(modalities[c])].row(indices[c]).transpose();
  return v;
}

inline void scatter_group_grad(std::vector<Eigen::MatrixXd>& grads,
                               const std::vector<int>& modalities,
                               const std::vector<int>& indices, const Eigen::MatrixXd& g,
                               double scale) {
  for (std::size_t c = 0; c < indices.size(); ++c)
    grads[static_cast<std::size_t>(modalities[c])].row(indices[c]) +=
        scale * g.col(static_cast<Eigen::Index>(c)).transpose();
}

inline std::vector<MatchGroup> identity_groups(int batch, std::size_t k) {
  std::vector<MatchGroup> out(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    out[static_cast<std::size_t>(i)].indices.assign(k, i);
    out[static_cast<std::size_t>(i)].weight = 1.0 / static_cast<double>(batch);
  }
  return out;
}

}  // namespace detail

// Σ_g weight_g · measure(group_g); gradients accumulated per modality in
// group-list order. `modalities` maps tuple slots to embedding-set indices
// (identity for anchored k-tuple training, a pair for k=2 pair training).
inline double weighted_group_loss(const std::vector<MatchGroup>& groups,
                                  const std::vector<Eigen::MatrixXd>& embeddings,
                                  const std::vector<int>& modalities, GroupMeasure measure,
                                  std::vector<Eigen::MatrixXd>& grads) {
  if (groups.empty()) {
    std::fprintf(stderr, "warning: empty group list, loss contribution is 0\n");
    return 0.0;
  }
  double loss = 0.0;
  for (const auto& g : groups) {
    const Eigen::MatrixXd v = detail::stack_group(embeddings, modalities, g.indices);
    const MeasureResult m = group_measure(v, measure);
    loss += g.weight * m.value;
    detail::scatter_group_grad(grads, modalities, g.indices, m.gradient, g.weight);
  }
  return loss;
}

struct ContrastiveResult {
  double loss = 0.0;
  double mean_pos = 0.0;
  double mean_neg = 0.0;
};

// Per-anchor softmax cross-entropy over group measures: the positive is the
// hard OT match, negatives corrupt exactly one non-anchor modality (cycled
// over slots) with a uniformly drawn different index. The default form
// includes the positive in the denominator; "paper_literal" keeps the
// negatives-only denominator.
inline ContrastiveResult contrastive_loss(const std::vector<MatchGroup>& positives,
                                          const std::vector<Eigen::MatrixXd>& embeddings,
                                          const std::vector<int>& modalities, GroupMeasure measure,
                                          double tau, int n_negatives, bool paper_literal,
                                          Rng& rng, std::vector<Eigen::MatrixXd>& grads) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be > 0");
  if (n_negatives < 1) throw std::invalid_argument("contrastive_loss: need at least one negative");
  if (positives.empty()) return {};
  ContrastiveResult out;
  const std::size_t k = modalities.size();
  const Eigen::Index batch = embeddings[static_cast<std::size_t>(modalities[1])].rows();
  if (batch < 2)
    throw std::invalid_argument("contrastive_loss: need at least two items to draw negatives");
  const double inv_anchors = 1.0 / static_cast<double>(positives.size());

  std::vector<double> logits(static_cast<std::size_t>(n_negatives) + 1);
  for (const auto& pos : positives) {
    const Eigen::MatrixXd vp = detail::stack_group(embeddings, modalities, pos.indices);
    const MeasureResult mp = group_measure(vp, measure);
    std::vector<std::vector<int>> neg_indices(static_cast<std::size_t>(n_negatives));
    std::vector<MeasureResult> mn(static_cast<std::size_t>(n_negatives));
    for (int j = 0; j < n_negatives; ++j) {
      std::vector<int> idx = pos.indices;
      const std::size_t slot = 1 + static_cast<std::size_t>(j) % (k - 1);
      const int old = idx[slot];
      int repl = static_cast<int>(rng.below(static_cast<std::uint64_t>(batch - 1)));
      if (repl >= old) ++repl;
      idx[slot] = repl;
      neg_indices[static_cast<std::size_t>(j)] = idx;
      mn[static_cast<std::size_t>(j)] =
          group_measure(detail::stack_group(embeddings, modalities, idx), measure);
      out.mean_neg += mn[static_cast<std::size_t>(j)].value;
    }
    out.mean_pos += mp.value;

    logits[0] = -mp.value / tau;
    for (int j = 0; j < n_negatives; ++j)
      logits[static_cast<std::size_t>(j) + 1] = -mn[static_cast<std::size_t>(j)].value / tau;
    const std::size_t lse_begin = paper_literal ? 1 : 0;
    double mx = logits[lse_begin];
    for (std::size_t t = lse_begin; t < logits.size(); ++t) mx = std::max(mx, logits[t]);
    double z = 0.0;
    for (std::size_t t = lse_begin; t < logits.size(); ++t) z += std::exp(logits[t] - mx);
    const double lse = mx + std::log(z);
    out.loss += lse - logits[0];

    // dL_i/d pos = (1 - p_0)/τ (literal: 1/τ); dL_i/d neg_j = -p_j/τ.
    const double p0 = paper_literal ? 0.0 : std::exp(logits[0] - lse);
    detail::scatter_group_grad(grads, modalities, pos.indices, mp.gradient,
                               inv_anchors * (1.0 - p0) / tau);
    for (int j = 0; j < n_negatives; ++j) {
      const double pj = std::exp(logits[static_cast<std::size_t>(j) + 1] - lse);
      detail::scatter_group_grad(grads, modalities, neg_indices[static_cast<std::size_t>(j)],
                                 mn[static_cast<std::size_t>(j)].gradient,
                                 inv_anchors * (-pj) / tau);
    }
  }
  const double denom = static_cast<double>(positives.size());
  out.loss /= denom;
  out.mean_pos /= denom;
  out.mean_neg /= denom * static_cast<double>(n_negatives);
  return out;
}

inline double total_loss(double mover, double contrastive, double lambda) {
  return mover + lambda * contrastive;
}

// Run-mode switches threaded through the trainer. `pairs` empty means
// anchored k-tuple training over all modalities; otherwise the loss is a sum
// of independent k=2 terms, one per listed modality pair, and only modalities
// appearing in some pair receive updates (the cross-modality harness trains
// {(0,1)} restricted vs {(0,1),(0,2)} oracle runs).
struct TrainOptions {
  bool use_ot = true;  // false: identity matching with uniform weights
  GroupMeasure measure = GroupMeasure::volume;
  std::vector<std::pair<int, int>> pairs;
};

class Trainer {
 public:
  Trainer(SyntheticDataset dataset, const TrainConfig& cfg, TrainOptions options = {})
      : dataset_(std::move(dataset)), cfg_(cfg), options_(std::move(options)),
        neg_rng_(Rng(cfg.seed).substream(101)), soft_rng_(Rng(cfg.seed).substream(202)) {
    validate(cfg_);
    encoders_ = initial_encoders(dataset_, cfg_.d, cfg_.seed);
    if (options_.pairs.empty()) {
      std::vector<int> all(static_cast<std::size_t>(cfg_.k));
      for (int m = 0; m < cfg_.k; ++m) all[static_cast<std::size_t>(m)] = m;
      tasks_.push_back(std::move(all));
    } else {
      for (const auto& [a, b] : options_.pairs) tasks_.push_back({a, b});
    }
    std::size_t slots = 0;
    for (const auto& t : tasks_) {
      for (int m : t) trained_.insert(static_cast<std::size_t>(m));
      slots += t.size() - 1;
    }
    warm_f_.resize(slots);
    warm_g_.resize(slots);
  }

  const std::vector<LinearEncoder>& encoders() const { return encoders_; }
  std::vector<LinearEncoder>& encoders() { return encoders_; }
  const std::vector<LossBreakdown>& history() const { return history_; }

  // One full step: encode → per-task plans (warm-started) → groups per the
  // configured strategy → mover + contrastive losses → SGD update.
  LossBreakdown step() {
    std::vector<Eigen::MatrixXd> embeddings(encoders_.size());
    for (std::size_t m = 0; m < encoders_.size(); ++m)
      embeddings[m] = encode(encoders_[m], dataset_.inputs[m]);

    std::vector<Eigen::MatrixXd> mover_grads = zero_like(embeddings);
    std::vector<Eigen::MatrixXd> contr_grads = zero_like(embeddings);

    LossBreakdown metrics;
    double pos_acc = 0.0, neg_acc = 0.0;
    std::size_t slot = 0;
    for (const auto& task : tasks_) {
      const std::size_t anchor = static_cast<std::size_t>(task[0]);
      std::vector<TransportPlan> plans;
      if (options_.use_ot) {
        plans.reserve(task.size() - 1);
        for (std::size_t s = 1; s < task.size(); ++s, ++slot) {
          const Eigen::MatrixXd cost =
              cost_matrix(embeddings[anchor], embeddings[static_cast<std::size_t>(task[s])]);
          const Eigen::VectorXd* f0 = warm_f_[slot].size() ? &warm_f_[slot] : nullptr;
          const Eigen::VectorXd* g0 = warm_g_[slot].size() ? &warm_g_[slot] : nullptr;
          plans.push_back(sinkhorn(cost, cfg_.epsilon, kSinkhornMaxIters, kSinkhornTol, f0, g0));
          warm_f_[slot] = plans.back().f;
          warm_g_[slot] = plans.back().g;
        }
      } else {
        slot += task.size() - 1;
      }

      const int batch = static_cast<int>(embeddings[anchor].rows());
      std::vector<MatchGroup> groups;
      std::vector<MatchGroup> positives;
      if (options_.use_ot) {
        if (cfg_.strategy == "hard") groups = hard_groups(plans);
        else if (cfg_.strategy == "topk") groups = topk_groups(plans, cfg_.kprime);
        else groups = soft_sample_groups(plans, cfg_.kprime, soft_rng_.next());
        positives = hard_groups(plans);
      } else {
        groups = detail::identity_groups(batch, task.size());
        positives = groups;
      }

      metrics.group_count += static_cast<int>(groups.size());
      metrics.mover_loss +=
          weighted_group_loss(groups, embeddings, task, options_.measure, mover_grads);
      const ContrastiveResult c =
          contrastive_loss(positives, embeddings, task, options_.measure, cfg_.tau,
                           cfg_.negatives, cfg_.contrastive_form == "paper_literal", neg_rng_,
                           contr_grads);
      metrics.contrastive_loss += c.loss;
      pos_acc += c.mean_pos;
      neg_acc += c.mean_neg;
    }
    metrics.total = total_loss(metrics.mover_loss, metrics.contrastive_loss, cfg_.lambda);
    const double n_tasks = static_cast<double>(tasks_.size());
    metrics.mean_pos_volume = pos_acc / n_tasks;
    metrics.mean_neg_volume = neg_acc / n_tasks;
    check_finite(metrics);

    if (cfg_.lr != 0.0) {
      for (std::size_t m = 0; m < encoders_.size(); ++m) {
        if (!trained_.count(m)) continue;
        const Eigen::MatrixXd dv = mover_grads[m] + cfg_.lambda * contr_grads[m];
        const Eigen::MatrixXd dw = encode_backward(encoders_[m], dataset_.inputs[m], dv);
        encoders_[m].weight -= cfg_.lr * dw;
      }
    }
    history_.push_back(metrics);
    ++step_index_;
    return metrics;
  }

  void run() {
    for (int s = 0; s < cfg_.steps; ++s) step();
  }

 private:
  static std::vector<Eigen::MatrixXd> zero_like(const std::vector<Eigen::MatrixXd>& ref) {
    std::vector<Eigen::MatrixXd> out(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      out[i] = Eigen::MatrixXd::Zero(ref[i].rows(), ref[i].cols());
    return out;
  }

  void check_finite(const LossBreakdown& m) const {
    const auto bad = [](double x) { return !std::isfinite(x); };
    if (bad(m.mover_loss) || bad(m.contrastive_loss) || bad(m.total)) {
      std::ostringstream msg;
      msg << "training: non-finite loss at step " << step_index_ << " (component: "
          << (bad(m.mover_loss) ? "mover" : (bad(m.contrastive_loss) ? "contrastive" : "total"))
          << ")";
      throw std::runtime_error(msg.str());
    }
  }

  SyntheticDataset dataset_;
  TrainConfig cfg_;
  TrainOptions options_;
  std::vector<LinearEncoder> encoders_;
  std::vector<LossBreakdown> history_;
  std::vector<std::vector<int>> tasks_;  // modality indices per loss term
  std::set<std::size_t> trained_;
  Rng neg_rng_;
  Rng soft_rng_;
  std::vector<Eigen::VectorXd> warm_f_, warm_g_;
  int step_index_ = 0;
};

}  // namespace mover
