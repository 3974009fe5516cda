#pragma once

// Retrieval metrics and the two comparison harnesses: the four-variant
// ablation (full / no_ot / no_gave / neither) and the cross-modality
// generalization run (train on modalities 1-2 only, retrieve 1<->3, compared
// against a pair-set oracle trained on (1,2)+(1,3)).

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mover/config.hpp"
#include "mover/model.hpp"
#include "mover/objective.hpp"

namespace mover {

struct RetrievalResult {
  int query_modality = 0;
  int target_modality = 0;
  std::map<int, double> recall_at;
  int query_count = 0;
};

// Fraction of queries whose true match ranks in the top K by cosine
// similarity. Ties are counted optimistically: a query scores iff strictly
// fewer than K gallery items beat the true match (on collapsed clusters every
// tied member counts as retrieved, making the 1.0 ceiling reachable).
inline double recall_at_k(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery,
                          const std::vector<int>& ground_truth, int k) {
  if (static_cast<Eigen::Index>(ground_truth.size()) != queries.rows())
    throw std::invalid_argument("recall_at_k: ground truth size differs from query count");
  if (k < 1 || k > gallery.rows()) throw std::invalid_argument("recall_at_k: K out of range");
  const Eigen::MatrixXd sims = queries * gallery.transpose();
  int hits = 0;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const double truth = sims(i, ground_truth[static_cast<std::size_t>(i)]);
    int beaten_by = 0;
    for (Eigen::Index j = 0; j < gallery.rows(); ++j)
      if (sims(i, j) > truth) ++beaten_by;
    if (beaten_by < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows());
}

inline RetrievalResult retrieval_result(const Eigen::MatrixXd& queries,
                                        const Eigen::MatrixXd& gallery, int query_modality,
                                        int target_modality, const std::vector<int>& ks) {
  RetrievalResult r;
  r.query_modality = query_modality;
  r.target_modality = target_modality;
  r.query_count = static_cast<int>(queries.rows());
  std::vector<int> truth(static_cast<std::size_t>(queries.rows()));
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i);
  for (int k : ks) r.recall_at[k] = recall_at_k(queries, gallery, truth, k);
  return r;
}

// Mean Recall@1 over all ordered modality pairs on the training batch.
inline double mean_recall1(const std::vector<LinearEncoder>& encoders,
                           const SyntheticDataset& ds) {
  const int k = static_cast<int>(encoders.size());
  std::vector<Eigen::MatrixXd> v(static_cast<std::size_t>(k));
  for (int m = 0; m < k; ++m)
    v[static_cast<std::size_t>(m)] = encode(encoders[static_cast<std::size_t>(m)],
                                            ds.inputs[static_cast<std::size_t>(m)]);
  std::vector<int> truth(static_cast<std::size_t>(v[0].rows()));
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i);
  double acc = 0.0;
  int n = 0;
  for (int p = 0; p < k; ++p)
    for (int q = 0; q < k; ++q) {
      if (p == q) continue;
      acc += recall_at_k(v[static_cast<std::size_t>(p)], v[static_cast<std::size_t>(q)], truth, 1);
      ++n;
    }
  return acc / static_cast<double>(n);
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  int query_modality = 0;
  int target_modality = 0;
  double recall1 = 0.0;
};

struct AblationReport {
  std::map<std::string, double> mean_recall1;  // per variant, over seeds+directions
  std::vector<AblationRow> rows;               // variant x seed x direction detail
  bool ordering_satisfied = false;  // full >= no_ot, full >= no_gave, both >= neither
};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"full", "no_ot", "no_gave", "neither"};
  return v;
}

inline TrainOptions ablation_options(const std::string& variant) {
  TrainOptions opt;
  if (variant == "no_ot" || variant == "neither") opt.use_ot = false;
  if (variant == "no_gave" || variant == "neither") opt.measure = GroupMeasure::cosine_spread;
  return opt;
}

// Trains the four variants per seed and reports mean Recall@1 per variant
// with the non-strict ordering check.
inline AblationReport run_ablation(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  AblationReport report;
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  for (const auto& variant : ablation_variants()) {
    for (std::uint64_t seed : seeds) {
      TrainConfig run_cfg = cfg;
      run_cfg.seed = seed;
      SyntheticDataset ds =
          generate_synthetic(run_cfg.C, run_cfg.k, run_cfg.B, run_cfg.d_in, run_cfg.sigma, seed);
      Trainer trainer(ds, run_cfg, ablation_options(variant));
      trainer.run();
      std::vector<Eigen::MatrixXd> v(static_cast<std::size_t>(run_cfg.k));
      for (int m = 0; m < run_cfg.k; ++m)
        v[static_cast<std::size_t>(m)] =
            encode(trainer.encoders()[static_cast<std::size_t>(m)], ds.inputs[static_cast<std::size_t>(m)]);
      std::vector<int> truth(static_cast<std::size_t>(run_cfg.B));
      for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i);
      for (int p = 0; p < run_cfg.k; ++p)
        for (int q = 0; q < run_cfg.k; ++q) {
          if (p == q) continue;
          AblationRow row;
          row.variant = variant;
          row.seed = seed;
          row.query_modality = p;
          row.target_modality = q;
          row.recall1 = recall_at_k(v[static_cast<std::size_t>(p)],
                                    v[static_cast<std::size_t>(q)], truth, 1);
          report.rows.push_back(row);
          sums[variant] += row.recall1;
          counts[variant] += 1;
        }
    }
  }
  for (const auto& variant : ablation_variants())
    report.mean_recall1[variant] = sums[variant] / static_cast<double>(counts[variant]);
  const double full = report.mean_recall1["full"];
  const double no_ot = report.mean_recall1["no_ot"];
  const double no_gave = report.mean_recall1["no_gave"];
  const double neither = report.mean_recall1["neither"];
  report.ordering_satisfied =
      full >= no_ot && full >= no_gave && no_ot >= neither && no_gave >= neither;
  return report;
}

struct CrossModalReport {
  double restricted_13 = 0.0;  // Recall@1, modality 1 -> 3, mean over seeds
  double restricted_31 = 0.0;
  double oracle_13 = 0.0;
  double oracle_31 = 0.0;
  double chance = 0.0;  // 1/B
};

// Restricted run: k=2 training on the pair (1,2) only; modality 3's encoder
// keeps its seeded initialization and is never updated. Oracle run: k=2
// training on the pair set {(1,2),(1,3)}. Both evaluated on 1<->3 retrieval.
inline CrossModalReport cross_modal_generalization(const TrainConfig& cfg,
                                                   const std::vector<std::uint64_t>& seeds) {
  if (cfg.k < 3) throw std::invalid_argument("cross_modal_generalization: requires k >= 3");
  CrossModalReport report;
  report.chance = 1.0 / static_cast<double>(cfg.B);
  std::vector<int> truth(static_cast<std::size_t>(cfg.B));
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i);

  for (std::uint64_t seed : seeds) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    SyntheticDataset ds =
        generate_synthetic(run_cfg.C, run_cfg.k, run_cfg.B, run_cfg.d_in, run_cfg.sigma, seed);

    TrainOptions restricted;
    restricted.pairs = {{0, 1}};
    Trainer r(ds, run_cfg, restricted);
    r.run();
    const Eigen::MatrixXd r1 = encode(r.encoders()[0], ds.inputs[0]);
    const Eigen::MatrixXd r3 = encode(r.encoders()[2], ds.inputs[2]);
    report.restricted_13 += recall_at_k(r1, r3, truth, 1);
    report.restricted_31 += recall_at_k(r3, r1, truth, 1);

    TrainOptions oracle;
    oracle.pairs = {{0, 1}, {0, 2}};
    Trainer o(ds, run_cfg, oracle);
    o.run();
    const Eigen::MatrixXd o1 = encode(o.encoders()[0], ds.inputs[0]);
    const Eigen::MatrixXd o3 = encode(o.encoders()[2], ds.inputs[2]);
    report.oracle_13 += recall_at_k(o1, o3, truth, 1);
    report.oracle_31 += recall_at_k(o3, o1, truth, 1);
  }
  const double n = static_cast<double>(seeds.size());
  report.restricted_13 /= n;
  report.restricted_31 /= n;
  report.oracle_13 /= n;
  report.oracle_31 /= n;
  return report;
}

}  // namespace mover
