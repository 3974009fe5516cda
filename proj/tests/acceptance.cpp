// Acceptance gate: eight checks, one [PASS]/[FAIL] line each, nonzero exit if
// any fail. Each line carries the measured quantities and the elapsed time
// against the check's runtime budget.
//
// Check 6 (ablation ordering) demands a strict ordering with a two-point
// margin between the full method and the no-transport/no-volume variants; on
// this synthetic generator every variant saturates Recall@1 at the required
// scale, so the strict form cannot separate them, which this gate reports
// honestly rather than weakening the check. The non-strict ordering (ties
// allowed) does hold and is printed alongside. See README for the analysis.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mover/config.hpp"
#include "mover/eval.hpp"
#include "mover/geometry.hpp"
#include "mover/io.hpp"
#include "mover/model.hpp"
#include "mover/objective.hpp"
#include "mover/rng.hpp"
#include "mover/transport.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_check(int number, const std::string& name, double budget_seconds,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_budget = elapsed < budget_seconds;
  const bool pass = r.pass && in_budget;
  if (!pass) ++g_failures;
  std::printf("[%s] %d %s: %s; %.1fs %s %.0fs budget\n", pass ? "PASS" : "FAIL", number,
              name.c_str(), r.detail.c_str(), elapsed, in_budget ? "<" : ">=", budget_seconds);
  std::fflush(stdout);
}

std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(6);
  ss << x;
  return ss.str();
}

Eigen::MatrixXd unit_cols(mover::Rng& rng, int d, int k) {
  Eigen::MatrixXd v(d, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < d; ++i) v(i, j) = rng.normal();
    v.col(j).normalize();
  }
  return v;
}

Eigen::MatrixXd unit_rows(mover::Rng& rng, int n, int d) {
  Eigen::MatrixXd v(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) v(i, j) = rng.normal();
    v.row(i).normalize();
  }
  return v;
}

Eigen::MatrixXd random_cost(mover::Rng& rng, int n) {
  return mover::cost_matrix(unit_rows(rng, n, 16), unit_rows(rng, n, 16));
}

// ---- 1: gradient suite ----------------------------------------------------

Outcome check_gradients() {
  mover::Rng rng(100);
  const int ks[] = {2, 3, 4};
  const int ds[] = {4, 8, 16};
  double worst_vol = 0.0;
  int count = 0;
  while (count < 100) {
    for (int k : ks) {
      for (int d : ds) {
        if (count >= 100) break;
        const Eigen::MatrixXd v = unit_cols(rng, d, k);
        const Eigen::MatrixXd analytic = mover::grad_volume(v);
        const Eigen::MatrixXd fd = mover::volume_finite_diff(v, 1e-5);
        worst_vol = std::max(worst_vol, mover::max_relative_error(analytic, fd));
        ++count;
      }
    }
  }

  // End-to-end: loss as a function of encoder weights with plans, groups, and
  // negative draws frozen; analytic gradient via the normalization backward.
  const int k = 3, b = 6, d = 6, d_in = 6;
  const auto ds_data = mover::generate_synthetic(2, k, b, d_in, 0.2, 0);
  auto encoders = mover::initial_encoders(ds_data, d, 0);
  const double tau = 0.2, lambda = 0.7;
  const std::vector<int> modalities = {0, 1, 2};

  const auto embed_all = [&](const std::vector<mover::LinearEncoder>& enc) {
    std::vector<Eigen::MatrixXd> v(enc.size());
    for (std::size_t m = 0; m < enc.size(); ++m)
      v[m] = mover::encode(enc[m], ds_data.inputs[m]);
    return v;
  };
  const auto base = embed_all(encoders);
  std::vector<mover::TransportPlan> plans;
  for (int s = 1; s < k; ++s)
    plans.push_back(mover::sinkhorn(
        mover::cost_matrix(base[0], base[static_cast<std::size_t>(s)]), 0.1));
  const auto groups = mover::topk_groups(plans, 2);
  const auto positives = mover::hard_groups(plans);

  const auto loss_at = [&](const std::vector<mover::LinearEncoder>& enc,
                           std::vector<Eigen::MatrixXd>* emb_grads) {
    const auto v = embed_all(enc);
    std::vector<Eigen::MatrixXd> mg(v.size()), cg(v.size());
    for (std::size_t m = 0; m < v.size(); ++m) {
      mg[m] = Eigen::MatrixXd::Zero(v[m].rows(), v[m].cols());
      cg[m] = Eigen::MatrixXd::Zero(v[m].rows(), v[m].cols());
    }
    const double mover_term =
        mover::weighted_group_loss(groups, v, modalities, mover::GroupMeasure::volume, mg);
    mover::Rng neg_rng(555);
    const auto c = mover::contrastive_loss(positives, v, modalities,
                                           mover::GroupMeasure::volume, tau, 4,
                                           /*paper_literal=*/false, neg_rng, cg);
    if (emb_grads) {
      emb_grads->resize(v.size());
      for (std::size_t m = 0; m < v.size(); ++m) (*emb_grads)[m] = mg[m] + lambda * cg[m];
    }
    return mover::total_loss(mover_term, c.loss, lambda);
  };

  std::vector<Eigen::MatrixXd> emb_grads;
  loss_at(encoders, &emb_grads);
  double worst_w = 0.0;
  const double h = 1e-5;
  for (std::size_t m = 0; m < encoders.size(); ++m) {
    const Eigen::MatrixXd analytic =
        mover::encode_backward(encoders[m], ds_data.inputs[m], emb_grads[m]);
    Eigen::MatrixXd fd(d, d_in);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d_in; ++j) {
        auto ep = encoders, em = encoders;
        ep[m].weight(i, j) += h;
        em[m].weight(i, j) -= h;
        fd(i, j) = (loss_at(ep, nullptr) - loss_at(em, nullptr)) / (2 * h);
      }
    }
    worst_w = std::max(worst_w, mover::max_relative_error(analytic, fd));
  }

  Outcome r;
  r.pass = worst_vol < 1e-5 && worst_w < 1e-4;
  r.detail = "volume grad max rel err " + fmt(worst_vol) + " (<1e-5), end-to-end " +
             fmt(worst_w) + " (<1e-4)";
  return r;
}

// ---- 2: geometry invariants -----------------------------------------------

Outcome check_geometry() {
  mover::Rng rng(200);
  double worst_orth = 0.0, worst_perm = 0.0, worst_hadamard = 0.0, worst_colinear = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(3));
    const int d = 8;
    const Eigen::MatrixXd v = unit_cols(rng, d, k);
    const double vol = mover::volume_value(v);

    mover::Rng qrng = rng.substream(static_cast<std::uint64_t>(trial) + 1);
    const Eigen::MatrixXd q = mover::detail::random_orthogonal(qrng, d);
    worst_orth = std::max(worst_orth, std::abs(mover::volume_value(q * v) - vol));

    Eigen::MatrixXd p = v;
    p.col(0).swap(p.col(k - 1));
    worst_perm = std::max(worst_perm, std::abs(mover::volume_value(p) - vol));

    worst_hadamard = std::max(worst_hadamard, vol - 1.0);  // unit columns: vol <= 1

    Eigen::MatrixXd c = v;
    c.col(k - 1) = c.col(0);  // duplicated column
    worst_colinear = std::max(worst_colinear, mover::volume_value(c));
  }

  double worst_sin = 0.0;
  for (int deg = 1; deg < 180; deg += 2) {
    const double theta = deg * M_PI / 180.0;
    Eigen::MatrixXd v(3, 2);
    v << 1, std::cos(theta), 0, std::sin(theta), 0, 0;
    worst_sin = std::max(worst_sin, std::abs(mover::volume_value(v) - std::sin(theta)));
  }

  Outcome r;
  r.pass = worst_orth < 1e-10 && worst_perm < 1e-12 && worst_hadamard < 1e-9 &&
           worst_colinear < 1e-6 && worst_sin < 1e-10;
  r.detail = "orthogonal dev " + fmt(worst_orth) + ", permutation dev " + fmt(worst_perm) +
             ", Hadamard excess " + fmt(worst_hadamard) + ", colinear vol " +
             fmt(worst_colinear) + " (<1e-6), sin-theta dev " + fmt(worst_sin) + " (<1e-10)";
  return r;
}

// ---- 3: transport feasibility ----------------------------------------------

Outcome check_sinkhorn() {
  mover::Rng rng(300);
  const int sizes[] = {4, 16, 64};
  const double epsilons[] = {0.01, 0.05, 0.5};
  double worst_marginal = 0.0;  // converged runs
  double worst_stalled = 0.0;   // honestly flagged slow-mixing runs
  int solved = 0, stalled = 0;
  bool all_finite = true, regime_ok = true;
  while (solved + stalled < 50) {
    for (int n : sizes) {
      for (double eps : epsilons) {
        if (solved + stalled >= 50) break;
        // Measured per-cell budgets: the fast-mixing regime (eps=0.5, or
        // eps=0.05 at n>=16) converges well inside these (ensemble worst:
        // 20 / 2.9e3 / 4.2e4 iterations). Slow-mixing corners (eps=0.01, or
        // eps=0.05 at n=4) have ensemble horizons of 1e5..beyond 2e6
        // iterations, so they get a bounded budget and must flag honestly.
        const int budget = eps > 0.05 ? 2000
                           : (n == 16 && eps > 0.01 ? 80000 : (n == 64 ? 8000 : 20000));
        const auto p = mover::sinkhorn(random_cost(rng, n), eps, budget, 1e-9);
        all_finite = all_finite && p.entries.allFinite();
        if (p.converged) {
          worst_marginal = std::max(worst_marginal, p.marginal_error);
          ++solved;
        } else {
          // the fast-mixing regime (large eps, or moderate eps at B >= 16)
          // must never stall; slow-mixing corners are flagged, near-feasible
          regime_ok = regime_ok && !(eps > 0.05 || (eps > 0.01 && n >= 16));
          worst_stalled = std::max(worst_stalled, p.marginal_error);
          ++stalled;
        }
      }
    }
  }

  double worst_shift = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd c = random_cost(rng, 8);
    const auto p = mover::sinkhorn(c, 0.1);
    const auto ps = mover::sinkhorn((c.array() + 1.7).matrix(), 0.1);
    worst_shift = std::max(worst_shift, (p.entries - ps.entries).cwiseAbs().maxCoeff());
  }

  const auto wide = mover::sinkhorn(random_cost(rng, 16), 1e4);
  const double product_dev = (wide.entries.array() - 1.0 / 256.0).abs().maxCoeff();

  Outcome r;
  r.pass = all_finite && regime_ok && worst_marginal < 1e-9 && worst_stalled < 1e-4 &&
           worst_shift < 1e-8 && product_dev < 1e-4;
  r.detail = std::to_string(solved) + " converged (marginal dev " + fmt(worst_marginal) +
             " <1e-9), " + std::to_string(stalled) +
             " slow-mixing flagged non-converged (dev " + fmt(worst_stalled) +
             " <1e-4), shift dev " + fmt(worst_shift) + " (<1e-8), wide-eps product dev " +
             fmt(product_dev) + " (<1e-4)";
  return r;
}

// ---- 4: composition and strategies ------------------------------------------

Outcome check_composition() {
  mover::Rng rng(400);

  // k=2: composition returns the plan itself
  bool identity_ok = true;
  {
    const auto plan = mover::sinkhorn(random_cost(rng, 4), 0.5);
    const auto groups = mover::compose_group_weights({plan}, 0.0);
    identity_ok = groups.size() == 16;
    for (const auto& g : groups)
      identity_ok = identity_ok &&
                    std::abs(g.weight - plan.entries(g.indices[0], g.indices[1])) < 1e-15;
  }

  // hard tuples nest inside top-k'
  bool nest_ok = true;
  {
    std::vector<mover::TransportPlan> plans;
    plans.push_back(mover::sinkhorn(random_cost(rng, 6), 0.5));
    plans.push_back(mover::sinkhorn(random_cost(rng, 6), 0.5));
    const auto hard = mover::hard_groups(plans);
    const auto top = mover::topk_groups(plans, 3);
    for (const auto& h : hard) {
      bool found = false;
      for (const auto& t : top) found = found || t.indices == h.indices;
      nest_ok = nest_ok && found;
    }
  }

  // soft sampling frequencies on uniform rows: 3 sigma band
  bool freq_ok = true;
  double worst_sigma = 0.0;
  {
    mover::TransportPlan uniform;
    uniform.entries = Eigen::MatrixXd::Constant(1, 4, 0.25);
    std::vector<int> counts(4, 0);
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) {
      const auto g = mover::soft_sample_groups({uniform}, 1, static_cast<std::uint64_t>(s));
      counts[static_cast<std::size_t>(g[0].indices[1])]++;
    }
    const double sd = std::sqrt(draws * 0.25 * 0.75);
    for (int j = 0; j < 4; ++j) {
      const double dev = std::abs(counts[static_cast<std::size_t>(j)] - draws * 0.25) / sd;
      worst_sigma = std::max(worst_sigma, dev);
      freq_ok = freq_ok && dev < 3.0;
    }
  }

  // hard match equals the brute-force argmax oracle at B=4, k=3
  bool oracle_ok = true;
  {
    std::vector<mover::TransportPlan> plans;
    plans.push_back(mover::sinkhorn(random_cost(rng, 4), 0.2));
    plans.push_back(mover::sinkhorn(random_cost(rng, 4), 0.2));
    const auto hard = mover::hard_groups(plans);
    for (int i = 0; i < 4; ++i) {
      for (std::size_t m = 0; m < 2; ++m) {
        int best = 0;
        for (int j = 1; j < 4; ++j)
          if (plans[m].entries(i, j) > plans[m].entries(i, best)) best = j;
        oracle_ok = oracle_ok && hard[static_cast<std::size_t>(i)].indices[m + 1] == best;
      }
    }
  }

  Outcome r;
  r.pass = identity_ok && nest_ok && freq_ok && oracle_ok;
  r.detail = std::string("k=2 identity ") + (identity_ok ? "ok" : "BROKEN") +
             ", hard-in-topk " + (nest_ok ? "ok" : "BROKEN") + ", soft freq max " +
             fmt(worst_sigma) + " sigma (<3), argmax oracle " + (oracle_ok ? "ok" : "BROKEN");
  return r;
}

// ---- 5: training convergence ------------------------------------------------

Outcome check_convergence() {
  double worst_ratio = 0.0;
  double worst_recall = 1.0;
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    mover::TrainConfig cfg;
    cfg.sigma = 0.0;
    cfg.C = 4;
    cfg.B = 64;
    cfg.k = 3;
    cfg.steps = 200;
    cfg.seed = seed;
    auto ds = mover::generate_synthetic(cfg.C, cfg.k, cfg.B, cfg.d_in, cfg.sigma, cfg.seed);
    mover::Trainer trainer(ds, cfg);
    trainer.run();
    const double ratio =
        trainer.history().back().mover_loss / trainer.history().front().mover_loss;
    worst_ratio = std::max(worst_ratio, ratio);

    std::vector<Eigen::MatrixXd> v(3);
    for (int m = 0; m < 3; ++m)
      v[static_cast<std::size_t>(m)] =
          mover::encode(trainer.encoders()[static_cast<std::size_t>(m)],
                        ds.inputs[static_cast<std::size_t>(m)]);
    std::vector<int> truth(64);
    for (int i = 0; i < 64; ++i) truth[static_cast<std::size_t>(i)] = i;
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        if (p == q) continue;
        worst_recall = std::min(
            worst_recall, mover::recall_at_k(v[static_cast<std::size_t>(p)],
                                             v[static_cast<std::size_t>(q)], truth, 1));
      }
  }
  Outcome r;
  r.pass = worst_ratio < 0.1 && worst_recall == 1.0;
  r.detail = "worst loss ratio " + fmt(worst_ratio) + " (<0.1), worst direction Recall@1 " +
             fmt(worst_recall) + " (=1.0), seeds {0,1,2}";
  return r;
}

// ---- 6: ablation ordering (strict form; see header comment) -----------------

Outcome check_ablation() {
  mover::TrainConfig cfg;
  cfg.sigma = 0.3;
  cfg.C = 8;
  cfg.B = 64;
  cfg.k = 3;
  const auto report = mover::run_ablation(cfg, {0, 1, 2});
  const double full = report.mean_recall1.at("full");
  const double no_ot = report.mean_recall1.at("no_ot");
  const double no_gave = report.mean_recall1.at("no_gave");
  const double neither = report.mean_recall1.at("neither");

  const bool strict_top = full > no_ot && full > no_gave;
  const bool strict_bottom = neither < no_ot && neither < no_gave;
  const bool margin = (full - neither) >= 0.02;

  Outcome r;
  r.pass = strict_top && strict_bottom && margin;
  r.detail = "mean Recall@1 full=" + fmt(full) + " no_ot=" + fmt(no_ot) + " no_gave=" +
             fmt(no_gave) + " neither=" + fmt(neither) +
             "; strict endpoints with 0.02 margin required";
  if (!r.pass)
    r.detail += report.ordering_satisfied
                    ? " — variants saturate Recall@1 at this scale (non-strict ordering holds)"
                    : " — non-strict ordering also violated";
  return r;
}

// ---- 7: restricted cross-modality run ----------------------------------------

Outcome check_crossmodal() {
  mover::TrainConfig cfg;
  cfg.sigma = 0.2;
  cfg.k = 3;
  cfg.B = 64;
  const auto report = mover::cross_modal_generalization(cfg, {0, 1, 2});
  const double restricted = std::min(report.restricted_13, report.restricted_31);
  const bool above_chance = restricted > report.chance;
  const bool oracle_ok = report.oracle_13 >= report.restricted_13 &&
                         report.oracle_31 >= report.restricted_31;
  Outcome r;
  r.pass = above_chance && oracle_ok;
  r.detail = "restricted 1<->3 Recall@1 " + fmt(report.restricted_13) + "/" +
             fmt(report.restricted_31) + " vs chance " + fmt(report.chance) + ", oracle " +
             fmt(report.oracle_13) + "/" + fmt(report.oracle_31) + " (>= restricted)";
  return r;
}

// ---- 8: determinism and round-trip -------------------------------------------

Outcome check_determinism() {
  const fs::path dir = fs::temp_directory_path() / "mover_acceptance";
  fs::create_directories(dir);

  mover::TrainConfig cfg;
  cfg.k = 3;
  cfg.B = 16;
  cfg.C = 4;
  cfg.d = 16;
  cfg.d_in = 16;
  cfg.sigma = 0.1;
  cfg.steps = 20;
  auto ds = mover::generate_synthetic(cfg.C, cfg.k, cfg.B, cfg.d_in, cfg.sigma, cfg.seed);

  mover::Trainer a(ds, cfg), b(ds, cfg);
  a.run();
  b.run();
  mover::write_metrics_csv((dir / "a.csv").string(), a.history());
  mover::write_metrics_csv((dir / "b.csv").string(), b.history());
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const bool bytes_equal = slurp(dir / "a.csv") == slurp(dir / "b.csv");

  mover::save_weights((dir / "w.bin").string(), a.encoders());
  const auto loaded = mover::load_weights((dir / "w.bin").string());
  double forward_dev = 0.0;
  for (std::size_t m = 0; m < loaded.size(); ++m) {
    const Eigen::MatrixXd ya = mover::encode(a.encoders()[m], ds.inputs[m]);
    const Eigen::MatrixXd yl = mover::encode(loaded[m], ds.inputs[m]);
    forward_dev = std::max(forward_dev, (ya - yl).cwiseAbs().maxCoeff());
  }
  const double recall_train = mover::mean_recall1(a.encoders(), ds);
  const double recall_loaded = mover::mean_recall1(loaded, ds);

  std::error_code ec;
  fs::remove_all(dir, ec);

  Outcome r;
  r.pass = bytes_equal && forward_dev < 1e-12 && recall_train == recall_loaded;
  r.detail = std::string("metrics byte-identical: ") + (bytes_equal ? "yes" : "NO") +
             ", forward round-trip dev " + fmt(forward_dev) + " (<1e-12), recall " +
             fmt(recall_loaded) + (recall_train == recall_loaded ? " reproduced exactly"
                                                                 : " MISMATCH");
  return r;
}

}  // namespace

int main() {
  run_check(1, "gradient-suite", 10, check_gradients);
  run_check(2, "geometry-invariants", 1, check_geometry);
  run_check(3, "transport-feasibility", 5, check_sinkhorn);
  run_check(4, "composition-strategies", 5, check_composition);
  run_check(5, "training-convergence", 60, check_convergence);
  run_check(6, "ablation-ordering", 300, check_ablation);
  run_check(7, "crossmodal-generalization", 300, check_crossmodal);
  run_check(8, "determinism-roundtrip", 30, check_determinism);
  std::printf("%d/8 checks passed\n", 8 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
