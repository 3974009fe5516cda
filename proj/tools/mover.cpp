// Command-line front end: train / eval / ablate / crossmodal /
// export-embeddings / gradcheck. Configuration comes from defaults, then an
// optional key=value config file, then explicit flags (highest precedence).
// The MOVER_OUT environment variable overrides the output directory.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
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

struct Common {
  CLI::App* sub = nullptr;
  std::string config_path;
  std::string out_dir = "out";
  mover::TrainConfig flags;

  void attach(CLI::App* s) {
    sub = s;
    s->add_option("--config", config_path, "key=value config file");
    s->add_option("--out", out_dir, "output directory for artifacts");
    s->add_option("--k", flags.k, "number of modalities");
    s->add_option("--B", flags.B, "batch size");
    s->add_option("--d", flags.d, "embedding dimension");
    s->add_option("--d_in", flags.d_in, "input dimension");
    s->add_option("--C", flags.C, "number of latent classes");
    s->add_option("--sigma", flags.sigma, "latent noise scale");
    s->add_option("--epsilon", flags.epsilon, "entropic regularization");
    s->add_option("--tau", flags.tau, "contrastive temperature");
    s->add_option("--lambda", flags.lambda, "contrastive loss weight");
    s->add_option("--kprime", flags.kprime, "top-k' width / soft sample count");
    s->add_option("--strategy", flags.strategy, "group strategy: hard|topk|soft");
    s->add_option("--contrastive_form", flags.contrastive_form, "infonce|paper_literal");
    s->add_option("--negatives", flags.negatives, "negatives per anchor");
    s->add_option("--lr", flags.lr, "SGD learning rate");
    s->add_option("--steps", flags.steps, "training steps");
    s->add_option("--seed", flags.seed, "RNG seed");
  }

  mover::TrainConfig resolve() const {
    mover::TrainConfig cfg;
    if (!config_path.empty()) mover::load_config_file(cfg, config_path);
    const auto take = [&](const char* name, auto member) {
      if (sub->count(name)) cfg.*member = flags.*member;
    };
    take("--k", &mover::TrainConfig::k);
    take("--B", &mover::TrainConfig::B);
    take("--d", &mover::TrainConfig::d);
    take("--d_in", &mover::TrainConfig::d_in);
    take("--C", &mover::TrainConfig::C);
    take("--sigma", &mover::TrainConfig::sigma);
    take("--epsilon", &mover::TrainConfig::epsilon);
    take("--tau", &mover::TrainConfig::tau);
    take("--lambda", &mover::TrainConfig::lambda);
    take("--kprime", &mover::TrainConfig::kprime);
    take("--strategy", &mover::TrainConfig::strategy);
    take("--contrastive_form", &mover::TrainConfig::contrastive_form);
    take("--negatives", &mover::TrainConfig::negatives);
    take("--lr", &mover::TrainConfig::lr);
    take("--steps", &mover::TrainConfig::steps);
    take("--seed", &mover::TrainConfig::seed);
    mover::validate(cfg);
    return cfg;
  }

  // Flag < environment: MOVER_OUT wins when set.
  std::string resolve_out() const {
    if (const char* env = std::getenv("MOVER_OUT"); env && *env) return env;
    return out_dir;
  }
};

// Fail fast (before any compute) if the output directory cannot take files.
void ensure_writable(const std::string& dir) {
  fs::create_directories(dir);
  const fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream out(probe);
    out << "probe";
    if (!out) throw std::runtime_error("output directory is not writable: " + dir);
  }
  fs::remove(probe);
}

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

mover::SyntheticDataset dataset_for(const mover::TrainConfig& cfg) {
  return mover::generate_synthetic(cfg.C, cfg.k, cfg.B, cfg.d_in, cfg.sigma, cfg.seed);
}

void print_recall(double recall) {
  std::cout << "final mean Recall@1: " << mover::detail::format_double(recall) << "\n";
}

int run_train(const Common& common) {
  const auto cfg = common.resolve();
  const std::string out = common.resolve_out();
  ensure_writable(out);
  auto ds = dataset_for(cfg);
  mover::Trainer trainer(ds, cfg);
  trainer.run();
  mover::write_metrics_csv(join(out, "metrics.csv"), trainer.history());
  mover::save_weights(join(out, "weights.bin"), trainer.encoders());
  std::cerr << "wrote " << join(out, "metrics.csv") << " and " << join(out, "weights.bin")
            << "\n";
  print_recall(mover::mean_recall1(trainer.encoders(), ds));
  return 0;
}

int run_eval(const Common& common) {
  const auto cfg = common.resolve();
  const std::string out = common.resolve_out();
  const auto encoders = mover::load_weights(join(out, "weights.bin"));
  if (static_cast<int>(encoders.size()) != cfg.k)
    throw std::runtime_error("weights file holds " + std::to_string(encoders.size()) +
                             " encoders but config has k=" + std::to_string(cfg.k));
  if (encoders[0].weight.rows() != cfg.d || encoders[0].weight.cols() != cfg.d_in)
    throw std::runtime_error("weights file dimensions do not match config d/d_in");
  const auto ds = dataset_for(cfg);
  print_recall(mover::mean_recall1(encoders, ds));
  return 0;
}

int run_export(const Common& common) {
  const auto cfg = common.resolve();
  const std::string out = common.resolve_out();
  ensure_writable(out);
  const auto encoders = mover::load_weights(join(out, "weights.bin"));
  if (static_cast<int>(encoders.size()) != cfg.k)
    throw std::runtime_error("weights file holds " + std::to_string(encoders.size()) +
                             " encoders but config has k=" + std::to_string(cfg.k));
  const auto ds = dataset_for(cfg);
  std::vector<Eigen::MatrixXd> embeddings(encoders.size());
  for (std::size_t m = 0; m < encoders.size(); ++m)
    embeddings[m] = mover::encode(encoders[m], ds.inputs[m]);
  mover::write_embeddings_csv(join(out, "embeddings.csv"), embeddings, ds.labels);
  std::cerr << "wrote " << join(out, "embeddings.csv") << "\n";
  return 0;
}

int run_ablate(const Common& common, const std::vector<std::uint64_t>& seeds) {
  const auto cfg = common.resolve();
  const std::string out = common.resolve_out();
  ensure_writable(out);
  const auto report = mover::run_ablation(cfg, seeds);
  mover::write_ablation_csv(join(out, "ablation.csv"), report);
  std::cerr << "wrote " << join(out, "ablation.csv") << "\n";
  std::cout << "variant mean_Recall@1\n";
  for (const auto& variant : mover::ablation_variants())
    std::cout << variant << " " << mover::detail::format_double(report.mean_recall1.at(variant))
              << "\n";
  std::cout << "ordering (full >= single ablations >= neither): "
            << (report.ordering_satisfied ? "satisfied" : "violated") << "\n";
  return 0;
}

int run_crossmodal(const Common& common, const std::vector<std::uint64_t>& seeds) {
  const auto cfg = common.resolve();
  const auto report = mover::cross_modal_generalization(cfg, seeds);
  std::cout << "restricted 1->3 Recall@1: " << mover::detail::format_double(report.restricted_13)
            << "\n";
  std::cout << "restricted 3->1 Recall@1: " << mover::detail::format_double(report.restricted_31)
            << "\n";
  std::cout << "oracle 1->3 Recall@1: " << mover::detail::format_double(report.oracle_13) << "\n";
  std::cout << "oracle 3->1 Recall@1: " << mover::detail::format_double(report.oracle_31) << "\n";
  std::cout << "chance: " << mover::detail::format_double(report.chance) << "\n";
  return 0;
}

// Numerical audit: (a) the analytic volume gradient against central
// differences on random matrices; (b) the full loss gradient w.r.t. encoder
// weights, with plans, groups, and negative draws frozen, against central
// differences through the encoders.
int run_gradcheck() {
  mover::Rng rng(2024);
  double worst_vol = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(3));
    const int d = k + 2 + static_cast<int>(rng.below(8));
    Eigen::MatrixXd v(d, k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < k; ++j) v(i, j) = rng.normal();
    for (int j = 0; j < k; ++j) v.col(j).normalize();
    const Eigen::MatrixXd analytic = mover::grad_volume(v);
    const Eigen::MatrixXd fd = mover::volume_finite_diff(v, 1e-5);
    worst_vol = std::max(worst_vol, mover::max_relative_error(analytic, fd));
  }
  const double vol_tol = 1e-5;
  std::cout << "volume gradient max relative error: "
            << mover::detail::format_double(worst_vol) << " (tolerance "
            << mover::detail::format_double(vol_tol) << ")\n";

  // End-to-end check at small dimensions.
  const int k = 3, b = 6, d = 6, d_in = 6;
  const auto ds = mover::generate_synthetic(2, k, b, d_in, 0.2, 0);
  auto encoders = mover::initial_encoders(ds, d, 0);
  const double tau = 0.2, lambda = 0.7;
  const int negatives = 4;

  std::vector<int> modalities = {0, 1, 2};
  const auto embed_all = [&](const std::vector<mover::LinearEncoder>& enc) {
    std::vector<Eigen::MatrixXd> v(enc.size());
    for (std::size_t m = 0; m < enc.size(); ++m) v[m] = mover::encode(enc[m], ds.inputs[m]);
    return v;
  };

  const auto base = embed_all(encoders);
  std::vector<mover::TransportPlan> plans;
  for (int s = 1; s < k; ++s)
    plans.push_back(mover::sinkhorn(
        mover::cost_matrix(base[0], base[static_cast<std::size_t>(s)]), 0.1));
  const auto groups = mover::topk_groups(plans, 2);      // frozen
  const auto positives = mover::hard_groups(plans);      // frozen

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
    mover::Rng neg_rng(555);  // same seed every call => frozen negatives
    const auto c = mover::contrastive_loss(positives, v, modalities,
                                           mover::GroupMeasure::volume, tau, negatives,
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
        mover::encode_backward(encoders[m], ds.inputs[m], emb_grads[m]);
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
  const double w_tol = 1e-4;
  std::cout << "weight gradient max relative error: "
            << mover::detail::format_double(worst_w) << " (tolerance "
            << mover::detail::format_double(w_tol) << ")\n";

  return (worst_vol < vol_tol && worst_w < w_tol) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal alignment trainer"};
  app.require_subcommand(1);

  Common train_c, eval_c, export_c, ablate_c, cross_c, grad_c;
  std::vector<std::uint64_t> ablate_seeds = {0, 1, 2};
  std::vector<std::uint64_t> cross_seeds = {0, 1, 2};

  train_c.attach(app.add_subcommand("train", "train encoders, write metrics + weights"));
  eval_c.attach(app.add_subcommand("eval", "recompute retrieval from saved weights"));
  export_c.attach(
      app.add_subcommand("export-embeddings", "write embeddings.csv from saved weights"));
  ablate_c.attach(app.add_subcommand("ablate", "run the four-variant comparison"));
  ablate_c.sub->add_option("--seeds", ablate_seeds, "seeds for the comparison")->delimiter(',');
  cross_c.attach(app.add_subcommand("crossmodal", "restricted-pair generalization run"));
  cross_c.sub->add_option("--seeds", cross_seeds, "seeds for the comparison")->delimiter(',');
  grad_c.attach(app.add_subcommand("gradcheck", "finite-difference audit of the gradients"));

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_c.sub->parsed()) return run_train(train_c);
    if (eval_c.sub->parsed()) return run_eval(eval_c);
    if (export_c.sub->parsed()) return run_export(export_c);
    if (ablate_c.sub->parsed()) return run_ablate(ablate_c, ablate_seeds);
    if (cross_c.sub->parsed()) return run_crossmodal(cross_c, cross_seeds);
    if (grad_c.sub->parsed()) return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
