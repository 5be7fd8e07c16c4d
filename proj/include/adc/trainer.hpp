#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "adc/balancer.hpp"
#include "adc/common.hpp"
#include "adc/dataset.hpp"
#include "adc/factorization.hpp"
#include "adc/loss.hpp"
#include "adc/matrix.hpp"
#include "adc/metrics.hpp"
#include "adc/network.hpp"

namespace adc {

struct TrainConfig {
  int d = 100;
  int h = 2;
  double gamma = 2.0;
  double lambda = 0.01;
  int negatives_per_positive = 5;
  int batch_size = 256;
  double learn_rate = 0.005;
  double momentum = 0.9;
  double balancer_learn_rate = 0.025;
  int balance_every = 1;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 1;
  std::string reg_on = "heads";  // heads | inputs
  bool freeze_items = false;
  int hidden_width = 0;  // 0 -> p*d
  double pretrain_fraction = 0.2;
  double w_min = 1e-3;
  bool ema = false;
  double ema_decay = 0.9;

  int mf_epochs = 30;
  double mf_learn_rate = 0.01;
  double mf_reg = 1e-4;

  int baseline_epochs = 100;
  double baseline_learn_rate = 0.05;
  double baseline_reg = 0.0;

  int pretrain_epochs() const {
    return std::max(1, static_cast<int>(pretrain_fraction * max_epochs));
  }
};

inline std::vector<std::string> validate_config(const TrainConfig& c) {
  std::vector<std::string> errs;
  auto need = [&errs](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  need(c.d >= 1, "d must be >= 1");
  need(c.h >= 1, "h must be >= 1");
  need(c.gamma >= 0.0, "gamma must be >= 0");
  need(c.lambda >= 0.0, "lambda must be >= 0");
  need(c.negatives_per_positive >= 1, "negatives_per_positive must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.learn_rate > 0.0, "learn_rate must be > 0");
  need(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must be in [0,1)");
  need(c.balancer_learn_rate > 0.0, "balancer_learn_rate must be > 0");
  need(c.balance_every >= 1, "balance_every must be >= 1");
  need(c.max_epochs >= 1, "max_epochs must be >= 1");
  need(c.patience >= 0, "patience must be >= 0");
  need(c.reg_on == "heads" || c.reg_on == "inputs", "reg_on must be heads or inputs");
  need(c.hidden_width >= 0, "hidden_width must be >= 0");
  need(c.pretrain_fraction > 0.0 && c.pretrain_fraction <= 1.0,
       "pretrain_fraction must be in (0,1]");
  need(c.w_min > 0.0, "w_min must be > 0");
  need(c.ema_decay >= 0.0 && c.ema_decay < 1.0, "ema_decay must be in [0,1)");
  need(c.mf_epochs >= 1, "mf_epochs must be >= 1");
  need(c.mf_learn_rate > 0.0, "mf_learn_rate must be > 0");
  need(c.mf_reg >= 0.0, "mf_reg must be >= 0");
  need(c.baseline_epochs >= 0, "baseline_epochs must be >= 0");
  need(c.baseline_learn_rate > 0.0, "baseline_learn_rate must be > 0");
  need(c.baseline_reg >= 0.0, "baseline_reg must be >= 0");
  return errs;
}

// Everything the trainer needs about the data, assembled once.
struct ProblemData {
  std::vector<DomainDataset> domains;
  GlobalUserIndex gindex;
  SplitAssignment split;
  TrainIndex train_index;
  RelevanceSet val_relevance;
  RelevanceSet test_relevance;

  int target() const { return split.target_domain; }
  int p() const { return static_cast<int>(domains.size()); }
};

inline ProblemData build_problem(std::vector<DomainDataset> domains, int target,
                                 std::uint64_t seed) {
  ProblemData pd;
  pd.domains = std::move(domains);
  pd.gindex = align_users(pd.domains);
  pd.split = split(pd.domains, target, seed);
  pd.train_index = TrainIndex::build(pd.domains, pd.split);
  pd.val_relevance = label_relevance(pd.split, pd.domains, SplitTag::Validation);
  pd.test_relevance = label_relevance(pd.split, pd.domains, SplitTag::Test);
  return pd;
}

inline ProblemData build_problem(std::vector<DomainDataset> domains, SplitAssignment sp) {
  ProblemData pd;
  pd.domains = std::move(domains);
  pd.gindex = align_users(pd.domains);
  pd.split = std::move(sp);
  pd.train_index = TrainIndex::build(pd.domains, pd.split);
  pd.val_relevance = label_relevance(pd.split, pd.domains, SplitTag::Validation);
  pd.test_relevance = label_relevance(pd.split, pd.domains, SplitTag::Test);
  return pd;
}

inline std::vector<FactorModel> factorize_all(const ProblemData& pd, const TrainConfig& cfg) {
  std::vector<FactorModel> models;
  models.reserve(pd.domains.size());
  for (const auto& ds : pd.domains) {
    std::vector<Triple> train;
    for (std::size_t i = 0; i < ds.triples.size(); ++i)
      if (pd.split.tag(ds.domain_id, i) == SplitTag::Train) train.push_back(ds.triples[i]);
    FactorizeOptions opt;
    opt.d = cfg.d;
    opt.epochs = cfg.mf_epochs;
    opt.learn_rate = cfg.mf_learn_rate;
    opt.reg = cfg.mf_reg;
    opt.seed = derive_seed(cfg.seed, Stream::MfInit, static_cast<std::uint64_t>(ds.domain_id));
    models.push_back(factorize(train, ds.n_users, ds.n_items, opt));
  }
  return models;
}

// Concatenated input row for every global user (imputed where absent).
inline Mat build_all_inputs(const ProblemData& pd, const std::vector<FactorModel>& factors) {
  const int p = pd.p();
  const int d = factors.empty() ? 0 : factors[0].d;
  Mat inputs(pd.gindex.n_users(), p * d);
  for (int g = 0; g < pd.gindex.n_users(); ++g) {
    auto row = build_concat_input(g, factors, pd.gindex);
    std::copy(row.begin(), row.end(), inputs.row(g));
  }
  return inputs;
}

// One forward/backward over an assembled batch: loss breakdown, exact
// gradients of L_cross for every parameter, and the per-domain head-block
// norms the balancer consumes.
struct BatchCompute {
  LossBreakdown loss;
  GradientSet grads;
  std::vector<double> weighted_norms;    // |g_W^(k)|
  std::vector<double> unweighted_norms;  // |g_W^(k)| / w_k
  int total_triples = 0;
};

inline BatchCompute batch_loss_and_grads(const NetworkParams& net, const Mat& batch_inputs,
                                         const std::vector<int>& batch_users,
                                         const TripleBatch& triples,
                                         const std::vector<double>& weights, double lambda,
                                         const std::string& reg_on) {
  const int p = net.p;
  const int d = net.d;
  const int B = batch_inputs.rows;

  std::unordered_map<int, int> row_of;
  row_of.reserve(batch_users.size());
  for (int r = 0; r < static_cast<int>(batch_users.size()); ++r)
    row_of.emplace(batch_users[r], r);

  ForwardCache cache = forward(net, batch_inputs);

  BatchCompute out;
  out.loss.lambda = lambda;
  out.loss.weights = weights;
  out.loss.domain_losses.assign(p, 0.0);
  out.loss.regularizers.assign(p, 0.0);

  std::vector<Mat> head_grads;
  head_grads.reserve(p);
  for (int k = 0; k < p; ++k) head_grads.emplace_back(B, d);
  std::vector<Mat> item_grads_raw;
  item_grads_raw.reserve(p);
  for (int k = 0; k < p; ++k)
    item_grads_raw.emplace_back(net.item_factors[k].rows, net.item_factors[k].cols);

  std::vector<double> z(d), vp(d), vn(d);
  for (int k = 0; k < p; ++k) {
    const auto& tris = triples.by_domain[k];
    if (tris.empty()) continue;
    const double inv_t = 1.0 / static_cast<double>(tris.size());
    double bpr_sum = 0.0;
    Mat& hg = head_grads[k];
    Mat& ig = item_grads_raw[k];
    for (const auto& t : tris) {
      int r = row_of.at(t.global_user);
      const double* zrow = cache.head(r, k, d);
      std::copy(zrow, zrow + d, z.begin());
      const double* vpr = net.item_factors[k].row(t.pos_item);
      const double* vnr = net.item_factors[k].row(t.neg_item);
      std::copy(vpr, vpr + d, vp.begin());
      std::copy(vnr, vnr + d, vn.begin());
      BprResult br = bpr_loss(z, vp, vn);
      bpr_sum += br.value;
      double* hgr = hg.row(r);
      for (int c = 0; c < d; ++c) hgr[c] += inv_t * br.grad_z[c];
      double* igp = ig.row(t.pos_item);
      double* ign = ig.row(t.neg_item);
      for (int c = 0; c < d; ++c) {
        igp[c] += inv_t * br.grad_pos[c];
        ign[c] += inv_t * br.grad_neg[c];
      }
    }
    out.loss.domain_losses[k] = bpr_sum * inv_t;
    out.total_triples += static_cast<int>(tris.size());
  }

  // weight the BPR flows; the regularizer flows get their own w_k below
  for (int k = 0; k < p; ++k) {
    for (auto& v : head_grads[k].a) v *= weights[k];
    for (auto& v : item_grads_raw[k].a) v *= weights[k];
  }

  if (lambda > 0.0 && B > 0 && p > 1) {
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<std::vector<double>> z_all(p, std::vector<double>(d));
    for (int r = 0; r < B; ++r) {
      for (int k = 0; k < p; ++k) {
        const double* src = reg_on == "heads" ? cache.head(r, k, d) : batch_inputs.row(r) + k * d;
        std::copy(src, src + d, z_all[k].begin());
      }
      for (int k = 0; k < p; ++k) {
        UserRegResult rr = user_reg(z_all, k, lambda);
        out.loss.regularizers[k] += rr.value * inv_b;
        if (reg_on == "heads") {
          for (int q = 0; q < p; ++q) {
            double* hgr = head_grads[q].row(r);
            for (int c = 0; c < d; ++c) hgr[c] += weights[k] * inv_b * rr.grads[q][c];
          }
        }
        // reg_on == inputs: the inputs are fixed MF factors, value only
      }
    }
    for (int k = 0; k < p; ++k) out.loss.domain_losses[k] += out.loss.regularizers[k];
  }

  out.grads = backward(net, cache, head_grads);
  out.grads.item_factors = std::move(item_grads_raw);

  out.weighted_norms.resize(p);
  out.unweighted_norms.resize(p);
  for (int k = 0; k < p; ++k) {
    out.weighted_norms[k] = out.grads.head_w_per_domain[k].frobenius_norm();
    out.unweighted_norms[k] = weights[k] > 0.0 ? out.weighted_norms[k] / weights[k] : 0.0;
  }
  out.loss.cross = cross_loss(out.loss.domain_losses, weights);
  return out;
}

// SGD with momentum; velocities persist across batches and live in the
// checkpoint so resumed runs continue bit-identically.
struct SgdMomentum {
  std::vector<Mat> layer_w;
  std::vector<std::vector<double>> layer_b;
  Mat head_w;
  std::vector<double> head_b;
  std::vector<Mat> item_factors;

  static SgdMomentum make(const NetworkParams& net) {
    SgdMomentum o;
    for (const auto& w : net.layer_w) o.layer_w.emplace_back(w.rows, w.cols);
    for (const auto& b : net.layer_b) o.layer_b.emplace_back(b.size(), 0.0);
    o.head_w = Mat(net.head_w.rows, net.head_w.cols);
    o.head_b.assign(net.head_b.size(), 0.0);
    for (const auto& v : net.item_factors) o.item_factors.emplace_back(v.rows, v.cols);
    return o;
  }

  void step(NetworkParams& net, const GradientSet& g, double lr, double mu,
            bool freeze_items) {
    auto upd_mat = [lr, mu](Mat& param, Mat& vel, const Mat& grad) {
      for (std::size_t i = 0; i < param.a.size(); ++i) {
        vel.a[i] = mu * vel.a[i] + grad.a[i];
        param.a[i] -= lr * vel.a[i];
      }
    };
    auto upd_vec = [lr, mu](std::vector<double>& param, std::vector<double>& vel,
                            const std::vector<double>& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        vel[i] = mu * vel[i] + grad[i];
        param[i] -= lr * vel[i];
      }
    };
    for (std::size_t l = 0; l < net.layer_w.size(); ++l) {
      upd_mat(net.layer_w[l], layer_w[l], g.layer_w[l]);
      upd_vec(net.layer_b[l], layer_b[l], g.layer_b[l]);
    }
    upd_mat(net.head_w, head_w, g.head_w);
    upd_vec(net.head_b, head_b, g.head_b);
    if (!freeze_items)
      for (std::size_t k = 0; k < net.item_factors.size(); ++k)
        upd_mat(net.item_factors[k], item_factors[k], g.item_factors[k]);
    ++net.revision;
  }
};

struct EpochRow {
  int epoch = 0;
  std::vector<double> domain_losses;  // epoch mean of batch L_k
  double cross = 0.0;                 // epoch mean of batch L_cross
  double val_ndcg10 = 0.0;
  std::vector<double> weights;  // w_k at epoch end
  double wall_ms = 0.0;         // in-memory only; never persisted
};

struct TrainHistory {
  std::vector<EpochRow> rows;
};

inline void write_history_header(std::ostream& out, int p) {
  out << "epoch\tL_cross";
  for (int k = 0; k < p; ++k) out << "\tL_" << k;
  out << "\tval_ndcg10";
  for (int k = 0; k < p; ++k) out << "\tw_" << k;
  out << '\n';
}

inline void write_history_row(std::ostream& out, const EpochRow& r) {
  out << r.epoch << '\t' << fmt_double(r.cross);
  for (double l : r.domain_losses) out << '\t' << fmt_double(l);
  out << '\t' << fmt_double(r.val_ndcg10);
  for (double w : r.weights) out << '\t' << fmt_double(w);
  out << '\n';
}

inline void write_history(std::ostream& out, const TrainHistory& hist, int p) {
  write_history_header(out, p);
  for (const auto& r : hist.rows) write_history_row(out, r);
}

inline TrainHistory read_history(std::istream& in) {
  TrainHistory hist;
  std::string line;
  if (!std::getline(in, line)) return hist;
  int p = 0;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, '\t'))
      if (col.rfind("L_", 0) == 0 && col != "L_cross") ++p;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EpochRow r;
    r.domain_losses.resize(p);
    r.weights.resize(p);
    ss >> r.epoch >> r.cross;
    for (int k = 0; k < p; ++k) ss >> r.domain_losses[k];
    ss >> r.val_ndcg10;
    for (int k = 0; k < p; ++k) ss >> r.weights[k];
    if (!ss) throw DataError("malformed history row: " + line);
    hist.rows.push_back(std::move(r));
  }
  return hist;
}

// Scores every item of the evaluated domain with z_u . v_i, where z comes
// from one forward pass over the user's concatenated input.
class AdcScorer {
 public:
  AdcScorer(const NetworkParams& net, const Mat& all_inputs, const GlobalUserIndex& gx,
            const DomainDataset& domain)
      : net_(net), all_inputs_(all_inputs), gx_(gx), domain_(domain) {}

  std::vector<double> operator()(int local_user) const {
    int g = gx_.global_map.at(domain_.user_ids[local_user]);
    Mat one(1, all_inputs_.cols);
    std::copy(all_inputs_.row(g), all_inputs_.row(g) + all_inputs_.cols, one.row(0));
    ForwardCache cache = forward(net_, one);
    const double* z = cache.head(0, domain_.domain_id, net_.d);
    const Mat& v = net_.item_factors[domain_.domain_id];
    std::vector<double> scores(v.rows);
    for (int i = 0; i < v.rows; ++i) scores[i] = dot(z, v.row(i), net_.d);
    return scores;
  }

 private:
  const NetworkParams& net_;
  const Mat& all_inputs_;
  const GlobalUserIndex& gx_;
  const DomainDataset& domain_;
};

class BprScorer {
 public:
  explicit BprScorer(const FactorModel& model) : model_(model) {}
  std::vector<double> operator()(int local_user) const {
    std::vector<double> scores(model_.V.rows);
    for (int i = 0; i < model_.V.rows; ++i) scores[i] = model_.predict(local_user, i);
    return scores;
  }

 private:
  const FactorModel& model_;
};

inline double validation_ndcg10(const NetworkParams& net, const ProblemData& pd,
                                const Mat& all_inputs) {
  AdcScorer scorer(net, all_inputs, pd.gindex, pd.domains[pd.target()]);
  EvalResult res = evaluate_model(scorer, pd.val_relevance, {10});
  return res.n_users_evaluated > 0 ? res.ndcg.at(10) : 0.0;
}

// Full training state at an epoch boundary; what checkpoints persist.
struct TrainerState {
  NetworkParams net;
  SgdMomentum opt;
  BalancerState balancer;
  int epochs_done = 0;  // main-phase epochs completed
  double best_val = -1.0;
  int best_epoch = -1;
  int since_improve = 0;
  NetworkParams best_net;
  BalancerState best_balancer;
};

struct TrainResult {
  NetworkParams params;    // best-validation parameters
  BalancerState balancer;  // state at the best epoch
  TrainHistory history;
  int best_epoch = -1;
  double best_val = 0.0;
  int skipped_batches = 0;
  int sampler_warnings = 0;
  TrainerState last;  // state at stop, for checkpoint persistence
};

namespace detail {

struct EpochStats {
  std::vector<double> loss_sums;
  double cross_sum = 0.0;
  int batches = 0;
  int skipped = 0;
  int sampler_warnings = 0;
};

// One pass over the shuffled eligible users. `balancer` may be null
// (pretraining keeps the weights at their initial values).
inline EpochStats run_epoch(NetworkParams& net, SgdMomentum& opt, BalancerState* balancer,
                            const TrainConfig& cfg, const ProblemData& pd,
                            const Mat& all_inputs, const std::vector<int>& eligible,
                            int epoch_global, std::ostream* telemetry) {
  const int p = net.p;
  EpochStats stats;
  stats.loss_sums.assign(p, 0.0);

  std::vector<int> order = eligible;
  Rng shuffle_rng(derive_seed(cfg.seed, Stream::BatchOrder,
                              static_cast<std::uint64_t>(epoch_global)));
  shuffle_rng.shuffle(order);

  const int bs = cfg.batch_size;
  const int n_batches = static_cast<int>((order.size() + bs - 1) / bs);
  std::vector<double> unit_weights(p, 1.0);

  for (int b = 0; b < n_batches; ++b) {
    const int lo = b * bs;
    const int hi = std::min<int>(lo + bs, static_cast<int>(order.size()));
    std::vector<int> users(order.begin() + lo, order.begin() + hi);

    TripleBatch triples = sample_triples(
        pd.train_index, pd.gindex, users, cfg.negatives_per_positive,
        derive_seed(cfg.seed, Stream::Negatives, static_cast<std::uint64_t>(epoch_global),
                    static_cast<std::uint64_t>(b)));
    stats.sampler_warnings += triples.skipped_users;

    Mat batch_inputs(static_cast<int>(users.size()), all_inputs.cols);
    for (int r = 0; r < static_cast<int>(users.size()); ++r)
      std::copy(all_inputs.row(users[r]), all_inputs.row(users[r]) + all_inputs.cols,
                batch_inputs.row(r));

    int total = 0;
    for (const auto& tk : triples.by_domain) total += static_cast<int>(tk.size());
    if (total == 0) {
      ++stats.skipped;
      continue;
    }

    const std::vector<double>& w = balancer ? balancer->weights : unit_weights;
    BatchCompute bc =
        batch_loss_and_grads(net, batch_inputs, users, triples, w, cfg.lambda, cfg.reg_on);
    if (!std::isfinite(bc.loss.cross))
      throw NumericalError("training diverged at epoch " + std::to_string(epoch_global) +
                           " batch " + std::to_string(b) + "; reduce learn_rate");

    opt.step(net, bc.grads, cfg.learn_rate, cfg.momentum, cfg.freeze_items);

    if (balancer && (b % cfg.balance_every == 0)) {
      const std::vector<double>& losses = balancer->observe_losses(bc.loss.domain_losses);
      LearningRatios ratios = learning_ratios(losses, balancer->initial_losses);
      GradNorms norms = grad_norms_from_values(bc.weighted_norms);
      std::vector<double> targets =
          target_norms(norms.mean, ratios.inverse_rate, balancer->gamma);
      BalanceSnapshot snap = make_snapshot(norms, ratios, targets, losses);
      lgrad_and_weight_step(*balancer, snap, bc.unweighted_norms);
      if (telemetry) write_telemetry_row(*telemetry, *balancer, snap);
    }

    for (int k = 0; k < p; ++k) stats.loss_sums[k] += bc.loss.domain_losses[k];
    stats.cross_sum += bc.loss.cross;
    ++stats.batches;
  }
  return stats;
}

inline std::vector<int> eligible_users(const ProblemData& pd) {
  std::vector<int> out;
  for (int g = 0; g < pd.gindex.n_users(); ++g) {
    for (int k = 0; k < pd.p(); ++k) {
      int u = pd.gindex.local_index[g][k];
      if (u >= 0 && pd.train_index.has_positives(k, u)) {
        out.push_back(g);
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

// One-hidden-layer warmup with the loss weights pinned at 1; the result
// seeds grow_from_pretrain.
inline NetworkParams pretrain(const TrainConfig& cfg, const ProblemData& pd,
                              const std::vector<FactorModel>& factors, const Mat& all_inputs,
                              SgdMomentum* opt_out = nullptr) {
  std::vector<Mat> item_copies;
  item_copies.reserve(factors.size());
  for (const auto& f : factors) item_copies.push_back(f.V);
  Rng init_rng(derive_seed(cfg.seed, Stream::NetInit));
  NetworkParams net =
      init_network(pd.p(), cfg.d, 1, cfg.hidden_width, std::move(item_copies), init_rng);

  SgdMomentum opt = SgdMomentum::make(net);
  std::vector<int> eligible = detail::eligible_users(pd);
  const int epochs = cfg.pretrain_epochs();
  for (int e = 0; e < epochs; ++e)
    detail::run_epoch(net, opt, nullptr, cfg, pd, all_inputs, eligible, e, nullptr);
  if (!net.finite()) throw NumericalError("pretrain produced non-finite parameters");
  if (opt_out) *opt_out = std::move(opt);
  return net;
}

// Invoked after every completed epoch; lets the CLI append the history row
// and checkpoint immediately so interrupted runs can resume.
using EpochCallback = std::function<void(const EpochRow&, const TrainerState&)>;

// The full procedure: MF-initialized inputs -> one-layer pretrain -> grow to
// h layers -> mini-batch joint optimization with interleaved balancer steps
// and early stopping on validation NDCG@10.
inline TrainResult train(const TrainConfig& cfg, const ProblemData& pd,
                         const std::vector<FactorModel>& factors,
                         std::ostream* telemetry = nullptr,
                         const TrainerState* resume = nullptr,
                         const EpochCallback& on_epoch = {}) {
  {
    auto errs = validate_config(cfg);
    if (!errs.empty()) {
      std::string msg = "invalid config:";
      for (const auto& e : errs) msg += "\n  - " + e;
      throw ConfigError(msg);
    }
  }
  if (pd.p() < 2) throw DataError("train: need at least 2 domains");

  Mat all_inputs = build_all_inputs(pd, factors);
  std::vector<int> eligible = detail::eligible_users(pd);
  if (eligible.empty()) throw DataError("train: no user has any train rating");

  TrainerState st;
  if (resume) {
    st = *resume;
  } else {
    NetworkParams pre = pretrain(cfg, pd, factors, all_inputs);
    Rng grow_rng(derive_seed(cfg.seed, Stream::Grow));
    st.net = grow_from_pretrain(pre, cfg.h, grow_rng);
    st.opt = SgdMomentum::make(st.net);
    st.balancer = BalancerState::make(pd.p(), cfg.gamma, cfg.balancer_learn_rate);
    st.balancer.w_min = cfg.w_min;
    st.balancer.use_ema = cfg.ema;
    st.balancer.ema_decay = cfg.ema_decay;
    st.best_net = st.net;
    st.best_balancer = st.balancer;
  }

  TrainResult res;
  res.best_epoch = st.best_epoch;
  res.best_val = st.best_val;

  const int pre_epochs = cfg.pretrain_epochs();
  for (int epoch = st.epochs_done; epoch < cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    detail::EpochStats stats =
        detail::run_epoch(st.net, st.opt, &st.balancer, cfg, pd, all_inputs, eligible,
                          pre_epochs + epoch, telemetry);
    res.skipped_batches += stats.skipped;
    res.sampler_warnings += stats.sampler_warnings;

    double val = validation_ndcg10(st.net, pd, all_inputs);

    EpochRow row;
    row.epoch = epoch;
    row.domain_losses.resize(pd.p());
    for (int k = 0; k < pd.p(); ++k)
      row.domain_losses[k] = stats.batches ? stats.loss_sums[k] / stats.batches : 0.0;
    row.cross = stats.batches ? stats.cross_sum / stats.batches : 0.0;
    row.val_ndcg10 = val;
    row.weights = st.balancer.weights;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    res.history.rows.push_back(row);

    st.epochs_done = epoch + 1;
    bool stop = false;
    if (val > st.best_val) {
      st.best_val = val;
      st.best_epoch = epoch;
      st.since_improve = 0;
      st.best_net = st.net;
      st.best_balancer = st.balancer;
    } else {
      ++st.since_improve;
      if (st.since_improve > cfg.patience) stop = true;
    }
    if (on_epoch) on_epoch(row, st);
    if (stop) break;
  }

  res.params = st.best_net;
  res.balancer = st.best_balancer;
  res.best_epoch = st.best_epoch;
  res.best_val = st.best_val;
  res.last = std::move(st);
  return res;
}

// Single-domain BPR-MF comparison arm; pure pairwise ranking SGD on the
// target domain's train split.
inline FactorModel train_bpr_baseline(const TrainConfig& cfg, const DomainDataset& target,
                                      const SplitAssignment& sp) {
  FactorModel m;
  m.d = cfg.d;
  m.U = Mat(target.n_users, cfg.d);
  m.V = Mat(target.n_items, cfg.d);
  Rng init(derive_seed(cfg.seed, Stream::Baseline));
  for (auto& x : m.U.a) x = init.uniform(-0.01, 0.01);
  for (auto& x : m.V.a) x = init.uniform(-0.01, 0.01);

  std::vector<std::pair<int, int>> pos_pairs;  // (user, item)
  std::vector<std::unordered_set<int>> observed(target.n_users);
  for (std::size_t i = 0; i < target.triples.size(); ++i) {
    if (sp.tag(target.domain_id, i) != SplitTag::Train) continue;
    const auto& t = target.triples[i];
    pos_pairs.emplace_back(t.user, t.item);
    observed[t.user].insert(t.item);
  }
  if (pos_pairs.empty()) return m;

  const int mk = target.n_items;
  const double lr = cfg.baseline_learn_rate;
  const double reg = cfg.baseline_reg;
  for (int epoch = 0; epoch < cfg.baseline_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, Stream::Baseline, static_cast<std::uint64_t>(epoch) + 1));
    std::vector<std::size_t> order(pos_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t idx : order) {
      auto [u, ip] = pos_pairs[idx];
      if (static_cast<int>(observed[u].size()) >= mk) continue;
      for (int n = 0; n < cfg.negatives_per_positive; ++n) {
        int in = -1;
        for (int attempt = 0; attempt < mk; ++attempt) {
          int cand = static_cast<int>(rng.below(static_cast<std::uint64_t>(mk)));
          if (!observed[u].count(cand)) {
            in = cand;
            break;
          }
        }
        if (in < 0) continue;
        double* uu = m.U.row(u);
        double* vp = m.V.row(ip);
        double* vn = m.V.row(in);
        double margin = dot(uu, vp, cfg.d) - dot(uu, vn, cfg.d);
        double coeff = sigmoid(margin) - 1.0;
        for (int c = 0; c < cfg.d; ++c) {
          double gu = coeff * (vp[c] - vn[c]) + 2.0 * reg * uu[c];
          double gp = coeff * uu[c] + 2.0 * reg * vp[c];
          double gn = -coeff * uu[c] + 2.0 * reg * vn[c];
          uu[c] -= lr * gu;
          vp[c] -= lr * gp;
          vn[c] -= lr * gn;
        }
      }
    }
    if (!m.U.finite() || !m.V.finite())
      throw NumericalError("bpr baseline diverged; reduce baseline_learn_rate");
  }
  return m;
}

}  // namespace adc
