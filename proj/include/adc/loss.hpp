#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "adc/common.hpp"
#include "adc/dataset.hpp"

namespace adc {

// Train-split positives and observed-item sets per (domain, local user);
// the only view of the data the sampler and trainer get to see.
struct TrainIndex {
  // [domain][local user] -> train item indices
  std::vector<std::vector<std::vector<int>>> positives;
  std::vector<std::vector<std::unordered_set<int>>> observed;
  std::vector<int> n_items;  // per domain

  static TrainIndex build(const std::vector<DomainDataset>& datasets,
                          const SplitAssignment& sp) {
    TrainIndex ix;
    ix.positives.resize(datasets.size());
    ix.observed.resize(datasets.size());
    ix.n_items.resize(datasets.size());
    for (const auto& ds : datasets) {
      auto& pos = ix.positives[ds.domain_id];
      auto& obs = ix.observed[ds.domain_id];
      pos.resize(ds.n_users);
      obs.resize(ds.n_users);
      ix.n_items[ds.domain_id] = ds.n_items;
      for (std::size_t i = 0; i < ds.triples.size(); ++i) {
        if (sp.tag(ds.domain_id, i) != SplitTag::Train) continue;
        const auto& t = ds.triples[i];
        pos[t.user].push_back(t.item);
        obs[t.user].insert(t.item);
      }
    }
    return ix;
  }

  bool has_positives(int domain, int local_user) const {
    return local_user >= 0 && !positives[domain][local_user].empty();
  }
};

struct BprTriple {
  int global_user = 0;
  int pos_item = 0;
  int neg_item = 0;
};

struct TripleBatch {
  std::vector<std::vector<BprTriple>> by_domain;
  int skipped_users = 0;  // (user, domain) pairs with no unobserved item left
};

// Uniform negatives per train positive; rejection sampling capped at m_k
// attempts with a scan fallback so a draw always terminates.
inline TripleBatch sample_triples(const TrainIndex& ix, const GlobalUserIndex& gx,
                                  const std::vector<int>& users_in_batch,
                                  int negatives_per_positive, std::uint64_t seed) {
  if (negatives_per_positive < 1)
    throw ConfigError("sample_triples: negatives_per_positive must be >= 1");
  const int p = static_cast<int>(ix.positives.size());
  TripleBatch batch;
  batch.by_domain.resize(p);
  Rng rng(seed);

  for (int g : users_in_batch) {
    for (int k = 0; k < p; ++k) {
      int u = gx.local_index[g][k];
      if (u < 0 || ix.positives[k][u].empty()) continue;
      const auto& obs = ix.observed[k][u];
      const int mk = ix.n_items[k];
      if (static_cast<int>(obs.size()) >= mk) {
        ++batch.skipped_users;  // every item observed; nothing to rank against
        continue;
      }
      for (int pos : ix.positives[k][u]) {
        for (int n = 0; n < negatives_per_positive; ++n) {
          int neg = -1;
          for (int attempt = 0; attempt < mk; ++attempt) {
            int cand = static_cast<int>(rng.below(static_cast<std::uint64_t>(mk)));
            if (!obs.count(cand)) {
              neg = cand;
              break;
            }
          }
          if (neg < 0) {
            int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(mk)));
            for (int off = 0; off < mk; ++off) {
              int cand = (start + off) % mk;
              if (!obs.count(cand)) {
                neg = cand;
                break;
              }
            }
          }
          batch.by_domain[k].push_back({g, pos, neg});
        }
      }
    }
  }
  return batch;
}

// -log sigma(x) via the overflow-safe softplus branch.
inline double neg_log_sigmoid(double x) {
  return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct BprResult {
  double value = 0.0;
  std::vector<double> grad_z;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

// value = -log sigma(z.v+ - z.v-) with exact analytic gradients.
inline BprResult bpr_loss(const std::vector<double>& z, const std::vector<double>& v_pos,
                          const std::vector<double>& v_neg) {
  const int d = static_cast<int>(z.size());
  double margin = dot(z.data(), v_pos.data(), d) - dot(z.data(), v_neg.data(), d);
  BprResult r;
  r.value = neg_log_sigmoid(margin);
  double coeff = sigmoid(margin) - 1.0;  // d(-log sigma(m))/dm
  r.grad_z.resize(d);
  r.grad_pos.resize(d);
  r.grad_neg.resize(d);
  for (int c = 0; c < d; ++c) {
    r.grad_z[c] = coeff * (v_pos[c] - v_neg[c]);
    r.grad_pos[c] = coeff * z[c];
    r.grad_neg[c] = -coeff * z[c];
  }
  return r;
}

struct UserRegResult {
  double value = 0.0;
  std::vector<std::vector<double>> grads;  // one per domain
};

// Anchor-k regularizer: lambda * sum_{q != k} |z_q - z_k|^2 with gradients
// to every involved head vector.
inline UserRegResult user_reg(const std::vector<std::vector<double>>& z_all, int anchor,
                              double lambda) {
  if (lambda < 0.0) throw ConfigError("user_reg: lambda must be >= 0");
  const int p = static_cast<int>(z_all.size());
  if (anchor < 0 || anchor >= p) throw std::invalid_argument("user_reg: bad anchor");
  const int d = static_cast<int>(z_all[anchor].size());
  UserRegResult r;
  r.grads.assign(p, std::vector<double>(d, 0.0));
  if (lambda == 0.0) return r;
  const auto& zk = z_all[anchor];
  for (int q = 0; q < p; ++q) {
    if (q == anchor) continue;
    const auto& zq = z_all[q];
    for (int c = 0; c < d; ++c) {
      double diff = zq[c] - zk[c];
      r.value += lambda * diff * diff;
      r.grads[q][c] += 2.0 * lambda * diff;
      r.grads[anchor][c] -= 2.0 * lambda * diff;
    }
  }
  return r;
}

inline double cross_loss(const std::vector<double>& losses, const std::vector<double>& weights) {
  if (losses.size() != weights.size())
    throw std::invalid_argument("cross_loss: losses/weights length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) s += weights[k] * losses[k];
  return s;
}

struct LossBreakdown {
  std::vector<double> domain_losses;  // L_k
  std::vector<double> regularizers;   // lambda part of each L_k
  std::vector<double> weights;        // snapshot of w_k
  double lambda = 0.0;
  double cross = 0.0;  // sum_k w_k * L_k
};

}  // namespace adc
