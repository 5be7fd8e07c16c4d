#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "adc/common.hpp"
#include "adc/dataset.hpp"

namespace adc {

// All candidate items sorted by score descending, ties broken by ascending
// item index; excluded (train-observed) items never appear.
inline std::vector<int> rank_items(const std::vector<double>& scores,
                                   const std::unordered_set<int>& exclude) {
  std::vector<int> order;
  order.reserve(scores.size());
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!exclude.count(i)) order.push_back(i);
  std::sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

inline double recall_at(const std::vector<int>& ranked, const std::set<int>& relevant, int n) {
  if (relevant.empty()) throw std::invalid_argument("recall_at: empty relevant set");
  int hits = 0;
  int top = std::min<int>(n, static_cast<int>(ranked.size()));
  for (int j = 0; j < top; ++j)
    if (relevant.count(ranked[j])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

// DCG@N = sum_j (2^rel_j - 1) / log2(j+1) with binary relevance; the ideal
// ordering packs min(|relevant|, N) relevant items at the top.
inline double ndcg_at(const std::vector<int>& ranked, const std::set<int>& relevant, int n) {
  if (relevant.empty()) throw std::invalid_argument("ndcg_at: empty relevant set");
  double dcg = 0.0;
  int top = std::min<int>(n, static_cast<int>(ranked.size()));
  for (int j = 1; j <= top; ++j)
    if (relevant.count(ranked[j - 1])) dcg += 1.0 / std::log2(static_cast<double>(j) + 1.0);
  double idcg = 0.0;
  int ideal = std::min<int>(n, static_cast<int>(relevant.size()));
  for (int j = 1; j <= ideal; ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 1.0);
  return dcg / idcg;
}

// Scores for every item of the evaluated domain, indexed by local user.
using Scorer = std::function<std::vector<double>(int local_user)>;

struct EvalResult {
  std::vector<int> cutoffs;
  std::map<int, double> recall;  // cutoff -> mean over users
  std::map<int, double> ndcg;
  int n_users_evaluated = 0;
};

inline EvalResult evaluate_model(const Scorer& scorer, const RelevanceSet& relevance,
                                 const std::vector<int>& cutoffs) {
  EvalResult res;
  res.cutoffs = cutoffs;
  for (int n : cutoffs) {
    res.recall[n] = 0.0;
    res.ndcg[n] = 0.0;
  }
  auto users = relevance.evaluable_users();
  for (int u : users) {
    std::vector<double> scores = scorer(u);
    std::unordered_set<int> exclude;
    auto obs = relevance.observed_train.find(u);
    if (obs != relevance.observed_train.end())
      exclude.insert(obs->second.begin(), obs->second.end());
    auto ranked = rank_items(scores, exclude);
    const auto& rel = relevance.relevant.at(u);
    for (int n : cutoffs) {
      res.recall[n] += recall_at(ranked, rel, n);
      res.ndcg[n] += ndcg_at(ranked, rel, n);
    }
  }
  res.n_users_evaluated = static_cast<int>(users.size());
  if (!users.empty()) {
    for (int n : cutoffs) {
      res.recall[n] /= res.n_users_evaluated;
      res.ndcg[n] /= res.n_users_evaluated;
    }
  }
  return res;
}

struct RunRecord {
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
  EvalResult metrics;
};

struct RankingReport {
  std::vector<int> cutoffs;
  std::map<int, double> recall;         // mean over runs
  std::map<int, double> ndcg;
  std::map<int, double> recall_stderr;  // stderr over runs (0 for one run)
  std::map<int, double> ndcg_stderr;
  std::vector<RunRecord> runs;
};

inline std::vector<int> default_cutoffs() { return {5, 10, 15, 20}; }

// Mean over users per run, then mean (and stderr) over runs.
inline RankingReport aggregate_runs(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  RankingReport rep;
  rep.cutoffs = runs.front().metrics.cutoffs;
  rep.runs = runs;
  const double nr = static_cast<double>(runs.size());
  for (int n : rep.cutoffs) {
    double mr = 0.0, mn = 0.0;
    for (const auto& r : runs) {
      mr += r.metrics.recall.at(n);
      mn += r.metrics.ndcg.at(n);
    }
    mr /= nr;
    mn /= nr;
    rep.recall[n] = mr;
    rep.ndcg[n] = mn;
    double vr = 0.0, vn = 0.0;
    if (runs.size() > 1) {
      for (const auto& r : runs) {
        vr += (r.metrics.recall.at(n) - mr) * (r.metrics.recall.at(n) - mr);
        vn += (r.metrics.ndcg.at(n) - mn) * (r.metrics.ndcg.at(n) - mn);
      }
      vr = std::sqrt(vr / (nr - 1.0)) / std::sqrt(nr);
      vn = std::sqrt(vn / (nr - 1.0)) / std::sqrt(nr);
    }
    rep.recall_stderr[n] = vr;
    rep.ndcg_stderr[n] = vn;
  }
  return rep;
}

inline void write_report_table(std::ostream& out, const std::string& name,
                               const RankingReport& rep) {
  out << name << " (" << rep.runs.size() << " run" << (rep.runs.size() == 1 ? "" : "s");
  if (!rep.runs.empty()) out << ", " << rep.runs.front().metrics.n_users_evaluated << " users";
  out << ")\n";
  out << "  N      recall        ndcg\n";
  for (int n : rep.cutoffs) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-4d %9.4f   %9.4f\n", n, rep.recall.at(n),
                  rep.ndcg.at(n));
    out << buf;
  }
}

inline void write_report_rows(std::ostream& out, const std::string& name,
                              const RankingReport& rep) {
  for (int n : rep.cutoffs) {
    out << name << '\t' << n << "\trecall\t" << fmt_double(rep.recall.at(n)) << '\t'
        << fmt_double(rep.recall_stderr.at(n)) << '\n';
    out << name << '\t' << n << "\tndcg\t" << fmt_double(rep.ndcg.at(n)) << '\t'
        << fmt_double(rep.ndcg_stderr.at(n)) << '\n';
  }
}

}  // namespace adc
