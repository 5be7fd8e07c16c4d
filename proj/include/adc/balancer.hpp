#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "adc/common.hpp"
#include "adc/matrix.hpp"

namespace adc {

// Adaptive loss-weight state. Weights stay positive (clamped at w_min) and
// are renormalized to sum to p after every step, which keeps the gamma=0
// symmetric case pinned at w_k = 1.
struct BalancerState {
  std::vector<double> weights;
  std::vector<double> initial_losses;  // L_k(0) = log(p)
  double gamma = 0.0;
  double learn_rate = 0.025;
  long iteration = 0;
  double w_min = 1e-3;

  bool use_ema = false;
  double ema_decay = 0.9;
  std::vector<double> smoothed_losses;

  static BalancerState make(int p, double gamma, double learn_rate) {
    BalancerState st;
    st.weights.assign(p, 1.0);
    st.initial_losses.assign(p, std::log(static_cast<double>(p)));
    st.gamma = gamma;
    st.learn_rate = learn_rate;
    return st;
  }

  int domains() const { return static_cast<int>(weights.size()); }

  // Loss values the ratio computation sees; plain batch losses unless the
  // optional EMA is on.
  const std::vector<double>& observe_losses(const std::vector<double>& batch_losses) {
    if (!use_ema) return batch_losses;
    if (smoothed_losses.empty()) smoothed_losses = batch_losses;
    for (std::size_t k = 0; k < smoothed_losses.size(); ++k)
      smoothed_losses[k] =
          ema_decay * smoothed_losses[k] + (1.0 - ema_decay) * batch_losses[k];
    return smoothed_losses;
  }
};

struct GradNorms {
  std::vector<double> per_domain;  // G_W^(k)
  double mean = 0.0;               // G_hat
};

inline GradNorms grad_norms(const std::vector<Mat>& per_domain_w_grads) {
  GradNorms g;
  g.per_domain.reserve(per_domain_w_grads.size());
  for (std::size_t k = 0; k < per_domain_w_grads.size(); ++k) {
    double n = per_domain_w_grads[k].frobenius_norm();
    if (!std::isfinite(n))
      throw NumericalError("grad_norms: non-finite gradient in domain " + std::to_string(k));
    g.per_domain.push_back(n);
  }
  for (double n : g.per_domain) g.mean += n;
  if (!g.per_domain.empty()) g.mean /= static_cast<double>(g.per_domain.size());
  return g;
}

inline GradNorms grad_norms_from_values(const std::vector<double>& norms) {
  GradNorms g;
  g.per_domain = norms;
  for (std::size_t k = 0; k < norms.size(); ++k)
    if (!std::isfinite(norms[k]))
      throw NumericalError("grad_norms: non-finite gradient in domain " + std::to_string(k));
  for (double n : norms) g.mean += n;
  if (!norms.empty()) g.mean /= static_cast<double>(norms.size());
  return g;
}

struct LearningRatios {
  std::vector<double> loss_ratio;    // L~_k = L_k(t)/L_k(0)
  std::vector<double> inverse_rate;  // r_k = L~_k / mean(L~)
};

inline LearningRatios learning_ratios(const std::vector<double>& current_losses,
                                      const std::vector<double>& initial_losses) {
  if (current_losses.size() != initial_losses.size())
    throw std::invalid_argument("learning_ratios: length mismatch");
  LearningRatios lr;
  lr.loss_ratio.resize(current_losses.size());
  double mean = 0.0;
  for (std::size_t k = 0; k < current_losses.size(); ++k) {
    if (initial_losses[k] <= 0.0)
      throw NumericalError("learning_ratios: initial loss must be positive");
    lr.loss_ratio[k] = current_losses[k] / initial_losses[k];
    mean += lr.loss_ratio[k];
  }
  mean /= static_cast<double>(current_losses.size());
  lr.inverse_rate.resize(current_losses.size());
  for (std::size_t k = 0; k < current_losses.size(); ++k)
    lr.inverse_rate[k] = mean != 0.0 ? lr.loss_ratio[k] / mean : 1.0;
  return lr;
}

// target_k = G_hat * r_k^gamma
inline std::vector<double> target_norms(double g_hat, const std::vector<double>& inverse_rate,
                                        double gamma) {
  std::vector<double> t(inverse_rate.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = g_hat * std::pow(inverse_rate[k], gamma);
  return t;
}

struct BalanceSnapshot {
  std::vector<double> weighted_norms;  // G_W^(k)
  double avg_norm = 0.0;               // G_hat
  std::vector<double> loss_ratio;      // L~_k
  std::vector<double> inverse_rate;    // r_k
  std::vector<double> targets;
  std::vector<double> losses;  // L_k fed to the ratios
  double lgrad = 0.0;
};

inline BalanceSnapshot make_snapshot(const GradNorms& norms, const LearningRatios& ratios,
                                     const std::vector<double>& targets,
                                     const std::vector<double>& losses) {
  BalanceSnapshot s;
  s.weighted_norms = norms.per_domain;
  s.avg_norm = norms.mean;
  s.loss_ratio = ratios.loss_ratio;
  s.inverse_rate = ratios.inverse_rate;
  s.targets = targets;
  s.losses = losses;
  for (std::size_t k = 0; k < s.weighted_norms.size(); ++k)
    s.lgrad += std::abs(s.weighted_norms[k] - s.targets[k]);
  return s;
}

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// One gradient-descent step on L_grad = sum_k |G_W^(k) - target_k| with the
// targets treated as constants. Since G_W^(k) = w_k * |grad_W L_k|, the
// derivative is sign(G_W^(k) - target_k) * |grad_W L_k|. Weights are clamped
// and renormalized so they always sum to p.
inline void lgrad_and_weight_step(BalancerState& state, const BalanceSnapshot& snapshot,
                                  const std::vector<double>& unweighted_norms) {
  const int p = state.domains();
  if (static_cast<int>(snapshot.weighted_norms.size()) != p ||
      static_cast<int>(unweighted_norms.size()) != p)
    throw std::invalid_argument("lgrad_and_weight_step: size mismatch");
  for (double n : unweighted_norms)
    if (!std::isfinite(n)) throw NumericalError("lgrad_and_weight_step: non-finite norm");

  for (int k = 0; k < p; ++k) {
    double g = sign0(snapshot.weighted_norms[k] - snapshot.targets[k]) * unweighted_norms[k];
    state.weights[k] -= state.learn_rate * g;
  }
  // Renormalize to sum p while holding clamped weights at the floor, so both
  // invariants (sum == p, every w_k >= w_min) hold after every step.
  for (int pass = 0; pass <= p; ++pass) {
    double free_sum = 0.0;
    int clamped = 0;
    for (double& w : state.weights) {
      if (w <= state.w_min) {
        w = state.w_min;
        ++clamped;
      } else {
        free_sum += w;
      }
    }
    if (clamped == p) {
      for (double& w : state.weights) w = 1.0;  // degenerate collapse; reset
      break;
    }
    double target = static_cast<double>(p) - clamped * state.w_min;
    double scale = target / free_sum;
    bool new_clamp = false;
    for (double& w : state.weights) {
      if (w <= state.w_min) continue;
      w *= scale;
      if (w < state.w_min) new_clamp = true;
    }
    if (!new_clamp) break;
  }
  ++state.iteration;
}

// One telemetry row per balancer step: t, w_k, L_k, G_W^(k), targets, L_grad.
inline void write_telemetry_header(std::ostream& out, int p) {
  out << "t";
  for (int k = 0; k < p; ++k) out << "\tw_" << k;
  for (int k = 0; k < p; ++k) out << "\tL_" << k;
  for (int k = 0; k < p; ++k) out << "\tG_" << k;
  for (int k = 0; k < p; ++k) out << "\ttarget_" << k;
  out << "\tL_grad\n";
}

inline void write_telemetry_row(std::ostream& out, const BalancerState& state,
                                const BalanceSnapshot& snapshot) {
  out << state.iteration;
  for (double w : state.weights) out << '\t' << fmt_double(w);
  for (double l : snapshot.losses) out << '\t' << fmt_double(l);
  for (double g : snapshot.weighted_norms) out << '\t' << fmt_double(g);
  for (double t : snapshot.targets) out << '\t' << fmt_double(t);
  out << '\t' << fmt_double(snapshot.lgrad) << '\n';
}

}  // namespace adc
