#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adc/common.hpp"
#include "adc/matrix.hpp"

namespace adc {

// Shared ReLU MLP over the concatenated user input, read out per domain
// through one dense head matrix W (s x p*d). Hidden layers all have width s.
// Item vectors live here as trainable copies of the MF initialization.
struct NetworkParams {
  int p = 0;  // domains
  int d = 0;  // latent dim per domain
  int h = 0;  // shared hidden layers
  int s = 0;  // hidden width

  std::vector<Mat> layer_w;                  // h matrices: (p*d or s) x s
  std::vector<std::vector<double>> layer_b;  // h bias vectors, size s
  Mat head_w;                                // s x p*d
  std::vector<double> head_b;                // p*d
  std::vector<Mat> item_factors;             // per domain: m_k x d

  std::uint64_t revision = 0;

  int input_dim() const { return p * d; }
  int head_dim() const { return p * d; }

  bool finite() const {
    for (const auto& m : layer_w)
      if (!m.finite()) return false;
    for (const auto& b : layer_b)
      if (!all_finite(b)) return false;
    if (!head_w.finite() || !all_finite(head_b)) return false;
    for (const auto& m : item_factors)
      if (!m.finite()) return false;
    return true;
  }
};

inline NetworkParams init_network(int p, int d, int h, int hidden_width,
                                  std::vector<Mat> item_factors, Rng& rng) {
  if (p < 1 || d < 1 || h < 1) throw ConfigError("init_network: p, d, h must be >= 1");
  NetworkParams net;
  net.p = p;
  net.d = d;
  net.h = h;
  net.s = hidden_width > 0 ? hidden_width : p * d;
  net.item_factors = std::move(item_factors);

  auto glorot = [&rng](Mat& m) {
    double limit = std::sqrt(6.0 / (m.rows + m.cols));
    for (auto& x : m.a) x = rng.uniform(-limit, limit);
  };

  int in = net.input_dim();
  for (int l = 0; l < h; ++l) {
    Mat w(l == 0 ? in : net.s, net.s);
    glorot(w);
    net.layer_w.push_back(std::move(w));
    net.layer_b.emplace_back(net.s, 0.0);
  }
  net.head_w = Mat(net.s, net.head_dim());
  glorot(net.head_w);
  net.head_b.assign(net.head_dim(), 0.0);
  return net;
}

struct ForwardCache {
  std::uint64_t params_revision = 0;
  int batch = 0;
  Mat input;              // B x p*d
  std::vector<Mat> pre;   // per layer, B x s (pre-activation)
  std::vector<Mat> post;  // per layer, B x s (after ReLU)
  Mat heads;              // B x p*d, affine readout

  // Domain k's head output for batch row b.
  const double* head(int b, int k, int d) const { return heads.row(b) + k * d; }
};

inline ForwardCache forward(const NetworkParams& net, const Mat& batch) {
  if (batch.cols != net.input_dim())
    throw std::invalid_argument("forward: batch width != p*d");
  ForwardCache cache;
  cache.params_revision = net.revision;
  cache.batch = batch.rows;
  cache.input = batch;

  const Mat* x = &cache.input;
  for (int l = 0; l < net.h; ++l) {
    Mat pre = matmul(*x, net.layer_w[l]);
    const auto& b = net.layer_b[l];
    for (int i = 0; i < pre.rows; ++i) {
      double* row = pre.row(i);
      for (int j = 0; j < pre.cols; ++j) row[j] += b[j];
    }
    Mat post = pre;
    for (auto& v : post.a)
      if (v < 0.0) v = 0.0;
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(std::move(post));
    x = &cache.post.back();
  }

  cache.heads = matmul(*x, net.head_w);
  for (int i = 0; i < cache.heads.rows; ++i) {
    double* row = cache.heads.row(i);
    for (int j = 0; j < cache.heads.cols; ++j) row[j] += net.head_b[j];
  }
  return cache;
}

struct GradientSet {
  std::vector<Mat> layer_w;
  std::vector<std::vector<double>> layer_b;
  Mat head_w;
  std::vector<double> head_b;
  std::vector<Mat> head_w_per_domain;  // g_W^(k): full-size, zero outside block k
  std::vector<Mat> item_factors;       // filled by the loss glue, not backward
};

inline GradientSet zero_gradients(const NetworkParams& net) {
  GradientSet g;
  for (const auto& w : net.layer_w) g.layer_w.emplace_back(w.rows, w.cols);
  for (const auto& b : net.layer_b) g.layer_b.emplace_back(b.size(), 0.0);
  g.head_w = Mat(net.head_w.rows, net.head_w.cols);
  g.head_b.assign(net.head_b.size(), 0.0);
  g.head_w_per_domain.assign(net.p, Mat(net.head_w.rows, net.head_w.cols));
  for (const auto& v : net.item_factors) g.item_factors.emplace_back(v.rows, v.cols);
  return g;
}

// Exact reverse pass. head_grads[k] is the cotangent on domain k's head
// slice; g_W^(k) is what flows into W through that slice alone, so it is
// nonzero only in columns [k*d, (k+1)*d) and the blocks sum to the full
// head gradient.
inline GradientSet backward(const NetworkParams& net, const ForwardCache& cache,
                            const std::vector<Mat>& head_grads) {
  if (cache.params_revision != net.revision)
    throw std::invalid_argument("backward: stale cache (params changed since forward)");
  if (static_cast<int>(head_grads.size()) != net.p)
    throw std::invalid_argument("backward: need one head-grad matrix per domain");
  for (const auto& hg : head_grads)
    if (hg.rows != cache.batch || hg.cols != net.d)
      throw std::invalid_argument("backward: head grad shape mismatch");

  GradientSet g = zero_gradients(net);
  const Mat& last = net.h > 0 ? cache.post.back() : cache.input;

  Mat dz(cache.batch, net.head_dim());
  for (int k = 0; k < net.p; ++k) {
    const Mat& hg = head_grads[k];
    for (int b = 0; b < cache.batch; ++b) {
      double* dzrow = dz.row(b) + k * net.d;
      const double* src = hg.row(b);
      for (int j = 0; j < net.d; ++j) dzrow[j] = src[j];
    }
  }

  // Per-domain head blocks: g_W^(k)[:, kd:(k+1)d] = last^T * dz[:, kd:(k+1)d]
  for (int k = 0; k < net.p; ++k) {
    Mat& gk = g.head_w_per_domain[k];
    for (int b = 0; b < cache.batch; ++b) {
      const double* lrow = last.row(b);
      const double* dzrow = dz.row(b) + k * net.d;
      for (int r = 0; r < net.s; ++r) {
        double v = lrow[r];
        if (v == 0.0) continue;
        double* grow = gk.row(r) + k * net.d;
        for (int j = 0; j < net.d; ++j) grow[j] += v * dzrow[j];
      }
    }
  }
  g.head_w = matmul_at(last, dz);
  g.head_b = col_sums(dz);

  Mat dpost = matmul_bt(dz, net.head_w);  // B x s
  for (int l = net.h - 1; l >= 0; --l) {
    Mat dpre = std::move(dpost);
    const Mat& pre = cache.pre[l];
    for (std::size_t i = 0; i < dpre.a.size(); ++i)
      if (pre.a[i] <= 0.0) dpre.a[i] = 0.0;
    const Mat& below = l == 0 ? cache.input : cache.post[l - 1];
    g.layer_w[l] = matmul_at(below, dpre);
    g.layer_b[l] = col_sums(dpre);
    if (l > 0) dpost = matmul_bt(dpre, net.layer_w[l]);
  }
  return g;
}

// Deep-stacking initialization: layer 1 and the head come from the
// one-hidden-layer pretrain; layers 2..h start near identity so the grown
// net initially computes the same function on the non-negative activations.
inline NetworkParams grow_from_pretrain(const NetworkParams& pretrained, int h_target,
                                        Rng& rng, double noise = 0.01) {
  if (pretrained.h != 1)
    throw std::invalid_argument("grow_from_pretrain: expected a one-hidden-layer net");
  if (h_target < 1) throw ConfigError("grow_from_pretrain: h_target must be >= 1");
  NetworkParams net = pretrained;
  net.revision = 0;
  if (h_target == 1) return net;
  if (net.layer_w[0].cols != net.s || net.head_w.rows != net.s)
    throw std::invalid_argument("grow_from_pretrain: width incompatibility");

  net.h = h_target;
  for (int l = 1; l < h_target; ++l) {
    Mat w(net.s, net.s);
    for (int i = 0; i < net.s; ++i)
      for (int j = 0; j < net.s; ++j)
        w(i, j) = (i == j ? 1.0 : 0.0) + (noise > 0.0 ? rng.uniform(-noise, noise) : 0.0);
    net.layer_w.push_back(std::move(w));
    net.layer_b.emplace_back(net.s, 0.0);
  }
  return net;
}

}  // namespace adc
