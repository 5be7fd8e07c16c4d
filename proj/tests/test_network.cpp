#include <catch2/catch_amalgamated.hpp>

#include "adc/network.hpp"
#include "support/test_util.hpp"

using namespace adc;

static NetworkParams small_net(int p, int d, int h, std::uint64_t seed, int items_per_domain = 4) {
  Rng rng(seed);
  std::vector<Mat> items;
  for (int k = 0; k < p; ++k) {
    Mat v(items_per_domain, d);
    for (auto& x : v.a) x = rng.gaussian() * 0.3;
    items.push_back(std::move(v));
  }
  NetworkParams net = init_network(p, d, h, 0, std::move(items), rng);
  return net;
}

static Mat random_batch(int rows, int cols, std::uint64_t seed) {
  Mat m(rows, cols);
  Rng rng(seed);
  for (auto& x : m.a) x = rng.gaussian();
  return m;
}

TEST_CASE("all-zero weights map everything to zero heads") {
  NetworkParams net = small_net(2, 3, 2, 1);
  for (auto& w : net.layer_w) w.zero();
  for (auto& b : net.layer_b) std::fill(b.begin(), b.end(), 0.0);
  net.head_w.zero();
  std::fill(net.head_b.begin(), net.head_b.end(), 0.0);
  Mat batch = random_batch(4, net.input_dim(), 2);
  ForwardCache cache = forward(net, batch);
  for (double x : cache.heads.a) REQUIRE(x == 0.0);
}

TEST_CASE("hand-computed forward pass, one hidden layer") {
  // widths 2 -> 2 -> 2, p=1, d=2, identity weights, zero bias
  NetworkParams net = small_net(1, 2, 1, 3);
  net.layer_w[0].zero();
  net.layer_w[0](0, 0) = 1.0;
  net.layer_w[0](1, 1) = 1.0;
  std::fill(net.layer_b[0].begin(), net.layer_b[0].end(), 0.0);
  net.head_w.zero();
  net.head_w(0, 0) = 1.0;
  net.head_w(1, 1) = 1.0;
  std::fill(net.head_b.begin(), net.head_b.end(), 0.0);

  Mat batch(1, 2);
  batch(0, 0) = 0.5;
  batch(0, 1) = 2.0;  // non-negative input passes ReLU unchanged
  ForwardCache cache = forward(net, batch);
  REQUIRE(cache.heads(0, 0) == 0.5);
  REQUIRE(cache.heads(0, 1) == 2.0);

  // negative input is clipped before the head
  batch(0, 0) = -1.0;
  cache = forward(net, batch);
  REQUIRE(cache.heads(0, 0) == 0.0);
  REQUIRE(cache.heads(0, 1) == 2.0);
}

TEST_CASE("identical rows produce identical head rows") {
  NetworkParams net = small_net(2, 2, 2, 4);
  Mat batch(2, net.input_dim());
  Rng rng(5);
  for (int j = 0; j < batch.cols; ++j) {
    double v = rng.gaussian();
    batch(0, j) = v;
    batch(1, j) = v;
  }
  ForwardCache cache = forward(net, batch);
  for (int j = 0; j < cache.heads.cols; ++j)
    REQUIRE(cache.heads(0, j) == cache.heads(1, j));
}

TEST_CASE("forward rejects a wrong batch width") {
  NetworkParams net = small_net(2, 2, 1, 6);
  Mat bad(1, 3);
  REQUIRE_THROWS_AS(forward(net, bad), std::invalid_argument);
}

TEST_CASE("zero cotangent gives zero gradients") {
  NetworkParams net = small_net(2, 2, 2, 7);
  Mat batch = random_batch(3, net.input_dim(), 8);
  ForwardCache cache = forward(net, batch);
  std::vector<Mat> hg(2, Mat(3, 2));
  GradientSet g = backward(net, cache, hg);
  for (const auto& w : g.layer_w)
    for (double x : w.a) REQUIRE(x == 0.0);
  for (double x : g.head_w.a) REQUIRE(x == 0.0);
  for (double x : g.head_b) REQUIRE(x == 0.0);
}

TEST_CASE("backward rejects a stale cache") {
  NetworkParams net = small_net(2, 2, 1, 9);
  Mat batch = random_batch(2, net.input_dim(), 10);
  ForwardCache cache = forward(net, batch);
  net.revision++;  // params changed since the forward pass
  std::vector<Mat> hg(2, Mat(2, 2));
  REQUIRE_THROWS_AS(backward(net, cache, hg), std::invalid_argument);
}

// scalar probe: f(params) = sum_k <head_grads[k], heads_k(params)>
static double probe(const NetworkParams& net, const Mat& batch,
                    const std::vector<Mat>& head_grads) {
  ForwardCache cache = forward(net, batch);
  double s = 0.0;
  for (int k = 0; k < net.p; ++k)
    for (int b = 0; b < batch.rows; ++b) {
      const double* z = cache.head(b, k, net.d);
      const double* hg = head_grads[k].row(b);
      for (int c = 0; c < net.d; ++c) s += z[c] * hg[c];
    }
  return s;
}

TEST_CASE("analytic gradients match central finite differences") {
  // random net, widths 6 -> 5 -> 4 heads... realized as p=2, d=2 with
  // hidden width 5 via explicit construction
  Rng rng(11);
  std::vector<Mat> items;
  for (int k = 0; k < 2; ++k) {
    Mat v(3, 2);
    for (auto& x : v.a) x = rng.gaussian();
    items.push_back(std::move(v));
  }
  NetworkParams net = init_network(2, 2, 2, 5, std::move(items), rng);
  REQUIRE(net.s == 5);

  Mat batch = random_batch(4, net.input_dim(), 12);
  std::vector<Mat> head_grads;
  for (int k = 0; k < 2; ++k) head_grads.push_back(random_batch(4, 2, 13 + k));

  ForwardCache cache = forward(net, batch);
  GradientSet g = backward(net, cache, head_grads);

  const double eps = 1e-5;
  auto f = [&] { return probe(net, batch, head_grads); };
  auto check = [&](double& param, double analytic) {
    double fd = testutil::central_diff(f, param, eps);
    REQUIRE(testutil::close_rel(analytic, fd, 1e-4, 1e-7));
  };
  for (int l = 0; l < net.h; ++l) {
    for (std::size_t i = 0; i < net.layer_w[l].a.size(); ++i)
      check(net.layer_w[l].a[i], g.layer_w[l].a[i]);
    for (std::size_t i = 0; i < net.layer_b[l].size(); ++i)
      check(net.layer_b[l][i], g.layer_b[l][i]);
  }
  for (std::size_t i = 0; i < net.head_w.a.size(); ++i) check(net.head_w.a[i], g.head_w.a[i]);
  for (std::size_t i = 0; i < net.head_b.size(); ++i) check(net.head_b[i], g.head_b[i]);
}

TEST_CASE("full-network gradient check across seeds") {
  for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
    NetworkParams net = small_net(2, 2, 2, seed);
    Mat batch = random_batch(3, net.input_dim(), seed * 7);
    std::vector<Mat> head_grads;
    for (int k = 0; k < 2; ++k) head_grads.push_back(random_batch(3, 2, seed * 11 + k));
    ForwardCache cache = forward(net, batch);
    GradientSet g = backward(net, cache, head_grads);
    auto f = [&] { return probe(net, batch, head_grads); };
    for (int l = 0; l < net.h; ++l)
      for (std::size_t i = 0; i < net.layer_w[l].a.size(); ++i) {
        double fd = testutil::central_diff(f, net.layer_w[l].a[i], 1e-5);
        REQUIRE(testutil::close_rel(g.layer_w[l].a[i], fd, 1e-4, 1e-7));
      }
    for (std::size_t i = 0; i < net.head_w.a.size(); ++i) {
      double fd = testutil::central_diff(f, net.head_w.a[i], 1e-5);
      REQUIRE(testutil::close_rel(g.head_w.a[i], fd, 1e-4, 1e-7));
    }
  }
}

TEST_CASE("per-domain head gradients live in their column block and sum to the total") {
  NetworkParams net = small_net(3, 2, 2, 31);
  Mat batch = random_batch(5, net.input_dim(), 32);
  std::vector<Mat> head_grads;
  for (int k = 0; k < 3; ++k) head_grads.push_back(random_batch(5, 2, 33 + k));
  ForwardCache cache = forward(net, batch);
  GradientSet g = backward(net, cache, head_grads);

  Mat sum(net.head_w.rows, net.head_w.cols);
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < net.s; ++r)
      for (int c = 0; c < net.head_dim(); ++c) {
        bool in_block = c >= k * net.d && c < (k + 1) * net.d;
        if (!in_block) REQUIRE(g.head_w_per_domain[k](r, c) == 0.0);
      }
    axpy(sum, 1.0, g.head_w_per_domain[k]);
  }
  for (std::size_t i = 0; i < sum.a.size(); ++i)
    REQUIRE_THAT(sum.a[i], Catch::Matchers::WithinAbs(g.head_w.a[i], 1e-12));
}

TEST_CASE("summed per-domain cotangents equal one combined backward pass") {
  NetworkParams net = small_net(2, 3, 1, 41);
  Mat batch = random_batch(4, net.input_dim(), 42);
  std::vector<Mat> hg;
  for (int k = 0; k < 2; ++k) hg.push_back(random_batch(4, 3, 43 + k));
  ForwardCache cache = forward(net, batch);
  GradientSet all = backward(net, cache, hg);

  // one domain at a time, others zeroed
  GradientSet acc = zero_gradients(net);
  for (int k = 0; k < 2; ++k) {
    std::vector<Mat> solo(2, Mat(4, 3));
    solo[k] = hg[k];
    GradientSet gk = backward(net, cache, solo);
    for (std::size_t l = 0; l < acc.layer_w.size(); ++l) axpy(acc.layer_w[l], 1.0, gk.layer_w[l]);
    axpy(acc.head_w, 1.0, gk.head_w);
  }
  for (std::size_t i = 0; i < acc.head_w.a.size(); ++i)
    REQUIRE_THAT(acc.head_w.a[i], Catch::Matchers::WithinAbs(all.head_w.a[i], 1e-12));
  for (std::size_t l = 0; l < acc.layer_w.size(); ++l)
    for (std::size_t i = 0; i < acc.layer_w[l].a.size(); ++i)
      REQUIRE_THAT(acc.layer_w[l].a[i], Catch::Matchers::WithinAbs(all.layer_w[l].a[i], 1e-12));
}

TEST_CASE("forward and backward are pure functions of their inputs") {
  NetworkParams net = small_net(2, 2, 2, 51);
  Mat batch = random_batch(3, net.input_dim(), 52);
  std::vector<Mat> hg;
  for (int k = 0; k < 2; ++k) hg.push_back(random_batch(3, 2, 53 + k));
  ForwardCache c1 = forward(net, batch);
  ForwardCache c2 = forward(net, batch);
  REQUIRE(c1.heads.a == c2.heads.a);
  GradientSet g1 = backward(net, c1, hg);
  GradientSet g2 = backward(net, c2, hg);
  REQUIRE(g1.head_w.a == g2.head_w.a);
  REQUIRE(g1.layer_w[0].a == g2.layer_w[0].a);
}

TEST_CASE("grow to the same depth copies the net") {
  NetworkParams net = small_net(2, 2, 1, 61);
  Rng rng(62);
  NetworkParams grown = grow_from_pretrain(net, 1, rng);
  REQUIRE(grown.h == 1);
  REQUIRE(grown.layer_w[0].a == net.layer_w[0].a);
  REQUIRE(grown.head_w.a == net.head_w.a);
}

TEST_CASE("noise-free growth preserves the function") {
  NetworkParams net = small_net(2, 2, 1, 63);
  Rng rng(64);
  NetworkParams grown = grow_from_pretrain(net, 3, rng, 0.0);
  REQUIRE(grown.h == 3);
  REQUIRE(grown.layer_w.size() == 3);
  Mat batch = random_batch(4, net.input_dim(), 65);
  ForwardCache a = forward(net, batch);
  ForwardCache b = forward(grown, batch);
  for (std::size_t i = 0; i < a.heads.a.size(); ++i)
    REQUIRE_THAT(b.heads.a[i], Catch::Matchers::WithinAbs(a.heads.a[i], 1e-12));
}

TEST_CASE("grow only accepts one-hidden-layer inputs") {
  NetworkParams net = small_net(2, 2, 2, 66);
  Rng rng(67);
  REQUIRE_THROWS_AS(grow_from_pretrain(net, 3, rng), std::invalid_argument);
}

TEST_CASE("grown nets have exactly the requested depth") {
  NetworkParams net = small_net(2, 3, 1, 68);
  Rng rng(69);
  NetworkParams grown = grow_from_pretrain(net, 4, rng);
  REQUIRE(grown.h == 4);
  REQUIRE(grown.layer_w.size() == 4);
  REQUIRE(grown.layer_b.size() == 4);
  for (int l = 1; l < 4; ++l) {
    REQUIRE(grown.layer_w[l].rows == grown.s);
    REQUIRE(grown.layer_w[l].cols == grown.s);
  }
}
