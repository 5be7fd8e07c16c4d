#include <catch2/catch_amalgamated.hpp>

#include "adc/loss.hpp"
#include "support/test_util.hpp"

using namespace adc;

TEST_CASE("equal scores cost log 2") {
  std::vector<double> z = {1.0, 2.0, 3.0};
  std::vector<double> v = {0.5, -0.5, 0.25};
  BprResult r = bpr_loss(z, v, v);
  REQUIRE_THAT(r.value, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("a saturated margin costs nothing") {
  std::vector<double> z = {10.0};
  std::vector<double> vp = {5.0};
  std::vector<double> vn = {0.0};  // margin 50
  BprResult r = bpr_loss(z, vp, vn);
  REQUIRE(r.value < 1e-20);
  REQUIRE(std::isfinite(r.value));

  // and the mirrored margin costs about the margin itself
  BprResult flipped = bpr_loss(z, vn, vp);
  REQUIRE_THAT(flipped.value, Catch::Matchers::WithinAbs(50.0, 1e-9));
}

TEST_CASE("pairwise loss gradients match finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> z(3), vp(3), vn(3);
    for (auto& x : z) x = rng.gaussian();
    for (auto& x : vp) x = rng.gaussian();
    for (auto& x : vn) x = rng.gaussian();
    BprResult r = bpr_loss(z, vp, vn);
    auto f = [&] { return bpr_loss(z, vp, vn).value; };
    for (int c = 0; c < 3; ++c) {
      REQUIRE(testutil::close_rel(r.grad_z[c], testutil::central_diff(f, z[c], 1e-6), 1e-6,
                                  1e-10));
      REQUIRE(testutil::close_rel(r.grad_pos[c], testutil::central_diff(f, vp[c], 1e-6), 1e-6,
                                  1e-10));
      REQUIRE(testutil::close_rel(r.grad_neg[c], testutil::central_diff(f, vn[c], 1e-6), 1e-6,
                                  1e-10));
    }
  }
}

TEST_CASE("swapping positive and negative shifts the loss by the margin") {
  // exact identity: -log sigma(-m) = -log sigma(m) + m
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    double m = rng.gaussian() * 5.0;
    REQUIRE_THAT(neg_log_sigmoid(-m), Catch::Matchers::WithinAbs(neg_log_sigmoid(m) + m, 1e-9));
  }
}

TEST_CASE("pairwise loss is positive and finite everywhere") {
  for (double m : {-800.0, -50.0, 0.0, 50.0, 800.0}) {
    double v = neg_log_sigmoid(m);
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
  }
}

TEST_CASE("identical head vectors cost no regularization") {
  std::vector<std::vector<double>> z(3, std::vector<double>{0.3, -0.7});
  UserRegResult r = user_reg(z, 1, 0.5);
  REQUIRE(r.value == 0.0);
  for (const auto& g : r.grads)
    for (double x : g) REQUIRE(x == 0.0);
}

TEST_CASE("hand-expanded two-domain regularizer") {
  std::vector<std::vector<double>> z = {{1.0, 0.0}, {0.0, 1.0}};
  UserRegResult r = user_reg(z, 0, 1.0);
  REQUIRE_THAT(r.value, Catch::Matchers::WithinAbs(2.0, 1e-12));
  REQUIRE(r.grads[0] == std::vector<double>{2.0, -2.0});
  REQUIRE(r.grads[1] == std::vector<double>{-2.0, 2.0});
}

TEST_CASE("lambda zero disables the regularizer") {
  std::vector<std::vector<double>> z = {{5.0, 1.0}, {-3.0, 2.0}};
  UserRegResult r = user_reg(z, 0, 0.0);
  REQUIRE(r.value == 0.0);
}

TEST_CASE("regularizer gradients match finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> z(3, std::vector<double>(2));
    for (auto& v : z)
      for (auto& x : v) x = rng.gaussian();
    int anchor = trial % 3;
    double lambda = 0.01 + rng.uniform();
    UserRegResult r = user_reg(z, anchor, lambda);
    auto f = [&] { return user_reg(z, anchor, lambda).value; };
    for (int q = 0; q < 3; ++q)
      for (int c = 0; c < 2; ++c) {
        double fd = testutil::central_diff(f, z[q][c], 1e-6);
        REQUIRE(testutil::close_rel(r.grads[q][c], fd, 1e-5, 1e-10));
      }
  }
}

TEST_CASE("weighted sum of losses") {
  REQUIRE(cross_loss({0.5, 0.7}, {1.0, 1.0}) == 1.2);
  REQUIRE(cross_loss({9.9, 0.7}, {0.0, 1.0}) == 0.7);
  REQUIRE_THAT(cross_loss({1.0, 2.0, 3.0}, {2.0, 0.5, 1.0}),
               Catch::Matchers::WithinAbs(6.0, 1e-12));
}

TEST_CASE("cross loss scales linearly in the weights") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> l(4), w(4);
    for (auto& x : l) x = rng.uniform() * 3.0;
    for (auto& x : w) x = rng.uniform() * 2.0;
    double a = rng.uniform() * 5.0;
    std::vector<double> aw = w;
    for (auto& x : aw) x *= a;
    REQUIRE_THAT(cross_loss(l, aw), Catch::Matchers::WithinAbs(a * cross_loss(l, w), 1e-10));
  }
}

TEST_CASE("cross loss rejects mismatched lengths") {
  REQUIRE_THROWS_AS(cross_loss({1.0}, {1.0, 2.0}), std::invalid_argument);
}

// --- sampling --------------------------------------------------------------

static std::pair<std::vector<DomainDataset>, SplitAssignment> sampling_fixture() {
  // domain 0: u1 has items a,b out of {a,b,c,d,e}; u2 has everything
  std::vector<RatingTriple> t0 = {
      {"u1", "a", 4.0}, {"u1", "b", 5.0}, {"u2", "a", 3.0}, {"u2", "b", 3.0},
      {"u2", "c", 3.0}, {"u2", "d", 3.0}, {"u2", "e", 3.0},
      {"u3", "c", 2.0}, {"u3", "d", 2.0}, {"u3", "e", 2.0},
  };
  std::vector<RatingTriple> t1 = {{"u1", "x", 4.0}, {"u3", "y", 2.0}};
  std::vector<DomainDataset> ds = {build_domain(t0, 0), build_domain(t1, 1)};
  SplitAssignment sp;
  sp.target_domain = 0;
  sp.tags.resize(2);
  sp.tags[0].assign(ds[0].triples.size(), SplitTag::Train);
  sp.tags[1].assign(ds[1].triples.size(), SplitTag::Train);
  return {ds, sp};
}

TEST_CASE("five negatives per positive yields ten triples for two positives") {
  auto [ds, sp] = sampling_fixture();
  GlobalUserIndex gx = align_users(ds);
  TrainIndex ix = TrainIndex::build(ds, sp);
  std::vector<int> users = {gx.global_map.at("u1")};
  TripleBatch batch = sample_triples(ix, gx, users, 5, 123);
  REQUIRE(batch.by_domain[0].size() == 10);  // 2 positives x 5 in domain 0
  REQUIRE(batch.by_domain[1].size() == 5);   // 1 positive x 5 in domain 1
  for (const auto& t : batch.by_domain[0]) {
    REQUIRE(ix.observed[0][gx.local_index[users[0]][0]].count(t.pos_item) == 1);
    REQUIRE(ix.observed[0][gx.local_index[users[0]][0]].count(t.neg_item) == 0);
  }
}

TEST_CASE("a user who observed every item is skipped with a warning") {
  auto [ds, sp] = sampling_fixture();
  GlobalUserIndex gx = align_users(ds);
  TrainIndex ix = TrainIndex::build(ds, sp);
  std::vector<int> users = {gx.global_map.at("u2")};
  TripleBatch batch = sample_triples(ix, gx, users, 3, 9);
  REQUIRE(batch.by_domain[0].empty());
  REQUIRE(batch.skipped_users == 1);
}

TEST_CASE("sampling is deterministic per seed") {
  auto [ds, sp] = sampling_fixture();
  GlobalUserIndex gx = align_users(ds);
  TrainIndex ix = TrainIndex::build(ds, sp);
  std::vector<int> users = {gx.global_map.at("u1"), gx.global_map.at("u3")};
  TripleBatch a = sample_triples(ix, gx, users, 5, 77);
  TripleBatch b = sample_triples(ix, gx, users, 5, 77);
  for (int k = 0; k < 2; ++k) {
    REQUIRE(a.by_domain[k].size() == b.by_domain[k].size());
    for (std::size_t i = 0; i < a.by_domain[k].size(); ++i) {
      REQUIRE(a.by_domain[k][i].global_user == b.by_domain[k][i].global_user);
      REQUIRE(a.by_domain[k][i].pos_item == b.by_domain[k][i].pos_item);
      REQUIRE(a.by_domain[k][i].neg_item == b.by_domain[k][i].neg_item);
    }
  }
}
