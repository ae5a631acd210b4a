#include <doctest.h>

#include <numeric>

#include "milg/asg_network.hpp"
#include "milg/error.hpp"
#include "milg/grad_check.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace milg;
using testutil::random_adjacency;
using testutil::random_tensor;

namespace {

PatchGraph random_graph(std::size_t n, std::size_t f, Rng& rng, double p = 0.3) {
  PatchGraph g;
  g.slide_id = "g";
  g.node_features = random_tensor<float>({n, f}, rng, -1.0, 1.0);
  g.adjacency = random_adjacency(n, p, rng);
  for (std::size_t i = 0; i < n; ++i) {
    g.patch_ids.push_back(i);
    g.coords.push_back({static_cast<double>(i), 0.0});
  }
  return g;
}

AsgConfig small_cfg(std::size_t modules, std::size_t in, std::size_t hidden, std::uint64_t seed) {
  AsgConfig c;
  c.num_modules = modules;
  c.input_dim = in;
  c.hidden = hidden;
  c.n_classes = 3;
  c.pool_ratio = 0.8;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("gcn layer analytic cases") {
  ad::Tape<double> t;
  Adjacency one(1);
  auto g = t.constant(Tensor<double>({1, 1}, std::vector<double>{-2.0}));
  CHECK(t.value(gcn_layer(t, g, one, t.constant(Tensor<double>({1, 1}, std::vector<double>{-1.5}))))[0] == 3.0);
  CHECK(t.value(gcn_layer(t, g, one, t.constant(Tensor<double>({1, 1}, std::vector<double>{1.5}))))[0] == 0.0);

  Adjacency iso(2);
  auto g2 = t.constant(Tensor<double>({2, 1}, std::vector<double>{1.0, 2.0}));
  const auto& r = t.value(gcn_layer(t, g2, iso, t.constant(Tensor<double>({1, 1}, std::vector<double>{3.0}))));
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 6.0);
}

TEST_CASE("gcn layer on a triangle by hand") {
  // Every node has degree 3 with the self loop, so the operator is J/3.
  Adjacency tri(3);
  tri.connect(0, 1);
  tri.connect(1, 2);
  tri.connect(0, 2);
  ad::Tape<double> t;
  auto G = t.constant(Tensor<double>::matrix(3, 2, {1, 0, 0, 1, 1, 1}));
  auto W = t.constant(Tensor<double>::matrix(2, 2, {1, -1, 2, 0}));
  // G W rows: (1,-1), (2,0), (3,-1); column sums (6,-2); /3 -> (2,-2/3) -> relu (2,0)
  const auto& out = t.value(gcn_layer(t, G, tri, W));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out(i, 0) == doctest::Approx(2.0));
    CHECK(out(i, 1) == 0.0);
  }
}

TEST_CASE("gcn layer matches the neighbour-sum oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(50), fi = 1 + rng.below(6), fo = 1 + rng.below(6);
    const auto a = random_adjacency(n, rng.uniform(0.0, 0.5), rng);
    const auto G = random_tensor<double>({n, fi}, rng), W = random_tensor<double>({fi, fo}, rng);
    ad::Tape<double> t;
    const auto& got = t.value(gcn_layer(t, t.constant(G), a, t.constant(W)));
    const auto want = oracle::gcn(oracle::to_matrix(G), a, oracle::to_matrix(W));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < fo; ++f) CHECK(std::abs(got(i, f) - want[i][f]) < 1e-6);
  }
}

TEST_CASE("pooled sizes") {
  CHECK(pooled_size(10, 0.5) == 5);
  CHECK(pooled_size(1, 0.1) == 1);
  CHECK(pooled_size(7, 0.8) == 6);
  CHECK(pooled_size(5, 0.8) == 4);
  CHECK(pooled_size(10, 0.8) == 8);
}

TEST_CASE("sag_pool cardinality, symmetry and gating") {
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(40), f = 1 + rng.below(5);
    const double d = rng.uniform(0.05, 0.95);
    const auto a = random_adjacency(n, 0.2, rng);
    const auto G = random_tensor<double>({n, f}, rng, 0.0, 1.0);
    ad::Tape<double> t;
    auto pool = sag_pool(t, t.constant(G), a, t.constant(random_tensor<double>({f, 1}, rng)), d);
    const std::size_t want = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(d * n - 1e-9)));
    CHECK(pool.kept.size() == want);
    CHECK(pool.adjacency.size() == want);
    CHECK(pool.adjacency.symmetric());
    CHECK(std::is_sorted(pool.kept.begin(), pool.kept.end()));
    CHECK(pool.kept.back() < n);
    const auto& s = t.value(pool.scores);
    const auto& x = t.value(pool.features);
    for (std::size_t r = 0; r < want; ++r) {
      for (std::size_t c = 0; c < f; ++c) CHECK(x(r, c) == doctest::Approx(G(pool.kept[r], c) * s[pool.kept[r]]));
      for (std::size_t q = 0; q < want; ++q) CHECK(pool.adjacency(r, q) == a(pool.kept[r], pool.kept[q]));
    }
    // Nothing dropped outranks anything kept.
    double min_kept = 1e300;
    for (auto k : pool.kept) min_kept = std::min(min_kept, s[k]);
    for (std::size_t i = 0; i < n; ++i)
      if (!std::binary_search(pool.kept.begin(), pool.kept.end(), i)) CHECK(s[i] <= min_kept);
  }
}

TEST_CASE("sag_pool on a single node and on a star") {
  ad::Tape<double> t;
  auto one = sag_pool(t, t.constant(Tensor<double>({1, 2}, std::vector<double>{1.0, 2.0})), Adjacency(1),
                      t.constant(Tensor<double>({2, 1}, std::vector<double>{1.0, 1.0})), 0.3);
  CHECK(one.kept == std::vector<std::size_t>{0});
  CHECK(t.value(one.features)[1] == doctest::Approx(2.0 * 3.0));

  // Star: the centre (node 0) carries a large feature, the leaves 1..4 small
  // distinct ones. Scores by brute force: T_i = sum_j A_ij g_j / sqrt(d_i d_j).
  Adjacency star(5);
  for (std::size_t i = 1; i < 5; ++i) star.connect(0, i);
  const std::vector<double> gv{10.0, 0.1, 0.4, 0.3, 0.2};
  std::vector<double> T(5, 0.0);
  const std::vector<double> deg{5, 2, 2, 2, 2};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i == j || star(i, j)) T[i] += gv[j] / std::sqrt(deg[i] * deg[j]);
  std::vector<std::size_t> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return T[a] > T[b]; });
  order.resize(3);
  std::sort(order.begin(), order.end());
  auto pool = sag_pool(t, t.constant(Tensor<double>({5, 1}, gv)), star,
                       t.constant(Tensor<double>({1, 1}, std::vector<double>{1.0})), 0.5);
  CHECK(pool.kept == order);
  for (std::size_t i = 0; i < 5; ++i) CHECK(t.value(pool.scores)[i] == doctest::Approx(T[i]));
}

TEST_CASE("forward matches the straight-line oracle on 12-node graphs") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_graph(12, 5, rng);
    const std::size_t in = trial % 2 ? 5 : 6;  // exercises both skip settings of the first module
    auto cfg = small_cfg(1 + rng.below(4), 5, in == 5 ? 5 : 6, 100 + trial);
    AsgNetwork<double> net(cfg);
    const auto got = net.predict_proba(g);
    const auto want = oracle::asg_forward(g, net);
    REQUIRE(got.size() == want.size());
    for (std::size_t c = 0; c < want.size(); ++c) CHECK(std::abs(got[c] - want[c]) < 1e-6);
    CHECK(std::accumulate(got.begin(), got.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("one module on one node collapses to a dense stack") {
  PatchGraph g;
  g.node_features = Tensor<float>({1, 2}, std::vector<float>{0.5f, -1.0f});
  g.adjacency = Adjacency(1);
  g.patch_ids = {0};
  g.coords = {{0, 0}};
  auto cfg = small_cfg(1, 2, 3, 5);
  AsgNetwork<double> net(cfg);
  const auto& p = net.params();
  std::vector<double> h(3, 0.0);
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t k = 0; k < 2; ++k) h[f] += g.node_features[k] * p.w_gcn[0](k, f);
    h[f] = std::max(0.0, h[f]);
  }
  double T = 0.0;
  for (std::size_t f = 0; f < 3; ++f) T += h[f] * p.w_score[0][f];
  T = std::max(0.0, T);
  std::vector<double> logit(3, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t f = 0; f < 3; ++f) logit[c] += p.w_fc(c, f) * T * h[f];
  const double z = std::exp(logit[0]) + std::exp(logit[1]) + std::exp(logit[2]);
  const auto got = net.predict_proba(g);
  for (std::size_t c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(std::exp(logit[c]) / z).epsilon(1e-9));
}

TEST_CASE("edgeless graphs process nodes independently") {
  Rng rng(24);
  auto g = random_graph(6, 4, rng, 0.0);
  auto cfg = small_cfg(3, 4, 4, 9);
  AsgNetwork<double> net(cfg);
  // With A = 0 the propagation operator is the identity; the oracle with the
  // same empty adjacency is exactly the per-node stack.
  const auto got = net.predict_proba(g);
  const auto want = oracle::asg_forward(g, net);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(got[c] - want[c]) < 1e-9);
}

TEST_CASE("forward is invariant to node order after canonical ordering") {
  Rng rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.below(20);
    auto g = random_graph(n, 4, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    PatchGraph h = g;
    h.adjacency = Adjacency(n);
    for (std::size_t i = 0; i < n; ++i) {
      h.patch_ids[i] = g.patch_ids[perm[i]];
      h.coords[i] = g.coords[perm[i]];
      for (std::size_t j = 0; j < 4; ++j) h.node_features(i, j) = g.node_features(perm[i], j);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (g.adjacency(perm[i], perm[j])) h.adjacency.connect(i, j);
    AsgNetwork<float> net(small_cfg(3, 4, 8, trial));
    CHECK(net.predict_proba(canonical_order(h)) == net.predict_proba(canonical_order(g)));
  }
}

TEST_CASE("two-module network gradients pass the finite-difference check") {
  Rng rng(26);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(8 + rng.below(6), 4, rng);
    AsgNetwork<double> net(small_cfg(2, 4, 5, 30 + trial));
    const std::size_t label = rng.below(3);
    const auto r = grad_check([&](ad::Tape<double>& t) { return t.cross_entropy(net.forward(t, g), label); },
                              net.params().all());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("training fits planted-feature graphs") {
  Rng rng(27);
  std::vector<PatchGraph> graphs;
  for (int i = 0; i < 24; ++i) {
    auto g = random_graph(10, 4, rng, 0.3);
    g.label = i % 2;
    for (std::size_t r = 0; r < 10; ++r) {
      for (std::size_t c = 0; c < 4; ++c) g.node_features(r, c) *= 0.2f;
      if (r % 2 == 0) g.node_features(r, g.label) += 1.0f;
    }
    graphs.push_back(std::move(g));
  }
  AsgConfig cfg = small_cfg(2, 4, 4, 3);
  cfg.n_classes = 2;
  TrainConfig train;
  train.epochs = 200;
  train.batch_size = 8;
  train.optimizer = {OptimizerKind::Sgd, 1e-2, 0.9};
  std::vector<EpochStat> log;
  train_gcn(graphs, cfg, train, &log);
  CHECK(log.back().train_acc >= 0.95);
}

TEST_CASE("training contract") {
  Rng rng(28);
  std::vector<PatchGraph> graphs;
  for (int i = 0; i < 4; ++i) {
    graphs.push_back(random_graph(6, 4, rng));
    graphs.back().label = i % 3;
  }
  auto cfg = small_cfg(2, 4, 4, 1);
  TrainConfig train;
  train.epochs = 0;
  CHECK(train_gcn(graphs, cfg, train).to_checkpoint().serialize() == AsgNetwork<float>(cfg).to_checkpoint().serialize());
  train.epochs = 3;
  const auto a = train_gcn(graphs, cfg, train).to_checkpoint().serialize();
  CHECK(a == train_gcn(graphs, cfg, train).to_checkpoint().serialize());
  CHECK_THROWS_AS(train_gcn({graphs[0]}, cfg, train), UserError);
  auto one_label = graphs;
  for (auto& g : one_label) g.label = 0;
  CHECK_THROWS_AS(train_gcn(one_label, cfg, train), UserError);

  const auto back = AsgNetwork<float>::from_checkpoint(Checkpoint::deserialize(a));
  CHECK(back.to_checkpoint().serialize() == a);

  AsgConfig bad = cfg;
  bad.pool_ratio = 1.0;
  CHECK_THROWS_AS(AsgNetwork<float>{bad}, UserError);
  bad = cfg;
  bad.num_modules = 0;
  CHECK_THROWS_AS(AsgNetwork<float>{bad}, UserError);
}
