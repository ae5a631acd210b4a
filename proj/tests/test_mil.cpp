#include <doctest.h>

#include <numeric>

#include "milg/error.hpp"
#include "milg/grad_check.hpp"
#include "milg/mil_attention.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace milg;

namespace {

MilConfig small_cfg(std::uint64_t seed = 1) {
  MilConfig c;
  c.input_dim = 6;
  c.proj_dim = 5;
  c.att_dim = 4;
  c.n_classes = 3;
  c.seed = seed;
  return c;
}

Bag random_bag(std::size_t m, std::size_t d, Rng& rng, std::size_t label = 0) {
  Bag b;
  b.slide_id = "b";
  b.features = testutil::random_tensor<float>({m, d}, rng, -2.0, 2.0);
  for (std::size_t i = 0; i < m; ++i) b.coords.push_back({static_cast<double>(i), 0.0});
  b.label = label;
  return b;
}

}  // namespace

TEST_CASE("attend matches the straight-line oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    MilModel<float> model(small_cfg(trial));
    const auto x = testutil::random_tensor<float>({4 + rng.below(6), 6}, rng, -2.0, 2.0);
    const auto got = model.attend(x);
    const auto want = oracle::attention(x, model.params());
    for (std::size_t h = 0; h < want.scores.size(); ++h) CHECK(got.scores[h] == doctest::Approx(want.scores[h]).epsilon(1e-6));
    for (std::size_t j = 0; j < want.embedding.size(); ++j)
      CHECK(got.bag_embedding[j] == doctest::Approx(want.embedding[j]).epsilon(1e-6));
    for (std::size_t c = 0; c < want.logits.size(); ++c) CHECK(got.logits[c] == doctest::Approx(want.logits[c]).epsilon(1e-6));
  }
}

TEST_CASE("attention edge cases") {
  MilModel<float> model(small_cfg());
  Rng rng(3);
  const auto one = testutil::random_tensor<float>({1, 6}, rng);
  CHECK(model.attend(one).scores == std::vector<double>{1.0});

  auto two = testutil::random_tensor<float>({2, 6}, rng);
  for (std::size_t j = 0; j < 6; ++j) two(1, j) = two(0, j);
  const auto s = model.attend(two).scores;
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(model.attend(Tensor<float>({3, 5})), DimensionError);
  CHECK_THROWS_AS(model.attend(Tensor<float>({0, 6})), DimensionError);
}

TEST_CASE("scores sum to one and follow a permutation of the bag") {
  Rng rng(4);
  MilModel<float> model(small_cfg(7));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.below(30);
    const auto x = testutil::random_tensor<float>({m, 6}, rng, -3.0, 3.0);
    const auto a = model.attend(x);
    CHECK(std::accumulate(a.scores.begin(), a.scores.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Tensor<float> y({m, 6});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < 6; ++j) y(i, j) = x(perm[i], j);
    const auto b = model.attend(y);
    for (std::size_t i = 0; i < m; ++i) CHECK(b.scores[i] == doctest::Approx(a.scores[perm[i]]).epsilon(1e-6));
    for (std::size_t c = 0; c < a.logits.size(); ++c) CHECK(std::abs(b.logits[c] - a.logits[c]) < 1e-6);
  }
}

TEST_CASE("stage-1 gradients pass the finite-difference check") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    MilModel<double> model(small_cfg(trial + 10));
    const auto x = testutil::random_tensor<double>({3 + rng.below(5), 6}, rng, -2.0, 2.0);
    const std::size_t label = rng.below(3);
    const auto r = grad_check(
        [&](ad::Tape<double>& t) { return t.cross_entropy(model.forward(t, t.constant(x)).probs, label); },
        model.params().all());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("select_top counts, ties and order") {
  std::vector<double> s{0.1, 0.5, 0.2, 0.9, 0.3, 0.05, 0.6, 0.7, 0.15, 0.4};
  CHECK(select_top(s, 60).size() == 6);
  CHECK(select_top(s, 60) == std::vector<std::size_t>{1, 3, 4, 6, 7, 9});
  CHECK(select_top(s, 100).size() == 10);
  CHECK(select_top(s, 0.1).size() == 1);
  CHECK(select_top(s, 0.1) == std::vector<std::size_t>{3});
  CHECK(select_top(std::vector<double>(5, 0.2), 40) == std::vector<std::size_t>{0, 1});
  CHECK(select_top(std::vector<double>(3, 1.0), 50).size() == 2);
  CHECK(select_top(std::vector<double>{}, 50).empty());
  CHECK_THROWS_AS(select_top(s, 0), UserError);
  CHECK_THROWS_AS(select_top(s, 101), UserError);
}

TEST_CASE("select_top count formula and monotone invariance") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(80);
    const double S = rng.uniform(0.5, 100.0);
    std::vector<double> s(m);
    for (auto& v : s) v = rng.uniform();
    const auto sel = select_top(s, S);
    const auto expect = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(S * m / 100.0 - 1e-9)));
    CHECK(sel.size() == std::min(expect, m));
    std::vector<double> t(m);
    for (std::size_t i = 0; i < m; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(select_top(t, S) == sel);
  }
}

TEST_CASE("training separates sign-labelled bags") {
  Rng rng(7);
  std::vector<Bag> bags;
  for (int i = 0; i < 40; ++i) {
    const std::size_t label = i % 2;
    Bag b = random_bag(6, 4, rng, label);
    for (auto& v : b.features.data()) v = static_cast<float>(std::abs(v) * (label ? 1.0 : -1.0));
    bags.push_back(std::move(b));
  }
  MilConfig cfg{4, 8, 4, 2, 3};
  TrainConfig train;
  train.epochs = 100;
  std::vector<EpochStat> log;
  const auto model = train_mil(bags, cfg, train, &log);
  REQUIRE(log.size() == 100);
  CHECK(log.back().train_acc >= 0.95);
  CHECK(log.back().loss < log.front().loss);
}

TEST_CASE("training contract") {
  Rng rng(8);
  std::vector<Bag> bags{random_bag(3, 6, rng, 0), random_bag(4, 6, rng, 1), random_bag(2, 6, rng, 2)};
  auto cfg = small_cfg();
  TrainConfig train;
  train.epochs = 0;
  CHECK(train_mil(bags, cfg, train).to_checkpoint().serialize() == MilModel<float>(cfg).to_checkpoint().serialize());

  train.epochs = 3;
  CHECK(train_mil(bags, cfg, train).to_checkpoint().serialize() == train_mil(bags, cfg, train).to_checkpoint().serialize());

  CHECK_THROWS_AS(train_mil({bags[0]}, cfg, train), UserError);
  std::vector<Bag> same{random_bag(3, 6, rng, 1), random_bag(3, 6, rng, 1)};
  CHECK_THROWS_WITH_AS(train_mil(same, cfg, train), doctest::Contains("one label"), UserError);
  bags[0].label = 5;
  CHECK_THROWS_AS(train_mil(bags, cfg, train), UserError);
}

TEST_CASE("MIL checkpoint round trip") {
  MilModel<float> model(small_cfg(4));
  const auto back = MilModel<float>::from_checkpoint(Checkpoint::deserialize(model.to_checkpoint().serialize()));
  Rng rng(9);
  const auto x = testutil::random_tensor<float>({5, 6}, rng);
  CHECK(back.attend(x).logits == model.attend(x).logits);
  CHECK(back.project(x) == model.project(x));
  Checkpoint wrong;
  wrong.meta = {{"model", "asg-network"}};
  CHECK_THROWS_AS(MilModel<float>::from_checkpoint(wrong), UserError);
}
