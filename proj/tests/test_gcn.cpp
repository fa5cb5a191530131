#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "derail/error.hpp"
#include "derail/gcn.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace derail;
using namespace derail::test;

namespace {

NormalizedGraph single_node(double x) {
  NormalizedGraph g;
  g.features = Matrix{{x}};
  g.a_hat = Matrix{{1.0}};
  g.s_hat = Matrix{{1.0}};
  g.node_ids = {1};
  g.spans = {SrcSpan{}};
  return g;
}

double relu(double v) { return v > 0 ? v : 0.0; }

}  // namespace

TEST_CASE("gcn_layer") {
  CHECK(gcn_layer(Matrix{{0.5, 0.5}, {0.5, 0.5}}, Matrix{{1.0}, {3.0}}, Matrix{{0.0}}, true) ==
        Matrix{{0.0}, {0.0}});
  CHECK(gcn_layer(Matrix{{1.0}}, Matrix{{2.0}}, Matrix{{3.0}}, true) == Matrix{{6.0}});
  CHECK(gcn_layer(Matrix{{0.5, 0.5}, {0.5, 0.5}}, Matrix{{1.0}, {3.0}}, Matrix{{1.0}}, true) ==
        Matrix{{2.0}, {2.0}});
  CHECK(gcn_layer(Matrix{{1.0}}, Matrix{{2.0}}, Matrix{{-3.0}}, true) == Matrix{{0.0}});
  CHECK(gcn_layer(Matrix{{1.0}}, Matrix{{2.0}}, Matrix{{-3.0}}, false) == Matrix{{-6.0}});
  CHECK_THROWS_AS(gcn_layer(Matrix{{1.0}}, Matrix{{1.0, 2.0}}, Matrix{{1.0}}, true), Error);
  CHECK_THROWS_AS(gcn_layer(Matrix(2, 3), Matrix(3, 1), Matrix{{1.0}}, true), Error);
}

TEST_CASE("forward") {
  SUBCASE("zero parameters give even odds") {
    std::mt19937_64 rng(1);
    const auto g = random_normalized(rng, 5, 3);
    const auto t = forward(GcnParams::zeros(3, 4), g);
    CHECK(t.logits[0] == 0.0);
    CHECK(t.logits[1] == 0.0);
    CHECK(t.probability == 0.5);
  }
  SUBCASE("single node matches the scalar formula") {
    GcnParams p = GcnParams::zeros(1, 1);
    p.w1(0, 0) = 1.5;
    p.w2(0, 0) = 0.75;
    p.w_out(0, 0) = -0.4;
    p.w_out(0, 1) = 0.9;
    p.b_out(0, 0) = 0.1;
    p.b_out(0, 1) = -0.2;
    const double x = 0.8;
    const double h2 = relu(relu(x * 1.5) * 0.75);
    const double l0 = h2 * -0.4 + 0.1;
    const double l1 = h2 * 0.9 - 0.2;
    const auto t = forward(p, single_node(x));
    CHECK(t.logits[0] == doctest::Approx(l0).epsilon(1e-15));
    CHECK(t.logits[1] == doctest::Approx(l1).epsilon(1e-15));
    CHECK(t.probability == doctest::Approx(1.0 / (1.0 + std::exp(l0 - l1))).epsilon(1e-15));
    CHECK(t.pooled == std::vector<double>{h2});
  }
  SUBCASE("pooled is the column mean of the last layer") {
    std::mt19937_64 rng(2);
    const auto g = random_normalized(rng, 6, 4);
    const auto t = forward(random_params(rng, 4, 3), g);
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (std::size_t r = 0; r < 6; ++r) mean += t.h2(r, c);
      CHECK(t.pooled[c] == doctest::Approx(mean / 6.0).epsilon(1e-14));
    }
  }
  SUBCASE("permutation invariance") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto n = uniform_index(rng, 2, 8);
      const auto g = random_normalized(rng, n, 3);
      const auto p = random_params(rng, 3, 4);
      const auto base = forward(p, g).logits;
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto moved = forward(p, permute(g, perm)).logits;
      CHECK(std::abs(moved[0] - base[0]) <= 1e-10);
      CHECK(std::abs(moved[1] - base[1]) <= 1e-10);
    }
  }
  SUBCASE("large but finite inputs stay finite") {
    std::mt19937_64 rng(4);
    auto g = random_normalized(rng, 5, 3);
    for (double& v : g.features.values()) v *= 1e6;
    const auto t = forward(random_params(rng, 3, 3, 10.0), g);
    for (const Matrix* m : {&t.sx, &t.z1, &t.h1, &t.sh1, &t.z2, &t.h2}) CHECK(all_finite(*m));
    CHECK(std::isfinite(t.logits[0]));
    CHECK(std::isfinite(t.logits[1]));
    CHECK(t.probability >= 0.0);
    CHECK(t.probability <= 1.0);
  }
  SUBCASE("width mismatch") {
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(forward(GcnParams::zeros(4, 2), random_normalized(rng, 3, 3)), Error);
  }
}

TEST_CASE("loss and gradients") {
  std::mt19937_64 rng(6);
  SUBCASE("zero parameters cost ln 2") {
    const auto g = random_normalized(rng, 4, 2);
    CHECK(loss_and_grads(GcnParams::zeros(2, 3), g, Label::Clean, 0.1).loss == doctest::Approx(std::log(2.0)));
    CHECK(loss_and_grads(GcnParams::zeros(2, 3), g, Label::Defective, 0.0).loss ==
          doctest::Approx(std::log(2.0)));
  }
  SUBCASE("l2 term is exactly penalty * |theta|^2 / 2") {
    const auto g = random_normalized(rng, 4, 3);
    const auto p = random_params(rng, 3, 2);
    const double l2 = 0.01;
    const double a = loss_and_grads(p, g, Label::Defective, l2).loss;
    const double b = loss_and_grads(p, g, Label::Defective, 2 * l2).loss;
    CHECK(b - a == doctest::Approx(l2 * p.squared_norm() / 2.0).epsilon(1e-12));
  }
  SUBCASE("analytic gradients match central differences") {
    for (int trial = 0; trial < 40; ++trial) {
      const auto inst = random_grad_instance(rng);
      const auto check = check_gradients(inst.params, inst.graph, inst.label, 5e-4);
      CAPTURE(trial);
      CHECK(check.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("optimizer steps") {
  TrainConfig sgd;
  sgd.optimizer = OptimizerKind::Sgd;
  sgd.learning_rate = 0.1;
  TrainConfig adam;

  std::mt19937_64 rng(7);
  const auto start = random_params(rng, 2, 2);
  for (const auto& config : {sgd, adam}) {
    auto p = start;
    auto state = OptimizerState::for_params(p);
    optimizer_step(state, p, GcnParams::zeros(2, 2), config);
    CHECK(p == start);
  }

  GcnParams one = GcnParams::zeros(1, 1);
  one.w1(0, 0) = 1.0;
  GcnParams grad = GcnParams::zeros(1, 1);
  grad.w1(0, 0) = 1.0;
  {
    auto p = one;
    auto state = OptimizerState::for_params(p);
    optimizer_step(state, p, grad, sgd);
    CHECK(p.w1(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  }
  for (double g : {3.7, -0.02}) {
    // First bias-corrected Adam step: m_hat = g, v_hat = g^2, so the update
    // is lr * g / (|g| + eps).
    auto p = one;
    grad.w1(0, 0) = g;
    auto state = OptimizerState::for_params(p);
    optimizer_step(state, p, grad, adam);
    const double expected = 1.0 - adam.learning_rate * g / (std::abs(g) + adam.epsilon);
    CHECK(p.w1(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(p.w1(0, 0) - 1.0) == doctest::Approx(adam.learning_rate).epsilon(1e-6));
  }
  GcnParams wrong = GcnParams::zeros(3, 1);
  auto state = OptimizerState::for_params(one);
  CHECK_THROWS_AS(optimizer_step(state, one, wrong, adam), Error);
}

TEST_CASE("full-batch SGD on a separable pair lowers the loss at every step") {
  NormalizedGraph a = single_node(1.0);
  NormalizedGraph b = single_node(-1.0);
  a.features = Matrix{{1.0, 0.0}};
  b.features = Matrix{{0.0, 1.0}};
  std::mt19937_64 rng(8);
  GcnParams p = GcnParams::glorot(2, 3, 8);
  for (Matrix* t : p.tensors()) {
    for (double& v : t->values()) v = std::abs(v) + 0.05;  // keep units active
  }
  TrainConfig config;
  config.optimizer = OptimizerKind::Sgd;
  config.learning_rate = 0.05;
  config.l2_penalty = 0.0;
  auto state = OptimizerState::for_params(p);
  auto total = [&](const GcnParams& q) {
    return loss_and_grads(q, a, Label::Defective, 0).loss + loss_and_grads(q, b, Label::Clean, 0).loss;
  };
  double prev = total(p);
  for (int step = 0; step < 10; ++step) {
    auto ga = loss_and_grads(p, a, Label::Defective, 0).grads;
    const auto gb = loss_and_grads(p, b, Label::Clean, 0).grads;
    auto ta = ga.tensors();
    auto tb = gb.tensors();
    for (std::size_t k = 0; k < ta.size(); ++k) {
      auto va = ta[k]->values();
      auto vb = tb[k]->values();
      for (std::size_t i = 0; i < va.size(); ++i) va[i] += vb[i];
    }
    optimizer_step(state, p, ga, config);
    const double now = total(p);
    CAPTURE(step);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.l2_penalty = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("model container") {
  std::mt19937_64 rng(9);
  GcnModel m{random_params(rng, 4, 3), "0123456789abcdef"};
  std::stringstream buf;
  write_model(buf, m);
  const auto back = read_model(buf);
  CHECK(back.params == m.params);
  CHECK(back.vocab_fingerprint == m.vocab_fingerprint);
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(m.fingerprint().size() == 16);

  const auto path = scratch_dir("model") / "m.sgm";
  save_model(path, m);
  CHECK(load_model(path).params == m.params);
  CHECK_THROWS_AS(load_model(path.parent_path() / "missing.sgm"), Error);

  std::string bytes = read_text(path);
  bytes[0] = 'X';
  std::stringstream corrupt(bytes);
  CHECK_THROWS_AS(read_model(corrupt), Error);
  std::stringstream truncated(read_text(path).substr(0, 40));
  CHECK_THROWS_AS(read_model(truncated), Error);

  const auto j = to_json(m);
  CHECK(j["format"] == "derail-model/1");
  CHECK(j["vocab_fingerprint"] == "0123456789abcdef");

  GcnModel bad{m.params, "short"};
  std::stringstream out;
  CHECK_THROWS_AS(write_model(out, bad), Error);
}
