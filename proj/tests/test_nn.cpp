#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hetsched/nn.hpp"

using namespace hetsched;
using namespace hetsched::nn;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor2 t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Plain triple loop, no kernels.
Tensor2 reference_dense(const Tensor2& x, const Tensor2& w, const Tensor2& b, Activation act) {
  Tensor2 out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b(0, j);
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      if (act == Activation::relu) s = s > 0 ? s : 0;
      if (act == Activation::tanh) s = std::tanh(s);
      out(i, j) = s;
    }
  return out;
}

/// A loss touching every differentiable tape op, so one finite-difference
/// check covers them all.
struct CompositeModel {
  ParamSet params;
  Mlp a, b;
  Tensor2 x;
  std::vector<double> target;
  std::vector<std::size_t> perm;
  std::vector<double> adv;
  double beta;

  CompositeModel(Rng& rng, std::size_t in, std::size_t hidden, std::size_t rows) {
    a = Mlp(params, "a", {in, hidden, 3}, Activation::tanh, Activation::tanh, rng);
    b = Mlp(params, "b", {3 + 3, hidden, 1}, Activation::tanh, Activation::identity, rng);
    params.add("bias", random_tensor(1, 3, rng));
    params.add("row", random_tensor(1, 3, rng));
    x = random_tensor(rows, in, rng, -2, 2);
    std::uniform_real_distribution<double> u(-1, 1);
    perm.resize(rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) adv.push_back(u(rng));
    for (std::size_t i = 0; i < rows; ++i) target.push_back(u(rng));
    beta = std::abs(u(rng));
  }

  double loss(ParamSet& p) {
    p.zero_grad();
    Tape tape(&p);
    Var h = tape.add_bias(a.forward(tape, tape.constant(x)), tape.param("bias"));
    const std::size_t rows = x.rows();
    // Reversed rows, summed in pairs (row i with row rows-1-i).
    std::vector<std::vector<RowRef>> groups(rows);
    for (std::size_t i = 0; i < rows; ++i) groups[i] = {{0, i}, {1, i}};
    Var rev = tape.gather_rows(h, [&] {
      std::vector<std::size_t> r(rows);
      for (std::size_t i = 0; i < rows; ++i) r[i] = rows - 1 - i;
      return r;
    }());
    Var srcs[] = {h, rev};
    Var mixed = tape.aggregate(srcs, groups, 3);
    Var ctx = tape.broadcast_rows(tape.activate(tape.param("row"), Activation::tanh), rows);
    Var parts[] = {mixed, ctx};
    Var logits = b.forward(tape, tape.concat_cols(parts));
    Var pl = tape.plackett_luce(logits, perm, adv, beta);
    Var sq = tape.half_squared_error(logits, target);
    Var total = tape.add(tape.scale(pl, -0.7), tape.scale(sq, 0.3));
    tape.backward(total);
    tape.accumulate_into(p);
    return tape.value(total)(0, 0);
  }
};

}  // namespace

TEST_CASE("dense forward examples") {
  Rng rng(1);
  Tensor2 x = random_tensor(3, 3, rng);
  CHECK(dense_forward(x, Tensor2::identity(3), Tensor2(1, 3), Activation::identity) == x);

  Tensor2 neg = random_tensor(4, 2, rng, -5, -1);
  Tensor2 pos_w = random_tensor(2, 3, rng, 0.1, 1);
  CHECK(dense_forward(neg, pos_w, Tensor2(1, 3), Activation::relu) == Tensor2(4, 3));

  for (Activation act : {Activation::identity, Activation::relu, Activation::tanh}) {
    Tensor2 in = random_tensor(3, 4, rng), w = random_tensor(4, 5, rng), b = random_tensor(1, 5, rng);
    auto got = dense_forward(in, w, b, act);
    auto ref = reference_dense(in, w, b, act);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.values()[i] - ref.values()[i]) <= 1e-12);
  }
  CHECK_THROWS(dense_forward(Tensor2(2, 3), Tensor2(4, 2), Tensor2(1, 2), Activation::identity));
}

TEST_CASE("masked softmax examples") {
  std::vector<double> two{0, 0};
  bool m2[] = {true, true};
  auto p = softmax_masked(two, m2);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);

  std::vector<double> l{5, 1, 3};
  bool mask[] = {true, false, true};
  auto q = softmax_masked(l, mask);
  CHECK(q[1] == 0.0);
  CHECK(q[0] == doctest::Approx(std::exp(5.0) / (std::exp(5.0) + std::exp(3.0))).epsilon(1e-14));
  CHECK(q[2] == doctest::Approx(std::exp(3.0) / (std::exp(5.0) + std::exp(3.0))).epsilon(1e-14));

  std::vector<double> shifted{105, 1, 103};
  auto r = softmax_masked(shifted, mask);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(r[i] - q[i]) <= 1e-12);

  bool none[] = {false, false, false};
  CHECK_THROWS(softmax_masked(l, none));
}

TEST_CASE("softmax is a distribution with bounded entropy") {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-20, 20);
  std::bernoulli_distribution keep(0.7);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 1 + trial % 9;
    std::vector<double> logits(n);
    std::unique_ptr<bool[]> mask(new bool[n]);
    std::size_t open = 0;
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = u(rng);
      mask[i] = keep(rng);
      open += mask[i];
    }
    if (open == 0) {
      mask[0] = true;
      open = 1;
    }
    auto p = softmax_masked(logits, std::span<const bool>(mask.get(), n));
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) CHECK(p[i] == 0.0);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1) <= 1e-9);
    double h = entropy(p);
    CHECK(h >= 0);
    CHECK(h <= std::log(static_cast<double>(open)) + 1e-12);
  }
}

TEST_CASE("gradient of the sum of a weight matrix is all ones") {
  ParamSet params;
  Rng rng(3);
  params.add("W", random_tensor(3, 4, rng));
  Tape tape(&params);
  tape.backward(tape.sum(tape.param("W")));
  tape.accumulate_into(params);
  CHECK(params.at("W").grad == Tensor2(3, 4, 1.0));
}

TEST_CASE("a zero loss yields zero gradients") {
  ParamSet params;
  Rng rng(4);
  Mlp mlp(params, "m", {3, 5, 2}, Activation::tanh, Activation::identity, rng);
  Tape tape(&params);
  auto y = mlp.forward(tape, tape.constant(random_tensor(4, 3, rng)));
  auto loss = tape.scale(tape.sum(y), 0.0);
  CHECK(tape.value(loss)(0, 0) == 0.0);
  tape.backward(loss);
  tape.accumulate_into(params);
  for (const auto& p : params)
    for (double g : p.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("grad check of an identity-layer network is exact to roundoff") {
  ParamSet params;
  Rng rng(5);
  Mlp mlp(params, "id", {4, 4}, Activation::identity, Activation::identity, rng);
  Tensor2 x = random_tensor(3, 4, rng);
  auto loss = [&](ParamSet& p) {
    p.zero_grad();
    Tape tape(&p);
    auto l = tape.sum(mlp.forward(tape, tape.constant(x)));
    tape.backward(l);
    tape.accumulate_into(p);
    return tape.value(l)(0, 0);
  };
  auto report = grad_check(params, loss, 1e-4, 1e-10);
  CHECK(report.worst < 1e-10);
  CHECK(report.pass);
  CHECK(report.max_rel_error.size() == params.size());
}

TEST_CASE("grad check of a two-layer tanh network") {
  ParamSet params;
  Rng rng(6);
  Mlp mlp(params, "t", {3, 6, 1}, Activation::tanh, Activation::tanh, rng);
  Tensor2 x = random_tensor(5, 3, rng);
  std::vector<double> target{0.1, -0.2, 0.3, 0.0, 0.5};
  auto loss = [&](ParamSet& p) {
    p.zero_grad();
    Tape tape(&p);
    auto l = tape.half_squared_error(mlp.forward(tape, tape.constant(x)), target);
    tape.backward(l);
    tape.accumulate_into(p);
    return tape.value(l)(0, 0);
  };
  auto report = grad_check(params, loss, 1e-5, 1e-4);
  CHECK(report.worst < 1e-4);
  // The analytic gradients are left in place afterwards.
  auto before = params.at("t.w0").grad;
  loss(params);
  CHECK(params.at("t.w0").grad == before);
}

TEST_CASE("every tape op matches finite differences on random models") {
  Rng rng(7);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t in = 1 + trial % 4, hidden = 2 + trial % 5, rows = 2 + trial % 4;
    CompositeModel model(rng, in, hidden, rows);
    auto report = grad_check(model.params, [&](ParamSet& p) { return model.loss(p); }, 1e-5, 1e-4);
    worst = std::max(worst, report.worst);
    CHECK(report.pass);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("plackett-luce value by hand") {
  Tape tape;
  auto logits = tape.constant(Tensor2(3, 1, std::vector<double>{1, 2, 3}));
  const double a = 0.5;
  auto v = tape.plackett_luce(logits, {2, 0, 1}, {a, a, a}, 0.0);
  double lp0 = 3 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  double lp1 = 1 - std::log(std::exp(1.0) + std::exp(2.0));
  CHECK(tape.value(v)(0, 0) == doctest::Approx(a * (lp0 + lp1)).epsilon(1e-14));

  // With beta the entropy of each sub-selection is added.
  Tape t2;
  auto l2 = t2.constant(Tensor2(2, 1, std::vector<double>{0, 0}));
  auto v2 = t2.plackett_luce(l2, {0, 1}, {0, 0}, 1.0);
  CHECK(t2.value(v2)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("a certain single choice has no entropy gradient") {
  ParamSet params;
  params.add("l", Tensor2(1, 1, 0.3));
  Tape tape(&params);
  auto v = tape.plackett_luce(tape.param("l"), {0}, {0.0}, 1.0);
  CHECK(tape.value(v)(0, 0) == 0.0);
  tape.backward(v);
  tape.accumulate_into(params);
  CHECK(params.at("l").grad(0, 0) == 0.0);
}

TEST_CASE("aggregation is invariant to the listed order of rows") {
  Rng rng(9);
  Tensor2 a = random_tensor(6, 5, rng, -1e3, 1e3), b = random_tensor(4, 5, rng, -1e-3, 1e-3);
  std::vector<RowRef> refs{{0, 0}, {1, 3}, {0, 5}, {1, 0}, {0, 2}, {1, 1}, {0, 4}};
  Tape t1;
  Var s1[] = {t1.constant(a), t1.constant(b)};
  auto first = t1.value(t1.aggregate(s1, {refs, {}}, 5));
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(refs.begin(), refs.end(), rng);
    Tape t2;
    Var s2[] = {t2.constant(a), t2.constant(b)};
    auto again = t2.value(t2.aggregate(s2, {refs, {}}, 5));
    CHECK(std::memcmp(first.data(), again.data(), first.size() * sizeof(double)) == 0);
  }
  for (std::size_t c = 0; c < 5; ++c) CHECK(first(1, c) == 0.0);  // empty group
}

TEST_CASE("adam first step by hand") {
  ParamSet params;
  params.add("w", Tensor2(1, 3, std::vector<double>{1.0, -2.0, 0.5}));
  params.at("w").grad = Tensor2(1, 3, std::vector<double>{0.2, -4.0, 0.0});
  Adam adam;
  adam.step(params);
  CHECK(adam.steps() == 1);
  const double lr = 1e-3, eps = 1e-8;
  // m_hat = g and v_hat = g^2 after one step.
  std::vector<double> expect{1.0 - lr * 0.2 / (0.2 + eps), -2.0 + lr * 4.0 / (4.0 + eps), 0.5};
  for (std::size_t i = 0; i < 3; ++i) CHECK(params.at("w").value(0, i) == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("checkpoint text round trip is byte-stable") {
  Rng rng(10);
  NamedTensors t{{"a/weight", random_tensor(3, 4, rng, -1e6, 1e6)},
                 {"b", Tensor2(1, 5, std::vector<double>{0.1, 1.0 / 3.0, 1e-300, -0.0, 5e-324})},
                 {"empty", Tensor2(0, 2)}};
  std::ostringstream out;
  write_tensors(out, t);
  std::istringstream in(out.str());
  auto back = read_tensors(in);
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].first == t[i].first);
    CHECK(back[i].second.rows() == t[i].second.rows());
    CHECK(std::memcmp(back[i].second.data(), t[i].second.data(), t[i].second.size() * sizeof(double)) == 0);
  }
  std::ostringstream again;
  write_tensors(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("checkpoint errors") {
  std::istringstream wrong_version("hetsched-checkpoint 2\n");
  CHECK_THROWS_AS(read_tensors(wrong_version), CheckpointError);
  std::istringstream wrong_magic("something-else 1\n");
  CHECK_THROWS_AS(read_tensors(wrong_magic), CheckpointError);
  std::istringstream truncated("hetsched-checkpoint 1\ntensor a 2 2\n1 2\n");
  CHECK_THROWS_AS(read_tensors(truncated), CheckpointError);

  ParamSet params;
  params.add("w", Tensor2(2, 2));
  CHECK_THROWS_AS(import_params(params, {{"w", Tensor2(2, 3)}}), CheckpointError);
  CHECK_THROWS_AS(import_params(params, {{"v", Tensor2(2, 2)}}), CheckpointError);
  import_params(params, {{"p/w", Tensor2(2, 2, 4.0)}}, "p/");
  CHECK(params.at("w").value == Tensor2(2, 2, 4.0));
}

TEST_CASE("glorot initialization stays inside its bound") {
  Rng rng(11);
  auto w = glorot_uniform(30, 20, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : w.values()) CHECK(std::abs(v) <= bound);
  CHECK(w.all_finite());
}
