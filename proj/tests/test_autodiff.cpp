#include <doctest.h>

#include <cmath>
#include <vector>

#include "esgraph/autodiff.hpp"
#include "esgraph/optim.hpp"
#include "esgraph/params.hpp"
#include "esgraph/random.hpp"

using namespace esgraph;
using diff::Parameter;
using diff::Tape;
using diff::Var;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RandomSource& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

}  // namespace

TEST_CASE("softmax: symmetry, normalization, shift invariance") {
  Tape t;
  Var x = t.constant(Tensor({1, 3}, {0.0, 0.0, 0.0}));
  Var y = t.softmax_rows(x);
  for (int j = 0; j < 3; ++j)
    CHECK(y.value()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  RandomSource rng(11);
  for (int s = 0; s < 20; ++s) {
    Tape tp;
    Tensor logits = random_tensor({4, 7}, rng, 3.0);
    Var a = tp.softmax_rows(tp.constant(logits));
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 7; ++c) sum += a.value().at(r, c);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    Tensor shifted = logits;
    const double c0 = rng.uniform(-50.0, 50.0);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += c0;
    Var b = tp.softmax_rows(tp.constant(shifted));
    for (std::size_t i = 0; i < a.value().size(); ++i)
      CHECK(std::abs(a.value()[i] - b.value()[i]) < 1e-12);
  }
}

TEST_CASE("relu definition") {
  Tape t;
  Var y = t.relu(t.constant(Tensor({2}, {-1.0, 2.0})));
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == 2.0);
}

TEST_CASE("segment max: values and argmax routing") {
  Tape t;
  Tensor x({2, 2}, {1.0, 5.0, 3.0, 2.0});
  Var xv = t.constant(x);
  Var m = t.segment_max(xv, {0, 0}, 1);
  CHECK(m.value().at(0, 0) == 3.0);
  CHECK(m.value().at(0, 1) == 5.0);
  Var loss = t.sum_all(m);
  t.backward(loss);
  // gradient lands only on the recorded argmax rows: col0 -> row1, col1 -> row0
  CHECK(t.grad(xv).at(0, 0) == 0.0);
  CHECK(t.grad(xv).at(1, 0) == 1.0);
  CHECK(t.grad(xv).at(0, 1) == 1.0);
  CHECK(t.grad(xv).at(1, 1) == 0.0);
}

TEST_CASE("segment max: empty segment is the zero vector") {
  Tape t;
  Var m = t.segment_max(t.constant(Tensor({1, 2}, {-4.0, -7.0})), {1}, 3);
  CHECK(m.value().at(0, 0) == 0.0);
  CHECK(m.value().at(1, 0) == -4.0);  // all-negative segment keeps its true max
  CHECK(m.value().at(1, 1) == -7.0);
  CHECK(m.value().at(2, 1) == 0.0);
}

TEST_CASE("backward: linear case and relu cutoff") {
  Parameter w("w", Tensor({2}, {0.5, -0.25}));
  {
    Tape t;
    Var loss = t.sum_all(t.mul(t.param(w), t.constant(Tensor({2}, {1.0, 2.0}))));
    t.backward(loss);
    CHECK(w.grad[0] == 1.0);
    CHECK(w.grad[1] == 2.0);
  }
  Parameter v("v", Tensor({1}, {-3.0}));
  {
    Tape t;
    Var loss = t.sum_all(t.relu(t.param(v)));
    t.backward(loss);
    CHECK(v.grad[0] == 0.0);
  }
}

TEST_CASE("backward: tape is consumed after one pass") {
  Tape t;
  Parameter w("w", Tensor({1}, {2.0}));
  Var p = t.param(w);
  Var loss = t.sum_all(t.mul(p, p));
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("shape mismatch errors name the primitive") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 4}));
  try {
    t.add(a, b);
    CHECK(false);
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(2,4)") != std::string::npos);
  }
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  CHECK_THROWS_AS(t.constant(Tensor({1}, {std::nan("")})), Error);
  Var big = t.constant(Tensor({1}, {1e308}));
  CHECK_THROWS_AS(t.mul(big, big), Error);
}

TEST_CASE("dropout: rate 0 is identity; masks reproduce bit-exactly") {
  RandomSource rng(5);
  Tensor x = random_tensor({3, 4}, rng);
  {
    Tape t(&rng);
    Var xv = t.constant(x);
    Var y = t.dropout(xv, 0.0, true);
    CHECK(y.id == xv.id);
  }
  auto run = [&x](std::uint64_t seed) {
    RandomSource r(seed);
    Tape t(&r);
    return t.dropout(t.constant(x), 0.4, true).value();
  };
  Tensor a = run(123), b = run(123), c = run(124);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= (a[i] != c[i]);
  CHECK(any_diff);
}

TEST_CASE("grad_check: exact quadratic") {
  RandomSource rng(7);
  Parameter w("w", random_tensor({5}, rng));
  std::vector<Parameter*> ps = {&w};
  double err = diff::grad_check(
      [&](Tape& t) {
        Var p = t.param(w);
        return t.sum_all(t.mul(p, p));
      },
      ps, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check: rejects bad step and non-scalar loss") {
  Parameter w("w", Tensor({2}, {1.0, 2.0}));
  std::vector<Parameter*> ps = {&w};
  auto build = [&](Tape& t) { return t.param(w); };  // non-scalar
  CHECK_THROWS_AS(diff::grad_check(build, ps, 1e-2), Error);
  CHECK_THROWS_AS(diff::grad_check(build, ps, 1e-5), Error);
}

TEST_CASE("grad_check: random two-layer mlp") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomSource rng(seed);
    Parameter w1("w1", random_tensor({4, 6}, rng, 0.7));
    Parameter b1("b1", random_tensor({6}, rng, 0.2));
    Parameter w2("w2", random_tensor({6, 3}, rng, 0.7));
    Parameter b2("b2", random_tensor({3}, rng, 0.2));
    Tensor x = random_tensor({5, 4}, rng);
    std::vector<Parameter*> ps = {&w1, &b1, &w2, &b2};
    double err = diff::grad_check(
        [&](Tape& t) {
          Var h = t.relu(t.affine(t.constant(x), t.param(w1), t.param(b1)));
          Var y = t.affine(h, t.param(w2), t.param(b2));
          return t.mean_all(t.mul(y, y));
        },
        ps, kFdStep);
    CHECK(err < kFdTol);
  }
}

TEST_CASE("grad_check: softmax cross-entropy head") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RandomSource rng(100 + seed);
    Parameter w("w", random_tensor({4, 5}, rng, 0.8));
    Parameter b("b", random_tensor({5}, rng, 0.1));
    Tensor x = random_tensor({6, 4}, rng);
    std::vector<int> labels = {0, 3, 2, 4, 1, 2};
    std::vector<Parameter*> ps = {&w, &b};
    double err = diff::grad_check(
        [&](Tape& t) {
          Var logits = t.affine(t.constant(x), t.param(w), t.param(b));
          return t.cross_entropy_mean(logits, labels);
        },
        ps, kFdStep);
    CHECK(err < 1e-6);
  }
}

// Central finite differences against every primitive, 20 seeds each.
TEST_CASE("grad_check: full primitive sweep") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomSource rng(1000 + seed * 17);
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({3, 4}, rng));
    Parameter w("w", random_tensor({4, 2}, rng, 0.6));
    Parameter bias("bias", random_tensor({2}, rng, 0.2));
    Parameter s("s", random_tensor({3}, rng, 0.5));
    Parameter m("m", random_tensor({2, 4}, rng, 0.6));
    std::vector<Parameter*> ps = {&a, &b, &w, &bias, &s, &m};

    double err = diff::grad_check(
        [&](Tape& t) {
          Var av = t.param(a);
          Var bv = t.param(b);
          Var parts = t.concat_cols({av, bv});                      // (3,8)
          Var sl = t.slice_cols(parts, 2, 4);                       // (3,4)
          Var aff = t.affine(sl, t.param(w), t.param(bias));        // (3,2)
          Var mm = t.matmul(aff, t.param(m));                       // (3,4)
          Var mmt = t.matmul(av, t.param(m), /*transpose_b=*/true); // (3,2)
          Var soft = t.softmax_rows(t.relu(mm));                    // (3,4)
          Var gathered = t.gather_rows(soft, {2, 0, 1, 2});         // (4,4)
          Var seg_s = t.segment_sum(gathered, {0, 1, 1, 0}, 2);     // (2,4)
          Var seg_m = t.segment_max(gathered, {0, 1, 1, 0}, 3);     // (3,4)
          Var dist = t.sq_dist_rows(av, bv);                        // (3,1)
          Var cosv = t.cosine_rows(av, bv);                         // (3,1)
          Var scaled = t.row_scale(av, t.param(s));                 // (3,4)
          Var mixed = t.add(t.sub(t.mul(av, bv), scaled), av);      // (3,4)
          Var resh = t.reshape(seg_s, {4, 2});
          Var total = t.add(t.sum_all(mixed), t.sum_all(resh));
          total = t.add(total, t.sum_all(seg_m));
          total = t.add(total, t.sum_all(dist));
          total = t.add(total, t.sum_all(cosv));
          total = t.add(total, t.sum_all(mmt));
          total = t.add(total, t.mean_all(soft));
          total = t.add(total, t.scale(t.add_scalar(t.sum_all(aff), 0.5), 1.7));
          return total;
        },
        ps, kFdStep);
    CHECK(err < kFdTol);
  }
}

TEST_CASE("grad_check: dropout with a fixed mask stream") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RandomSource rng(50 + seed);
    Parameter a("a", random_tensor({4, 6}, rng));
    std::vector<Parameter*> ps = {&a};
    double err = diff::grad_check(
        [&](Tape& t) {
          // fresh stream per evaluation -> identical masks across FD evals
          static thread_local RandomSource mask_rng(0);
          mask_rng = RandomSource(9000 + seed);
          t.set_rng(&mask_rng);
          return t.sum_all(t.dropout(t.param(a), 0.3, true));
        },
        ps, kFdStep);
    CHECK(err < kFdTol);
  }
}

TEST_CASE("determinism: identical seeds give bit-identical forward results") {
  auto run = [](std::uint64_t seed) {
    RandomSource rng(seed);
    Tensor x = random_tensor({6, 5}, rng);
    Tensor w = random_tensor({5, 4}, rng, 0.5);
    Tape t;
    Var y = t.softmax_rows(t.matmul(t.constant(x), t.constant(w)));
    return y.value();
  };
  Tensor a = run(42), b = run(42);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adamw: descent, fixed point, and convergence to a minimizer") {
  {
    diff::ParamStore store;
    Parameter& w = store.create("w", {1});
    w.value[0] = 1.0;
    diff::AdamW opt({.weight_decay = 0.0});
    Tape t;
    Var loss = [&] {
      Var p = t.param(w);
      return t.sum_all(t.mul(p, p));
    }();
    t.backward(loss);
    opt.step(store, 0.1);
    CHECK(w.value[0] < 1.0);
  }
  {
    diff::ParamStore store;
    Parameter& w = store.create("w", {3});
    w.value[0] = 0.3;
    w.value[1] = -0.7;
    w.value[2] = 2.0;
    Tensor before = w.value;
    diff::AdamW opt({.weight_decay = 0.0});
    w.zero_grad();
    opt.step(store, 0.1);
    for (int i = 0; i < 3; ++i) CHECK(w.value[i] == before[i]);
  }
  {
    // min of (w - 0.3)^2 is w* = 0.3
    diff::ParamStore store;
    Parameter& w = store.create("w", {1});
    w.value[0] = 0.5;
    diff::AdamW opt({.weight_decay = 0.0, .amsgrad = true});
    for (int i = 0; i < 100; ++i) {
      store.zero_grad();
      Tape t;
      Var p = t.param(w);
      Var d = t.add_scalar(p, -0.3);
      t.backward(t.sum_all(t.mul(d, d)));
      opt.step(store, 0.02);
    }
    CHECK(std::abs(w.value[0] - 0.3) < 1e-3);
  }
}

TEST_CASE("adamw: rejects non-positive lr") {
  diff::ParamStore store;
  store.create("w", {1});
  diff::AdamW opt;
  CHECK_THROWS_AS(opt.step(store, 0.0), Error);
}

TEST_CASE("param store: deterministic init, unique names") {
  diff::ParamStore store;
  store.create("layer.w", {8, 4});
  store.create("layer.b", {4});
  CHECK_THROWS_AS(store.create("layer.w", {8, 4}), Error);
  diff::init_params(store, 3);
  Tensor w1 = store.at("layer.w").value;
  diff::init_params(store, 3);
  for (std::size_t i = 0; i < w1.size(); ++i)
    CHECK(w1[i] == store.at("layer.w").value[i]);
  for (std::size_t i = 0; i < 4; ++i) CHECK(store.at("layer.b").value[i] == 0.0);
}
