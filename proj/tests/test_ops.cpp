#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rmnet/ops.hpp"

using namespace rmnet;

namespace {

TensorPtr<double> rand_tensor(Dims4 d, Rng& rng, double lo = -1, double hi = 1) {
  auto t = make_tensor<double>(d);
  fill_uniform(*t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise add/sub/mul values and grads") {
  Rng rng(1);
  auto a = rand_tensor(Dims4{2, 3, 2, 2}, rng);
  auto b = rand_tensor(Dims4{2, 3, 2, 2}, rng);
  a->ensure_grad();
  b->ensure_grad();
  Tape<double> tape;
  auto s = add(tape, a, b);
  auto d = sub(tape, a, b);
  auto m = mul(tape, a, b);
  for (int64_t i = 0; i < a->size(); ++i) {
    CHECK(s->v[size_t(i)] == doctest::Approx(a->v[size_t(i)] + b->v[size_t(i)]));
    CHECK(d->v[size_t(i)] == doctest::Approx(a->v[size_t(i)] - b->v[size_t(i)]));
    CHECK(m->v[size_t(i)] == doctest::Approx(a->v[size_t(i)] * b->v[size_t(i)]));
  }
  auto loss = reduce_sum(tape, m);
  tape.backward(loss);
  for (int64_t i = 0; i < a->size(); ++i) {
    CHECK(a->g[size_t(i)] == doctest::Approx(b->v[size_t(i)]));
    CHECK(b->g[size_t(i)] == doctest::Approx(a->v[size_t(i)]));
  }
}

TEST_CASE("channel broadcast add") {
  Rng rng(2);
  auto x = rand_tensor(Dims4{2, 3, 4, 4}, rng);
  auto bias = rand_tensor(Dims4{1, 3, 1, 1}, rng);
  Tape<double> tape;
  auto y = add(tape, x, bias);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
          CHECK(y->at(n, c, h, w) ==
                doctest::Approx(x->at(n, c, h, w) + bias->at(0, c, 0, 0)));
  bias->ensure_grad();
  auto loss = reduce_sum(tape, y);
  tape.backward(loss);
  for (int c = 0; c < 3; ++c)
    CHECK(bias->g[size_t(c)] == doctest::Approx(2 * 4 * 4));
}

TEST_CASE("shape mismatch raises shape_error") {
  auto a = make_tensor<double>(Dims4{1, 2, 2, 2});
  auto b = make_tensor<double>(Dims4{1, 2, 2, 3});
  Tape<double> tape;
  CHECK_THROWS_AS(add(tape, a, b), shape_error);
  CHECK_THROWS_AS(mul(tape, a, b), shape_error);
}

TEST_CASE("relu forward and masked backward") {
  auto x = make_tensor<double>(Dims4{1, 1, 1, 4});
  x->v = {-2, -0.5, 0.5, 2};
  x->ensure_grad();
  Tape<double> tape;
  auto y = relu(tape, x);
  CHECK(y->v[0] == 0);
  CHECK(y->v[1] == 0);
  CHECK(y->v[2] == 0.5);
  CHECK(y->v[3] == 2);
  auto loss = reduce_sum(tape, y);
  tape.backward(loss);
  CHECK(x->g[0] == 0);
  CHECK(x->g[1] == 0);
  CHECK(x->g[2] == 1);
  CHECK(x->g[3] == 1);
}

TEST_CASE("conv2d matches the 7-loop oracle across shapes") {
  Rng rng(3);
  struct Case {
    Dims4 x, w;
    int stride, pad;
  };
  const Case cases[] = {
      {{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
      {{1, 2, 7, 7}, {3, 2, 3, 3}, 2, 1},
      {{2, 4, 6, 6}, {2, 4, 1, 1}, 1, 0},
      {{1, 1, 5, 5}, {1, 1, 5, 5}, 1, 0},
      {{1, 3, 9, 9}, {5, 3, 3, 3}, 2, 0},
  };
  for (const auto& cs : cases) {
    auto x = rand_tensor(cs.x, rng);
    auto w = rand_tensor(cs.w, rng);
    auto b = rand_tensor(Dims4{1, cs.w.n, 1, 1}, rng);
    Tape<double> tape;
    auto y = conv2d(tape, x, w, b, cs.stride, cs.pad);
    auto ref = oracle::naive_conv2d(*x, *w, b.get(), cs.stride, cs.pad);
    REQUIRE(y->dims == ref.dims);
    double maxerr = 0;
    for (int64_t i = 0; i < y->size(); ++i)
      maxerr = std::max(maxerr, std::abs(y->v[size_t(i)] - ref.v[size_t(i)]));
    CHECK(maxerr < 1e-12);
  }
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  auto x = make_tensor<double>(Dims4{1, 1, 3, 3});
  auto w = make_tensor<double>(Dims4{1, 1, 5, 5});
  Tape<double> tape;
  CHECK_THROWS_AS(conv2d(tape, x, w, TensorPtr<double>{}, 1, 0), shape_error);
}

TEST_CASE("conv2d identity kernel passes input through") {
  Rng rng(4);
  auto x = rand_tensor(Dims4{1, 1, 6, 6}, rng);
  auto w = make_tensor<double>(Dims4{1, 1, 3, 3});
  w->v[4] = 1.0;  // center tap only
  Tape<double> tape;
  auto y = conv2d(tape, x, w, TensorPtr<double>{}, 1, 1);
  REQUIRE(y->dims == x->dims);
  for (int64_t i = 0; i < x->size(); ++i)
    CHECK(y->v[size_t(i)] == doctest::Approx(x->v[size_t(i)]));
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(5);
  auto x = rand_tensor(Dims4{2, 2, 5, 5}, rng);
  auto w = rand_tensor(Dims4{3, 2, 3, 3}, rng, -0.5, 0.5);
  auto b = rand_tensor(Dims4{1, 3, 1, 1}, rng, -0.1, 0.1);
  for (auto& t : {x, w, b}) t->ensure_grad();

  auto forward = [&](Tape<double>* tape) {
    Tape<double> local;
    Tape<double>& tp = tape ? *tape : local;
    auto y = conv2d(tp, x, w, b, 2, 1);
    auto sq = mul(tp, y, y);
    auto loss = reduce_mean(tp, sq);
    return loss;
  };
  Tape<double> tape;
  auto loss = forward(&tape);
  tape.backward(loss);
  Rng pick(6);
  auto fd = oracle::fd_compare(
      {{"x", x.get()}, {"w", w.get()}, {"b", b.get()}},
      [&] { return forward(nullptr)->v[0]; }, pick);
  INFO("worst ", fd.worst, " analytic ", fd.analytic, " numeric ", fd.numeric);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("linear matches a 1x1 conv and its grads") {
  Rng rng(7);
  auto x = rand_tensor(Dims4{3, 5, 1, 1}, rng);
  auto w = rand_tensor(Dims4{4, 5, 1, 1}, rng);
  auto b = rand_tensor(Dims4{1, 4, 1, 1}, rng);
  Tape<double> tape;
  auto y = linear(tape, x, w, b);
  auto ref = oracle::naive_conv2d(*x, *w, b.get(), 1, 0);
  REQUIRE(y->dims == ref.dims);
  for (int64_t i = 0; i < y->size(); ++i)
    CHECK(y->v[size_t(i)] == doctest::Approx(ref.v[size_t(i)]));

  for (auto& t : {x, w, b}) t->ensure_grad();
  auto forward = [&]() {
    Tape<double> tp;
    auto yy = linear(tp, x, w, b);
    auto loss = reduce_sum(tp, mul(tp, yy, yy));
    return loss->v[0];
  };
  Tape<double> tp2;
  auto yy = linear(tp2, x, w, b);
  auto loss = reduce_sum(tp2, mul(tp2, yy, yy));
  tp2.backward(loss);
  Rng pick(8);
  auto fd = oracle::fd_compare({{"x", x.get()}, {"w", w.get()}, {"b", b.get()}},
                               forward, pick);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("global_avg_pool averages each plane") {
  auto x = make_tensor<double>(Dims4{1, 2, 2, 2});
  x->v = {1, 2, 3, 4, 10, 20, 30, 40};
  x->ensure_grad();
  Tape<double> tape;
  auto y = global_avg_pool(tape, x);
  REQUIRE(y->dims == (Dims4{1, 2, 1, 1}));
  CHECK(y->v[0] == doctest::Approx(2.5));
  CHECK(y->v[1] == doctest::Approx(25.0));
  auto loss = reduce_sum(tape, y);
  tape.backward(loss);
  for (int64_t i = 0; i < x->size(); ++i)
    CHECK(x->g[size_t(i)] == doctest::Approx(0.25));
}

TEST_CASE("concat_channels stacks and routes grads") {
  auto a = make_tensor<double>(Dims4{1, 1, 1, 2});
  auto b = make_tensor<double>(Dims4{1, 2, 1, 2});
  a->v = {1, 2};
  b->v = {3, 4, 5, 6};
  a->ensure_grad();
  b->ensure_grad();
  Tape<double> tape;
  auto y = concat_channels(tape, {a, b});
  REQUIRE(y->dims == (Dims4{1, 3, 1, 2}));
  CHECK(y->v == std::vector<double>{1, 2, 3, 4, 5, 6});
  auto loss = reduce_sum(tape, mul(tape, y, y));
  tape.backward(loss);
  CHECK(a->g[0] == doctest::Approx(2.0));
  CHECK(b->g[3] == doctest::Approx(12.0));

  auto bad = make_tensor<double>(Dims4{1, 1, 2, 2});
  CHECK_THROWS_AS(concat_channels(tape, {a, bad}), shape_error);
}

TEST_CASE("channel_affine forward and grads") {
  Rng rng(9);
  auto x = rand_tensor(Dims4{2, 3, 3, 3}, rng);
  auto gmm = rand_tensor(Dims4{1, 3, 1, 1}, rng, 0.5, 1.5);
  auto bta = rand_tensor(Dims4{1, 3, 1, 1}, rng, -0.2, 0.2);
  for (auto& t : {x, gmm, bta}) t->ensure_grad();
  Tape<double> tape;
  auto y = channel_affine(tape, x, gmm, bta);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w)
          CHECK(y->at(n, c, h, w) ==
                doctest::Approx(x->at(n, c, h, w) * gmm->at(0, c, 0, 0) +
                                bta->at(0, c, 0, 0)));
  auto loss = reduce_mean(tape, mul(tape, y, y));
  tape.backward(loss);
  auto forward = [&]() {
    Tape<double> tp;
    auto yy = channel_affine(tp, x, gmm, bta);
    return reduce_mean(tp, mul(tp, yy, yy))->v[0];
  };
  Rng pick(10);
  auto fd = oracle::fd_compare(
      {{"x", x.get()}, {"gamma", gmm.get()}, {"beta", bta.get()}}, forward,
      pick);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("softmax cross-entropy: values, grads, class weights") {
  Rng rng(11);
  auto z = rand_tensor(Dims4{4, 3, 1, 1}, rng, -2, 2);
  const std::vector<int> labels = {0, 2, 1, 2};
  const std::vector<double> weights = {1.0, 0.5, 2.0};

  // reference: direct formula in long double
  auto ref_loss = [&]() {
    long double total = 0;
    for (int n = 0; n < 4; ++n) {
      long double mx = z->at(n, 0, 0, 0);
      for (int c = 1; c < 3; ++c) mx = std::max(mx, (long double)z->at(n, c, 0, 0));
      long double sum = 0;
      for (int c = 0; c < 3; ++c) sum += expl(z->at(n, c, 0, 0) - mx);
      const long double logp =
          (z->at(n, labels[size_t(n)], 0, 0) - mx) - logl(sum);
      total += -weights[size_t(labels[size_t(n)])] * logp;
    }
    return double(total / 4);
  };

  z->ensure_grad();
  Tape<double> tape;
  auto loss = weighted_softmax_ce(tape, z, labels, weights);
  CHECK(loss->v[0] == doctest::Approx(ref_loss()).epsilon(1e-12));
  tape.backward(loss);

  auto forward = [&]() {
    Tape<double> tp;
    return weighted_softmax_ce(tp, z, labels, weights)->v[0];
  };
  Rng pick(12);
  auto fd = oracle::fd_compare({{"z", z.get()}}, forward, pick, 12);
  CHECK(fd.max_rel < 1e-4);

  // softmax_rows agrees with exp-normalize
  auto probs = softmax_rows(*z);
  for (int n = 0; n < 4; ++n) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += probs.at(n, c, 0, 0);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("weighted ce rejects bad labels and weight lengths") {
  auto z = make_tensor<double>(Dims4{2, 3, 1, 1});
  Tape<double> tape;
  CHECK_THROWS_AS(weighted_softmax_ce(tape, z, {0, 3}, {1, 1, 1}),
                  contract_error);
  CHECK_THROWS_AS(weighted_softmax_ce(tape, z, {0, 1}, {1, 1}),
                  contract_error);
}

TEST_CASE("conv2d is deterministic across thread counts") {
  Rng rng(13);
  auto x = rand_tensor(Dims4{4, 3, 12, 12}, rng);
  auto w = rand_tensor(Dims4{6, 3, 3, 3}, rng);
  auto b = rand_tensor(Dims4{1, 6, 1, 1}, rng);

  std::vector<double> first;
  for (int threads : {1, 2, 4}) {
    ThreadGuard guard(threads);
    Tape<double> tape;
    auto y = conv2d(tape, x, w, b, 1, 1);
    if (first.empty()) first = y->v;
    else CHECK(first == y->v);  // bitwise equal
  }
}
