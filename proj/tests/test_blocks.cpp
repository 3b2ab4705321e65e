#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "rmnet/blocks.hpp"

using namespace rmnet;

namespace {

ModelGraph tiny_graph(int classes = 4) {
  ModelGraph g = preset_graph("tiny", classes);
  return g;
}

TensorPtr<double> rand_input(const ModelGraph& g, int batch, Rng& rng) {
  auto x = make_tensor<double>(
      Dims4{batch, g.in_channels, g.in_extent, g.in_extent});
  fill_uniform(*x, rng, -1, 1);
  return x;
}

double max_abs_diff(const Tensor4<double>& a, const Tensor4<double>& b) {
  REQUIRE(a.dims == b.dims);
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.v[size_t(i)] - b.v[size_t(i)]));
  return m;
}

}  // namespace

TEST_CASE("presets and structure labels") {
  ModelGraph s = preset_graph("rmnet-s", 8);
  CHECK(s.in_extent == 64);
  CHECK(s.trunk.size() == 5);
  CHECK(s.trunk[0].kind == BlockDesc::Kind::Stem);
  CHECK(structure_label(s) == StructureLabel::Baseline);

  s.span = RmSpan{1, 5};
  CHECK(structure_label(s) == StructureLabel::Strict);
  s.span = RmSpan{1, 3};
  CHECK(structure_label(s) == StructureLabel::Relaxed);

  ModelGraph t = tiny_graph();
  CHECK(t.in_extent == 16);
  CHECK(t.trunk.size() == 3);

  CHECK_THROWS_AS(preset_graph("huge", 8), config_error);
  CHECK(std::string(structure_name(StructureLabel::Strict)) == "strict");
  CHECK(head_from_name("hasher") == HeadKind::Hasher);
  CHECK(head_from_name("classifier") == HeadKind::Classifier);
  CHECK_THROWS_AS(head_from_name("decoder"), config_error);
}

TEST_CASE("build_model validates the graph") {
  ModelGraph g = tiny_graph();
  CHECK_NOTHROW(build_model<double>(g, 0));

  // span out of bounds
  g.span = RmSpan{0, 2};
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);
  g.span = RmSpan{2, 9};
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);
  g.span = RmSpan{3, 2};
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);

  // bad class count
  g = tiny_graph();
  g.classes = 1;
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);

  // stem after the first block
  g = tiny_graph(4);
  g.trunk.push_back(BlockDesc{BlockDesc::Kind::Stem, 8, 1});
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);

  // stride must divide the running extent evenly
  g = tiny_graph(4);
  g.in_extent = 15;
  CHECK_THROWS_AS(build_model<double>(g, 0), config_error);
}

TEST_CASE("residual blocks: shapes, projection, forward plumbing") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{2, 3};
  auto m = build_model<double>(g, 7);

  // stem has no second conv; residual with channel change gets a projection
  CHECK(m.blocks[0].conv2_w == nullptr);
  CHECK(m.blocks[1].proj_w == nullptr);   // 8 -> 8, stride 1
  CHECK(m.blocks[2].proj_w != nullptr);   // 8 -> 16, stride 2

  Rng rng(1);
  auto x = rand_input(g, 2, rng);
  Tape<double> tape;
  auto f = m.features(tape, x);
  CHECK(f->dims == (Dims4{2, 16, 8, 8}));
  auto p = m.pooled(tape, x);
  CHECK(p->dims == (Dims4{2, 16, 1, 1}));
  auto z = m.logits(tape, x);
  CHECK(z->dims == (Dims4{2, 4, 1, 1}));
}

TEST_CASE("named params cover every tensor exactly once") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{2, 3};
  g.rm.fusion = Fusion::Embedding;
  g.head = HeadKind::Hasher;
  auto m = build_model<double>(g, 3);

  auto named = m.named_params();
  std::set<std::string> names;
  int64_t total = 0;
  for (const auto& [name, t] : named) {
    CHECK(names.insert(name).second);  // unique
    CHECK(t != nullptr);
    total += t->size();
  }
  CHECK(total == m.param_count());
  // spot names
  CHECK(names.count("trunk1.conv.w"));
  CHECK(names.count("trunk2.conv1.w"));
  CHECK(names.count("trunk3.proj.w"));
  CHECK(names.count("rm.embed.w"));
  CHECK(names.count("head.hash.w"));
  CHECK(names.count("head.cls.w"));
}

TEST_CASE("rotation wrap adds zero parameters for meanout and maxout") {
  for (const char* preset : {"tiny", "rmnet-s"}) {
    ModelGraph base = preset_graph(preset, 8);
    auto m0 = build_model<double>(base, 0);

    ModelGraph wrapped = base;
    wrapped.span = RmSpan{1, int(base.trunk.size())};
    for (Fusion fu : {Fusion::Meanout, Fusion::Maxout}) {
      wrapped.rm.fusion = fu;
      auto m1 = build_model<double>(wrapped, 0);
      CHECK(m1.param_count() == m0.param_count());  // integer-identical
    }

    // embedding fusion adds its 1x1 fusion map; nothing else
    wrapped.rm.fusion = Fusion::Embedding;
    auto m2 = build_model<double>(wrapped, 0);
    const auto& tail = base.trunk.back();
    const int c = tail.out_channels;
    CHECK(m2.param_count() ==
          m0.param_count() + int64_t(c) * (wrapped.rm.k * c) + c);
  }
}

TEST_CASE("disabling weight sharing multiplies span parameters by k") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{2, 3};
  auto shared = build_model<double>(g, 0);
  g.rm.weight_sharing = false;
  auto unshared = build_model<double>(g, 0);

  // span blocks 2..3 counted k times instead of once
  int64_t span_params = 0;
  for (const auto& [name, t] : shared.named_params())
    if (name.rfind("trunk2.", 0) == 0 || name.rfind("trunk3.", 0) == 0)
      span_params += t->size();
  CHECK(unshared.param_count() ==
        shared.param_count() + int64_t(g.rm.k - 1) * span_params);
  CHECK(unshared.span_clones.size() == size_t(g.rm.k - 1));

  // clone parameters differ from the originals (independent init)
  bool any_diff = false;
  for (size_t b = 0; b < unshared.span_clones.size(); ++b)
    if (unshared.span_clones[b][0].conv1_w->v !=
        unshared.blocks[1].conv1_w->v)
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("same seed same weights, different seed different weights") {
  ModelGraph g = tiny_graph();
  auto a = build_model<double>(g, 5);
  auto b = build_model<double>(g, 5);
  auto c = build_model<double>(g, 6);
  CHECK(a.blocks[0].conv1_w->v == b.blocks[0].conv1_w->v);
  CHECK(a.blocks[0].conv1_w->v != c.blocks[0].conv1_w->v);
}

TEST_CASE("model logits are finite and batch-consistent") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{1, 3};
  auto m = build_model<double>(g, 2);
  Rng rng(3);
  auto x2 = rand_input(g, 2, rng);
  Tape<double> tape;
  auto z2 = m.logits(tape, x2);
  z2->check_finite("logits");

  // item 0 alone gives the same logits as item 0 in a batch
  auto x1 = make_tensor<double>(Dims4{1, g.in_channels, 16, 16});
  std::copy(x2->v.begin(), x2->v.begin() + x1->size(), x1->v.begin());
  auto z1 = m.logits(tape, x1);
  for (int c = 0; c < g.classes; ++c)
    CHECK(z1->at(0, c, 0, 0) == doctest::Approx(z2->at(0, c, 0, 0)).epsilon(1e-12));
}

TEST_CASE("embedding_vec requires the hasher head and has hash_bits width") {
  ModelGraph g = tiny_graph();
  g.head = HeadKind::Hasher;
  g.hash_bits = 8;
  auto m = build_model<double>(g, 1);
  Rng rng(4);
  auto x = rand_input(g, 2, rng);
  Tape<double> tape;
  auto e = m.embedding_vec(tape, x);
  CHECK(e->dims == (Dims4{2, 8, 1, 1}));

  ModelGraph gc = tiny_graph();
  auto mc = build_model<double>(gc, 1);
  CHECK_THROWS_AS(mc.embedding_vec(tape, x), contract_error);
}

TEST_CASE("strict spans make pooled features rotation invariant") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{1, 3};  // strict: ends at the last block
  auto m = build_model<double>(g, 11);
  Rng rng(5);
  auto x = rand_input(g, 2, rng);
  Tape<double> tape;
  auto p0 = m.pooled(tape, x);
  for (int i = 1; i < 4; ++i) {
    auto pr = m.pooled(tape, rot90_exact(tape, x, i));
    CHECK(max_abs_diff(*pr, *p0) < 1e-12);
  }
  // logits inherit the invariance in the strict layout
  auto z0 = m.logits(tape, x);
  auto z1 = m.logits(tape, rot90_exact(tape, x, 1));
  CHECK(max_abs_diff(*z1, *z0) < 1e-12);
}

TEST_CASE("relaxed spans: equivariant inside, not invariant end to end") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{1, 2};  // block 3 (stride 2) stays outside
  auto m = build_model<double>(g, 12);
  Rng rng(6);
  auto x = rand_input(g, 1, rng);
  Tape<double> tape;

  // span output is equivariant, so pooling it directly is invariant
  auto f0 = m.run_pre(tape, x);
  auto s0 = m.run_span_rm(tape, f0);
  auto f1 = m.run_pre(tape, rot90_exact(tape, x, 1));
  auto s1 = m.run_span_rm(tape, f1);
  auto s0r = rot90_exact(tape, s0, 1);
  CHECK(max_abs_diff(*s1, *s0r) < 1e-12);
  auto g0 = global_avg_pool(tape, s0);
  auto g1 = global_avg_pool(tape, s1);
  CHECK(max_abs_diff(*g1, *g0) < 1e-12);

  // the trailing conv block does not commute with rotation, so the model's
  // own pooled features drift for rotated inputs
  auto p0 = m.pooled(tape, x);
  auto p1 = m.pooled(tape, rot90_exact(tape, x, 1));
  CHECK(max_abs_diff(*p1, *p0) > 1e-9);
}

TEST_CASE("model gradients flow to every parameter") {
  ModelGraph g = tiny_graph();
  g.span = RmSpan{2, 3};
  auto m = build_model<double>(g, 13);
  Rng rng(7);
  auto x = rand_input(g, 2, rng);
  for (auto& p : m.params()) p->ensure_grad();

  Tape<double> tape;
  auto z = m.logits(tape, x);
  auto loss = weighted_softmax_ce(tape, z, {0, 2}, {1, 1, 1, 1});
  tape.backward(loss);

  for (const auto& [name, p] : m.named_params()) {
    double norm = 0;
    for (double gv : p->g) norm += gv * gv;
    INFO("param ", name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("model gradients match finite differences end to end") {
  ModelGraph g = tiny_graph(3);
  g.in_extent = 8;  // small for speed; stride-2 block still fits
  g.span = RmSpan{2, 3};
  auto m = build_model<double>(g, 14);
  Rng rng(8);
  auto x = make_tensor<double>(Dims4{2, 3, 8, 8});
  fill_uniform(*x, rng, -1, 1);
  const std::vector<int> labels = {0, 2};
  const std::vector<double> weights = {1.0, 1.2, 0.8};

  auto forward = [&]() {
    Tape<double> tp;
    auto z = m.logits(tp, x);
    return weighted_softmax_ce(tp, z, labels, weights)->v[0];
  };
  for (auto& p : m.params()) p->ensure_grad();
  Tape<double> tape;
  auto z = m.logits(tape, x);
  auto loss = weighted_softmax_ce(tape, z, labels, weights);
  tape.backward(loss);

  std::vector<std::pair<std::string, Tensor4<double>*>> leaves;
  for (const auto& [name, p] : m.named_params())
    leaves.emplace_back(name, p.get());
  Rng pick(9);
  auto fd = oracle::fd_compare(leaves, forward, pick, 6);
  INFO("worst ", fd.worst, " analytic ", fd.analytic, " numeric ",
       fd.numeric);
  CHECK(fd.max_rel < 1e-4);
}
