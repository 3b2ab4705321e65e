#include "rmnet/blocks.hpp"

#include <cmath>

namespace rmnet {

ModelGraph preset_graph(const std::string& name, int classes) {
  ModelGraph g;
  g.classes = classes;
  if (name == "rmnet-s") {
    g.in_channels = 3;
    g.in_extent = 64;
    g.trunk = {
        {BlockDesc::Kind::Stem, 16, 1},
        {BlockDesc::Kind::Residual, 16, 1},
        {BlockDesc::Kind::Residual, 16, 1},
        {BlockDesc::Kind::Residual, 32, 2},
        {BlockDesc::Kind::Residual, 32, 1},
    };
    g.hash_bits = 16;
    return g;
  }
  if (name == "tiny") {
    g.in_channels = 3;
    g.in_extent = 16;
    g.trunk = {
        {BlockDesc::Kind::Stem, 8, 1},
        {BlockDesc::Kind::Residual, 8, 1},
        {BlockDesc::Kind::Residual, 16, 2},
    };
    g.hash_bits = 8;
    return g;
  }
  throw config_error("unknown preset '" + name + "' (expected rmnet-s|tiny)");
}

StructureLabel structure_label(const ModelGraph& g) {
  if (!g.span) return StructureLabel::Baseline;
  return g.span->last == static_cast<int>(g.trunk.size())
             ? StructureLabel::Strict
             : StructureLabel::Relaxed;
}

const char* structure_name(StructureLabel s) {
  switch (s) {
    case StructureLabel::Baseline: return "baseline";
    case StructureLabel::Relaxed: return "relaxed";
    case StructureLabel::Strict: return "strict";
  }
  return "?";
}

const char* head_name(HeadKind h) {
  return h == HeadKind::Classifier ? "classifier" : "hasher";
}

HeadKind head_from_name(const std::string& s) {
  if (s == "classifier") return HeadKind::Classifier;
  if (s == "hasher") return HeadKind::Hasher;
  throw config_error("unknown head '" + s + "' (expected classifier|hasher)");
}

template <typename T>
TensorPtr<T> TrunkBlock<T>::forward(Tape<T>& tape, const TensorPtr<T>& x) const {
  if (desc.kind == BlockDesc::Kind::Stem) {
    auto y = conv2d<T>(tape, x, conv1_w, nullptr, 1, 1);
    return relu(tape, channel_affine(tape, y, affine1_g, affine1_b));
  }
  auto h = conv2d<T>(tape, x, conv1_w, nullptr, desc.stride, 1);
  h = relu(tape, channel_affine(tape, h, affine1_g, affine1_b));
  h = conv2d<T>(tape, h, conv2_w, nullptr, 1, 1);
  h = channel_affine(tape, h, affine2_g, affine2_b);
  TensorPtr<T> sc = x;
  if (proj_w) sc = conv2d<T>(tape, x, proj_w, nullptr, desc.stride, 0);
  return relu(tape, add(tape, h, sc));
}

namespace {

template <typename T>
TensorPtr<T> he_conv(Rng& rng, int cout, int cin, int k) {
  auto w = make_tensor<T>(Dims4{cout, cin, k, k});
  double stdev = std::sqrt(2.0 / (double(cin) * k * k));
  fill_normal(*w, rng, 0.0, stdev);
  return w;
}

template <typename T>
TrunkBlock<T> make_block(const BlockDesc& d, int cin, Rng& rng) {
  TrunkBlock<T> b;
  b.desc = d;
  b.in_channels = cin;
  const int c = d.out_channels;
  b.conv1_w = he_conv<T>(rng, c, cin, 3);
  b.affine1_g = make_tensor<T>(Dims4{1, c, 1, 1}, T(1));
  b.affine1_b = make_tensor<T>(Dims4{1, c, 1, 1}, T(0));
  if (d.kind == BlockDesc::Kind::Residual) {
    b.conv2_w = he_conv<T>(rng, c, c, 3);
    // Damped output scale starts every residual branch near the identity,
    // which keeps deep stacks trainable without batch statistics.
    b.affine2_g = make_tensor<T>(Dims4{1, c, 1, 1}, T(0.1));
    b.affine2_b = make_tensor<T>(Dims4{1, c, 1, 1}, T(0));
    if (cin != c || d.stride != 1) b.proj_w = he_conv<T>(rng, c, cin, 1);
  }
  return b;
}

template <typename T>
void collect_block(const std::string& prefix, const TrunkBlock<T>& b,
                   std::vector<std::pair<std::string, TensorPtr<T>>>& out) {
  if (b.desc.kind == BlockDesc::Kind::Stem) {
    out.emplace_back(prefix + ".conv.w", b.conv1_w);
    out.emplace_back(prefix + ".affine.g", b.affine1_g);
    out.emplace_back(prefix + ".affine.b", b.affine1_b);
    return;
  }
  out.emplace_back(prefix + ".conv1.w", b.conv1_w);
  out.emplace_back(prefix + ".affine1.g", b.affine1_g);
  out.emplace_back(prefix + ".affine1.b", b.affine1_b);
  out.emplace_back(prefix + ".conv2.w", b.conv2_w);
  out.emplace_back(prefix + ".affine2.g", b.affine2_g);
  out.emplace_back(prefix + ".affine2.b", b.affine2_b);
  if (b.proj_w) out.emplace_back(prefix + ".proj.w", b.proj_w);
}

}  // namespace

template <typename T>
TensorPtr<T> Model<T>::run_pre(Tape<T>& tape, const TensorPtr<T>& x) const {
  int end = graph.span ? graph.span->first - 1 : static_cast<int>(blocks.size());
  auto h = x;
  for (int i = 0; i < end; ++i) h = blocks[i].forward(tape, h);
  return h;
}

template <typename T>
TensorPtr<T> Model<T>::run_span_plain(Tape<T>& tape, const TensorPtr<T>& f,
                                      int branch) const {
  if (!graph.span) throw contract_error("model has no rotation span");
  auto h = f;
  if (branch > 0 && !graph.rm.weight_sharing) {
    const auto& set = span_clones.at(static_cast<size_t>(branch - 1));
    for (const auto& b : set) h = b.forward(tape, h);
    return h;
  }
  for (int i = graph.span->first - 1; i <= graph.span->last - 1; ++i)
    h = blocks[static_cast<size_t>(i)].forward(tape, h);
  return h;
}

template <typename T>
BranchFn<T> Model<T>::branch_fn() const {
  BranchFn<T> fn;
  fn.run = [this](Tape<T>& tape, const TensorPtr<T>& in, int branch) {
    return run_span_plain(tape, in, branch);
  };
  fn.downsample = span_downsample();
  fn.embed_w = embed_w;
  fn.embed_b = embed_b;
  return fn;
}

template <typename T>
TensorPtr<T> Model<T>::run_span_rm(Tape<T>& tape, const TensorPtr<T>& f) const {
  if (!graph.span) throw contract_error("model has no rotation span");
  return rm_forward(tape, f, branch_fn(), graph.rm);
}

template <typename T>
TensorPtr<T> Model<T>::run_post(Tape<T>& tape, const TensorPtr<T>& f) const {
  if (!graph.span) return f;
  auto h = f;
  for (size_t i = static_cast<size_t>(graph.span->last); i < blocks.size(); ++i)
    h = blocks[i].forward(tape, h);
  return h;
}

template <typename T>
TensorPtr<T> Model<T>::features(Tape<T>& tape, const TensorPtr<T>& x) const {
  auto h = run_pre(tape, x);
  if (graph.span) h = run_post(tape, run_span_rm(tape, h));
  return h;
}

template <typename T>
TensorPtr<T> Model<T>::pooled(Tape<T>& tape, const TensorPtr<T>& x) const {
  return global_avg_pool(tape, features(tape, x));
}

template <typename T>
TensorPtr<T> Model<T>::embedding_vec(Tape<T>& tape,
                                     const TensorPtr<T>& x) const {
  if (graph.head != HeadKind::Hasher)
    throw contract_error("embedding_vec requires the hasher head");
  return linear(tape, pooled(tape, x), hash_w, hash_b);
}

template <typename T>
TensorPtr<T> Model<T>::logits(Tape<T>& tape, const TensorPtr<T>& x) const {
  auto h = graph.head == HeadKind::Hasher ? embedding_vec(tape, x)
                                          : pooled(tape, x);
  return linear(tape, h, cls_w, cls_b);
}

template <typename T>
int Model<T>::span_downsample() const {
  if (!graph.span) return 1;
  int s = 1;
  for (int i = graph.span->first - 1; i <= graph.span->last - 1; ++i)
    s *= blocks[static_cast<size_t>(i)].desc.stride;
  return s;
}

template <typename T>
Dims4 Model<T>::span_input_dims(int batch) const {
  int c = graph.in_channels;
  int e = graph.in_extent;
  int end = graph.span ? graph.span->first - 1 : 0;
  for (int i = 0; i < end; ++i) {
    c = blocks[static_cast<size_t>(i)].desc.out_channels;
    e /= blocks[static_cast<size_t>(i)].desc.stride;
  }
  return Dims4{batch, c, e, e};
}

template <typename T>
std::vector<std::pair<std::string, TensorPtr<T>>> Model<T>::named_params()
    const {
  std::vector<std::pair<std::string, TensorPtr<T>>> out;
  for (size_t i = 0; i < blocks.size(); ++i)
    collect_block("trunk" + std::to_string(i + 1), blocks[i], out);
  for (size_t b = 0; b < span_clones.size(); ++b) {
    const int first = graph.span->first;
    for (size_t j = 0; j < span_clones[b].size(); ++j)
      collect_block("branch" + std::to_string(b + 1) + ".trunk" +
                        std::to_string(first + static_cast<int>(j)),
                    span_clones[b][j], out);
  }
  if (embed_w) out.emplace_back("rm.embed.w", embed_w);
  if (embed_b) out.emplace_back("rm.embed.b", embed_b);
  if (hash_w) out.emplace_back("head.hash.w", hash_w);
  if (hash_b) out.emplace_back("head.hash.b", hash_b);
  out.emplace_back("head.cls.w", cls_w);
  out.emplace_back("head.cls.b", cls_b);
  return out;
}

template <typename T>
std::vector<TensorPtr<T>> Model<T>::params() const {
  std::vector<TensorPtr<T>> out;
  for (auto& [name, p] : named_params()) out.push_back(p);
  return out;
}

template <typename T>
int64_t Model<T>::param_count() const {
  int64_t n = 0;
  for (auto& [name, p] : named_params()) n += p->size();
  return n;
}

template <typename T>
Model<T> build_model(const ModelGraph& graph, uint64_t seed) {
  if (graph.trunk.empty()) throw config_error("model: empty trunk");
  if (graph.in_channels < 1 || graph.in_extent < 1)
    throw config_error("model: bad input dims");
  if (graph.classes < 2) throw config_error("model: needs >= 2 classes");
  const int nblocks = static_cast<int>(graph.trunk.size());
  if (graph.span) {
    if (graph.span->first < 1 || graph.span->last > nblocks ||
        graph.span->first > graph.span->last)
      throw config_error("model: span " + std::to_string(graph.span->first) +
                         ":" + std::to_string(graph.span->last) +
                         " out of range for " + std::to_string(nblocks) +
                         " trunk blocks");
    graph.rm.validate();
  }

  // Shape chain: every stride-2 stage must halve an even extent.
  int e = graph.in_extent;
  for (int i = 0; i < nblocks; ++i) {
    const auto& d = graph.trunk[i];
    if (d.stride != 1 && d.stride != 2)
      throw config_error("model: block " + std::to_string(i + 1) +
                         " has unsupported stride " + std::to_string(d.stride));
    if (d.stride == 2 && e % 2 != 0)
      throw config_error("model: block " + std::to_string(i + 1) +
                         " downsamples an odd extent " + std::to_string(e));
    e /= d.stride;
    if (e < 1)
      throw config_error("model: block " + std::to_string(i + 1) +
                         " shrinks the extent to zero");
  }

  Model<T> m;
  m.graph = graph;
  Rng rng(mix_seed(seed, 0x6d6f64656cull));
  int cin = graph.in_channels;
  for (int i = 0; i < nblocks; ++i) {
    if (i == 0 && graph.trunk[i].kind != BlockDesc::Kind::Stem)
      throw config_error("model: block 1 must be the stem");
    if (i > 0 && graph.trunk[i].kind == BlockDesc::Kind::Stem)
      throw config_error("model: stem must be block 1 only");
    m.blocks.push_back(make_block<T>(graph.trunk[i], cin, rng));
    cin = graph.trunk[i].out_channels;
  }

  if (graph.span) {
    // Span-entry extent must survive the span's total stride and, in
    // interpolated mode, admit an aligned canvas.
    Dims4 sd = m.span_input_dims(1);
    int s = m.span_downsample();
    if (sd.h % s != 0)
      throw config_error("model: span entry extent " + std::to_string(sd.h) +
                         " not divisible by span downsample " +
                         std::to_string(s));
    if (graph.rm.interp == InterpMode::Bilinear && graph.rm.canvas == 0)
      m.graph.rm.canvas = pick_canvas(sd.h, sd.w, s);

    if (!graph.rm.weight_sharing) {
      Rng crng(mix_seed(seed, 0x636c6f6e65ull));
      for (int b = 1; b < graph.rm.k; ++b) {
        std::vector<TrunkBlock<T>> set;
        int ci = sd.c;
        for (int i = graph.span->first - 1; i <= graph.span->last - 1; ++i) {
          set.push_back(make_block<T>(graph.trunk[static_cast<size_t>(i)], ci,
                                      crng));
          ci = graph.trunk[static_cast<size_t>(i)].out_channels;
        }
        m.span_clones.push_back(std::move(set));
      }
    }

    if (graph.rm.fusion == Fusion::Embedding) {
      const int c =
          graph.trunk[static_cast<size_t>(graph.span->last - 1)].out_channels;
      // Start as exact block averaging over the k branches.
      m.embed_w = make_tensor<T>(Dims4{c, graph.rm.k * c, 1, 1}, T(0));
      for (int co = 0; co < c; ++co)
        for (int b = 0; b < graph.rm.k; ++b)
          m.embed_w->at(co, b * c + co, 0, 0) =
              static_cast<T>(1.0 / graph.rm.k);
      m.embed_b = make_tensor<T>(Dims4{1, c, 1, 1}, T(0));
    }
  }

  const int feat_c = graph.trunk.back().out_channels;
  int head_in = feat_c;
  if (graph.head == HeadKind::Hasher) {
    if (graph.hash_bits < 1) throw config_error("model: hash_bits must be >= 1");
    m.hash_w = make_tensor<T>(Dims4{graph.hash_bits, feat_c, 1, 1});
    fill_normal(*m.hash_w, rng, 0.0, std::sqrt(1.0 / feat_c));
    m.hash_b = make_tensor<T>(Dims4{1, graph.hash_bits, 1, 1}, T(0));
    head_in = graph.hash_bits;
  }
  m.cls_w = make_tensor<T>(Dims4{graph.classes, head_in, 1, 1});
  fill_normal(*m.cls_w, rng, 0.0, std::sqrt(1.0 / head_in));
  m.cls_b = make_tensor<T>(Dims4{1, graph.classes, 1, 1}, T(0));
  return m;
}

template struct TrunkBlock<float>;
template struct TrunkBlock<double>;
template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelGraph&, uint64_t);
template Model<double> build_model<double>(const ModelGraph&, uint64_t);

}  // namespace rmnet
