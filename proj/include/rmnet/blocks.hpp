#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmnet/rm.hpp"

namespace rmnet {

// One trunk unit descriptor. Stem: 3x3 conv + channel affine + relu.
// Residual: two 3x3 conv/affine stages with identity (or 1x1 projection)
// shortcut; `stride` applies to the first conv and the projection.
struct BlockDesc {
  enum class Kind { Stem, Residual };
  Kind kind = Kind::Residual;
  int out_channels = 16;
  int stride = 1;
};

enum class HeadKind { Classifier, Hasher };
enum class StructureLabel { Baseline, Relaxed, Strict };

// 1-based inclusive range of trunk blocks wrapped by the rotation operator.
struct RmSpan {
  int first = 1;
  int last = 1;
};

struct ModelGraph {
  int in_channels = 3;
  int in_extent = 64;
  std::vector<BlockDesc> trunk;
  std::optional<RmSpan> span;
  RmConfig rm;
  HeadKind head = HeadKind::Classifier;
  int classes = 8;
  int hash_bits = 16;
};

// "rmnet-s" (64x64 input) or "tiny" (16x16 input, test-sized).
ModelGraph preset_graph(const std::string& name, int classes);

// Baseline: no span. Strict: span ends at the last trunk block, so the fused
// features feed straight into global pooling. Relaxed: anything else.
StructureLabel structure_label(const ModelGraph& g);
const char* structure_name(StructureLabel s);
const char* head_name(HeadKind h);
HeadKind head_from_name(const std::string& s);

template <typename T>
struct TrunkBlock {
  BlockDesc desc;
  int in_channels = 0;
  TensorPtr<T> conv1_w, affine1_g, affine1_b;
  TensorPtr<T> conv2_w, affine2_g, affine2_b;  // residual only
  TensorPtr<T> proj_w;                         // residual, when shape changes

  TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& x) const;
};

template <typename T>
class Model {
 public:
  ModelGraph graph;
  std::vector<TrunkBlock<T>> blocks;
  // Independent per-branch copies of the span blocks when weight sharing is
  // disabled; clone b serves branch b+1.
  std::vector<std::vector<TrunkBlock<T>>> span_clones;
  TensorPtr<T> embed_w, embed_b;  // embedding fusion
  TensorPtr<T> hash_w, hash_b;    // hasher head
  TensorPtr<T> cls_w, cls_b;

  // Trunk with the rotation operator applied over the span (pre-pool).
  TensorPtr<T> features(Tape<T>& tape, const TensorPtr<T>& x) const;
  TensorPtr<T> pooled(Tape<T>& tape, const TensorPtr<T>& x) const;
  // Hash layer output; requires the hasher head.
  TensorPtr<T> embedding_vec(Tape<T>& tape, const TensorPtr<T>& x) const;
  TensorPtr<T> logits(Tape<T>& tape, const TensorPtr<T>& x) const;

  // Stage access for invariance probing.
  TensorPtr<T> run_pre(Tape<T>& tape, const TensorPtr<T>& x) const;
  TensorPtr<T> run_span_rm(Tape<T>& tape, const TensorPtr<T>& f) const;
  TensorPtr<T> run_span_plain(Tape<T>& tape, const TensorPtr<T>& f,
                              int branch) const;
  TensorPtr<T> run_post(Tape<T>& tape, const TensorPtr<T>& f) const;
  BranchFn<T> branch_fn() const;
  bool has_span() const { return graph.span.has_value(); }
  int span_downsample() const;
  // (batch, channels, h, w) at the span entry (trunk entry when no span).
  Dims4 span_input_dims(int batch) const;

  std::vector<std::pair<std::string, TensorPtr<T>>> named_params() const;
  std::vector<TensorPtr<T>> params() const;
  int64_t param_count() const;
};

// Validates the graph (shape chain, span bounds, canvas alignment; throws
// config_error naming the offending block) and initializes parameters from
// the seed. The embedding fusion's 1x1 map starts as exact block averaging.
template <typename T>
Model<T> build_model(const ModelGraph& graph, uint64_t seed);

extern template struct TrunkBlock<float>;
extern template struct TrunkBlock<double>;
extern template class Model<float>;
extern template class Model<double>;
extern template Model<float> build_model<float>(const ModelGraph&, uint64_t);
extern template Model<double> build_model<double>(const ModelGraph&, uint64_t);

}  // namespace rmnet
