#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rmnet/ops.hpp"
#include "rmnet/rotation.hpp"

namespace rmnet {

enum class Fusion { Meanout, Maxout, Embedding };

const char* fusion_name(Fusion f);
const char* interp_name(InterpMode m);
Fusion fusion_from_name(const std::string& s);
InterpMode interp_from_name(const std::string& s);

// Rotation-fusion operator configuration. k rotated copies at multiples of
// theta (clockwise), k * theta must cover exactly 360 degrees.
struct RmConfig {
  int k = 4;
  double theta_degrees = 90.0;
  Fusion fusion = Fusion::Meanout;
  InterpMode interp = InterpMode::ExactQuarter;
  bool rotations_enabled = true;  // off: ablation, branches see unrotated input
  bool weight_sharing = true;     // off: ablation, per-branch parameters
  int canvas = 0;                 // interpolated mode; 0 = derive from extents

  void validate() const;  // throws config_error
};

// The wrapped feature extractor. run(tape, input, branch) must be a pure
// function of its inputs; with weight sharing it must ignore `branch`.
// downsample is the total spatial stride of the extractor.
template <typename T>
struct BranchFn {
  std::function<TensorPtr<T>(Tape<T>&, const TensorPtr<T>&, int)> run;
  int downsample = 1;
  TensorPtr<T> embed_w;  // (C, k*C, 1, 1); embedding fusion only
  TensorPtr<T> embed_b;  // (1, C, 1, 1) or null
};

// Elementwise mean over branches. Summed as a pairwise tree so the mean of
// identical branches is bitwise equal to them for power-of-two k.
template <typename T>
TensorPtr<T> fuse_meanout(Tape<T>& tape,
                          const std::vector<TensorPtr<T>>& branches);

// Elementwise max; ties route the gradient to the lowest branch index.
template <typename T>
TensorPtr<T> fuse_maxout(Tape<T>& tape,
                         const std::vector<TensorPtr<T>>& branches);

// Branch-ascending channel concat followed by a 1x1 conv back to C channels.
template <typename T>
TensorPtr<T> fuse_embedding(Tape<T>& tape,
                            const std::vector<TensorPtr<T>>& branches,
                            const TensorPtr<T>& w, const TensorPtr<T>& b);

// Full operator: expand x into k rotated copies, run the shared extractor on
// each, rotate every branch output back, fuse. Output extent is
// (H/downsample, W/downsample) regardless of interpolation mode.
template <typename T>
TensorPtr<T> rm_forward(Tape<T>& tape, const TensorPtr<T>& x,
                        const BranchFn<T>& f, const RmConfig& cfg);

#define RMNET_EXTERN_RM(T)                                                     \
  extern template TensorPtr<T> fuse_meanout<T>(                                \
      Tape<T>&, const std::vector<TensorPtr<T>>&);                             \
  extern template TensorPtr<T> fuse_maxout<T>(                                 \
      Tape<T>&, const std::vector<TensorPtr<T>>&);                             \
  extern template TensorPtr<T> fuse_embedding<T>(                              \
      Tape<T>&, const std::vector<TensorPtr<T>>&, const TensorPtr<T>&,         \
      const TensorPtr<T>&);                                                    \
  extern template TensorPtr<T> rm_forward<T>(Tape<T>&, const TensorPtr<T>&,   \
                                             const BranchFn<T>&,               \
                                             const RmConfig&);

RMNET_EXTERN_RM(float)
RMNET_EXTERN_RM(double)
#undef RMNET_EXTERN_RM

}  // namespace rmnet
