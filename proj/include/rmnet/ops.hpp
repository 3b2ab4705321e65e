#pragma once

#include <vector>

#include "rmnet/tensor.hpp"

namespace rmnet {

// Differentiable primitives. Every op allocates its output, records one
// backward closure on the tape, and validates shapes up front (shape_error
// with both operand dims on mismatch). `b` arguments shaped (1,C,1,1)
// broadcast over batch and spatial extents.

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> sub(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> mul_scalar(Tape<T>& tape, const TensorPtr<T>& a, T s);
template <typename T>
TensorPtr<T> add_scalar(Tape<T>& tape, const TensorPtr<T>& a, T s);

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x);

// 2-D convolution, cross-correlation orientation (no kernel flip).
// x (N,Cin,H,W), w (Cout,Cin,K,K), optional bias (1,Cout,1,1).
// Output extent: floor((H + 2*pad - K)/stride) + 1; throws shape_error if the
// padded extent is smaller than the kernel.
template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b, int stride, int pad);

// Fully connected map on (N,C,1,1): w (Cout,Cin,1,1), b (1,Cout,1,1) or null.
template <typename T>
TensorPtr<T> linear(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b);

// Global average pool over (h,w) -> (N,C,1,1).
template <typename T>
TensorPtr<T> global_avg_pool(Tape<T>& tape, const TensorPtr<T>& x);

// Channel concatenation; all inputs must agree on (n,h,w).
template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape,
                             const std::vector<TensorPtr<T>>& parts);

template <typename T>
TensorPtr<T> reduce_sum(Tape<T>& tape, const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> reduce_mean(Tape<T>& tape, const TensorPtr<T>& x);

// Per-channel y = x*gamma + beta, gamma/beta shaped (1,C,1,1). Stateless
// train-free normalization surrogate used by the conv blocks.
template <typename T>
TensorPtr<T> channel_affine(Tape<T>& tape, const TensorPtr<T>& x,
                            const TensorPtr<T>& gamma, const TensorPtr<T>& beta);

// Mean of softmax cross-entropy over the batch with per-class weights:
// loss = (1/N) * sum_i weight[y_i] * (-log softmax(z_i)[y_i]).
// logits (N,M,1,1); labels in [0,M); weights length M. Returns a scalar.
template <typename T>
TensorPtr<T> weighted_softmax_ce(Tape<T>& tape, const TensorPtr<T>& logits,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& weights);

// Row-wise softmax probabilities of (N,M,1,1) logits, no tape record.
template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& logits);

#define RMNET_EXTERN_OPS(T)                                                    \
  extern template TensorPtr<T> add<T>(Tape<T>&, const TensorPtr<T>&,          \
                                      const TensorPtr<T>&);                    \
  extern template TensorPtr<T> sub<T>(Tape<T>&, const TensorPtr<T>&,          \
                                      const TensorPtr<T>&);                    \
  extern template TensorPtr<T> mul<T>(Tape<T>&, const TensorPtr<T>&,          \
                                      const TensorPtr<T>&);                    \
  extern template TensorPtr<T> mul_scalar<T>(Tape<T>&, const TensorPtr<T>&,   \
                                             T);                               \
  extern template TensorPtr<T> add_scalar<T>(Tape<T>&, const TensorPtr<T>&,   \
                                             T);                               \
  extern template TensorPtr<T> relu<T>(Tape<T>&, const TensorPtr<T>&);        \
  extern template TensorPtr<T> conv2d<T>(Tape<T>&, const TensorPtr<T>&,       \
                                         const TensorPtr<T>&,                  \
                                         const TensorPtr<T>&, int, int);       \
  extern template TensorPtr<T> linear<T>(Tape<T>&, const TensorPtr<T>&,       \
                                         const TensorPtr<T>&,                  \
                                         const TensorPtr<T>&);                 \
  extern template TensorPtr<T> global_avg_pool<T>(Tape<T>&,                   \
                                                  const TensorPtr<T>&);        \
  extern template TensorPtr<T> concat_channels<T>(                             \
      Tape<T>&, const std::vector<TensorPtr<T>>&);                             \
  extern template TensorPtr<T> reduce_sum<T>(Tape<T>&, const TensorPtr<T>&);  \
  extern template TensorPtr<T> reduce_mean<T>(Tape<T>&, const TensorPtr<T>&); \
  extern template TensorPtr<T> channel_affine<T>(                              \
      Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&,                      \
      const TensorPtr<T>&);                                                    \
  extern template TensorPtr<T> weighted_softmax_ce<T>(                         \
      Tape<T>&, const TensorPtr<T>&, const std::vector<int>&,                  \
      const std::vector<double>&);                                             \
  extern template Tensor4<T> softmax_rows<T>(const Tensor4<T>&);

RMNET_EXTERN_OPS(float)
RMNET_EXTERN_OPS(double)
#undef RMNET_EXTERN_OPS

}  // namespace rmnet
