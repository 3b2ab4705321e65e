#pragma once

#include "rmnet/tensor.hpp"

namespace rmnet {

enum class InterpMode { ExactQuarter, Bilinear };

// Smallest integer d with d*d >= h*h + w*w (rotated content never clips).
int diagonal_bound(int h, int w);

// Smallest canvas D >= diagonal_bound(h, w) such that D == h (mod 2s) and
// D == w (mod 2s). Keeps the centered embed offset (D-h)/2 integral and the
// final realign crop offset (D-h)/(2s) integral after total downsample s.
// Requires h == w (mod 2s) and s >= 1.
int pick_canvas(int h, int w, int s);

// Exact quarter-turn rotation by index permutation; positive = clockwise.
// quarter_turns is taken mod 4; 0 returns the input tensor unchanged.
template <typename T>
TensorPtr<T> rot90_exact(Tape<T>& tape, const TensorPtr<T>& x,
                         int quarter_turns);

// Rotates clockwise by angle_degrees about the input's center and resamples
// onto an (out_h, out_w) grid sharing that center, bilinear taps, zero
// outside. Grows the extent to pad, shrinks it to center-crop; both centers
// integral offsets apart gives exact pixel copies at multiples of 90.
template <typename T>
TensorPtr<T> rotate_resample(Tape<T>& tape, const TensorPtr<T>& x,
                             double angle_degrees, int out_h, int out_w);

// Undo branch i's expansion rotation (i * theta clockwise) and return to
// content extents (out_h, out_w). Exact mode requires i*theta to be a
// multiple of 90 and extents to already match.
template <typename T>
TensorPtr<T> realign(Tape<T>& tape, const TensorPtr<T>& branch, int i,
                     double theta_degrees, InterpMode interp, int out_h,
                     int out_w);

#define RMNET_EXTERN_ROT(T)                                                    \
  extern template TensorPtr<T> rot90_exact<T>(Tape<T>&, const TensorPtr<T>&,  \
                                              int);                            \
  extern template TensorPtr<T> rotate_resample<T>(                             \
      Tape<T>&, const TensorPtr<T>&, double, int, int);                        \
  extern template TensorPtr<T> realign<T>(Tape<T>&, const TensorPtr<T>&, int, \
                                          double, InterpMode, int, int);

RMNET_EXTERN_ROT(float)
RMNET_EXTERN_ROT(double)
#undef RMNET_EXTERN_ROT

}  // namespace rmnet
