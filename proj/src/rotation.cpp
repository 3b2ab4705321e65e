#include "rmnet/rotation.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace rmnet {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

// True when `a` degrees is within 1e-9 of an integer multiple of 90.
bool quarter_multiple(double a, int* quarters) {
  double q = a / 90.0;
  double qr = std::nearbyint(q);
  if (std::abs(q - qr) < 1e-9) {
    if (quarters) *quarters = static_cast<int>(qr);
    return true;
  }
  return false;
}

// Four bilinear taps (flat plane indices, -1 when outside) per output pixel.
template <typename T>
struct TapTable {
  int out_h = 0, out_w = 0;
  std::vector<int> idx;  // 4 per pixel
  std::vector<T> w;      // 4 per pixel
};

// Sampling grid for a clockwise rotation by `angle` about the input center,
// output grid sharing that center. In (x right, y down) coordinates the
// source point of output (r, c) is center_src + R(-angle) * (dest - center_dest).
template <typename T>
std::shared_ptr<TapTable<T>> build_taps(int in_h, int in_w, int out_h,
                                        int out_w, double angle) {
  auto tab = std::make_shared<TapTable<T>>();
  tab->out_h = out_h;
  tab->out_w = out_w;
  tab->idx.assign(size_t(out_h) * out_w * 4, -1);
  tab->w.assign(size_t(out_h) * out_w * 4, T(0));

  double a = std::fmod(angle, 360.0);
  if (a < 0) a += 360.0;
  double cs, sn;
  int q;
  if (quarter_multiple(a, &q)) {
    // Snap to the exact lattice so quarter turns are pure pixel copies.
    static const double cq[4] = {1, 0, -1, 0};
    static const double sq[4] = {0, 1, 0, -1};
    q = ((q % 4) + 4) % 4;
    cs = cq[q];
    sn = sq[q];
  } else {
    cs = std::cos(a * kPi / 180.0);
    sn = std::sin(a * kPi / 180.0);
  }

  const double cxd = (out_w - 1) * 0.5, cyd = (out_h - 1) * 0.5;
  const double cxs = (in_w - 1) * 0.5, cys = (in_h - 1) * 0.5;
  size_t t = 0;
  for (int r = 0; r < out_h; ++r) {
    const double uy = r - cyd;
    for (int c = 0; c < out_w; ++c, t += 4) {
      const double ux = c - cxd;
      const double sx = cxs + cs * ux + sn * uy;
      const double sy = cys - sn * ux + cs * uy;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const double ax = sx - fx0, ay = sy - fy0;
      const double ws[4] = {(1 - ay) * (1 - ax), (1 - ay) * ax, ay * (1 - ax),
                            ay * ax};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (ws[k] == 0.0) continue;
        if (ys[k] < 0 || ys[k] >= in_h || xs[k] < 0 || xs[k] >= in_w) continue;
        tab->idx[t + k] = ys[k] * in_w + xs[k];
        tab->w[t + k] = static_cast<T>(ws[k]);
      }
    }
  }
  return tab;
}

}  // namespace

int diagonal_bound(int h, int w) {
  if (h < 1 || w < 1)
    throw contract_error("diagonal_bound: extents must be positive");
  int64_t hh = int64_t(h) * h + int64_t(w) * w;
  int d = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(hh))));
  while (int64_t(d) * d < hh) ++d;
  while (d > 1 && int64_t(d - 1) * (d - 1) >= hh) --d;
  return d;
}

int pick_canvas(int h, int w, int s) {
  if (s < 1) throw contract_error("pick_canvas: downsample must be >= 1");
  if (h < 1 || w < 1) throw contract_error("pick_canvas: bad extents");
  const int m = 2 * s;
  if (((h - w) % m + m) % m != 0)
    throw config_error("canvas: extents " + std::to_string(h) + "x" +
                       std::to_string(w) + " differ mod " + std::to_string(m) +
                       ", no aligned canvas exists");
  int d = diagonal_bound(h, w);
  // Round up to the next extent congruent to h modulo 2s.
  int rem = ((d - h) % m + m) % m;
  if (rem != 0) d += m - rem;
  return d;
}

template <typename T>
TensorPtr<T> rot90_exact(Tape<T>& tape, const TensorPtr<T>& x,
                         int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return x;
  const Dims4 d = x->dims;
  const int H = d.h, W = d.w;
  const Dims4 od{d.n, d.c, (q % 2) ? W : H, (q % 2) ? H : W};
  auto out = make_tensor<T>(od);

  // Destination flat offset within a plane for source (r, c).
  auto dst_of = [q, H, W](int r, int c) -> int64_t {
    switch (q) {
      case 1: return int64_t(c) * H + (H - 1 - r);          // (c, H-1-r) in WxH
      case 2: return int64_t(H - 1 - r) * W + (W - 1 - c);  // in HxW
      default: return int64_t(W - 1 - c) * H + r;           // (W-1-c, r) in WxH
    }
  };

  const int64_t plane = int64_t(H) * W;
  const int64_t planes = int64_t(d.n) * d.c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = x->v.data() + p * plane;
    T* dst = out->v.data() + p * plane;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) dst[dst_of(r, c)] = src[int64_t(r) * W + c];
  }
  tape.record(out, [out, x, dst_of, plane, planes, H, W] {
    x->ensure_grad();
    for (int64_t p = 0; p < planes; ++p) {
      const T* go = out->g.data() + p * plane;
      T* gx = x->g.data() + p * plane;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) gx[int64_t(r) * W + c] += go[dst_of(r, c)];
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> rotate_resample(Tape<T>& tape, const TensorPtr<T>& x,
                             double angle_degrees, int out_h, int out_w) {
  const Dims4 d = x->dims;
  if (out_h < 1 || out_w < 1)
    throw shape_error("rotate_resample: output extent must be positive");
  auto tab = build_taps<T>(d.h, d.w, out_h, out_w, angle_degrees);
  auto out = make_tensor<T>(Dims4{d.n, d.c, out_h, out_w});
  const int64_t in_plane = int64_t(d.h) * d.w;
  const int64_t out_plane = int64_t(out_h) * out_w;
  const int64_t planes = int64_t(d.n) * d.c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = x->v.data() + p * in_plane;
    T* dst = out->v.data() + p * out_plane;
    size_t t = 0;
    for (int64_t i = 0; i < out_plane; ++i, t += 4) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int idx = tab->idx[t + k];
        if (idx >= 0) acc += double(tab->w[t + k]) * double(src[idx]);
      }
      dst[i] = static_cast<T>(acc);
    }
  }
  tape.record(out, [out, x, tab, in_plane, out_plane, planes] {
    x->ensure_grad();
    for (int64_t p = 0; p < planes; ++p) {
      const T* go = out->g.data() + p * out_plane;
      T* gx = x->g.data() + p * in_plane;
      size_t t = 0;
      for (int64_t i = 0; i < out_plane; ++i, t += 4) {
        const T g = go[i];
        if (g == T(0)) continue;
        for (int k = 0; k < 4; ++k) {
          const int idx = tab->idx[t + k];
          if (idx >= 0) gx[idx] += tab->w[t + k] * g;
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> realign(Tape<T>& tape, const TensorPtr<T>& branch, int i,
                     double theta_degrees, InterpMode interp, int out_h,
                     int out_w) {
  if (i < 0) throw contract_error("realign: negative branch index");
  const double ang = i * theta_degrees;
  if (interp == InterpMode::ExactQuarter) {
    int q;
    if (!quarter_multiple(ang, &q))
      throw config_error("exact-quarter realign needs angles that are "
                         "multiples of 90, got " + std::to_string(ang));
    auto out = rot90_exact(tape, branch, -q);
    if (out->dims.h != out_h || out->dims.w != out_w)
      throw shape_error("realign: extent " + out->dims.str() +
                        " does not match content " + std::to_string(out_h) +
                        "x" + std::to_string(out_w));
    return out;
  }
  return rotate_resample(tape, branch, -ang, out_h, out_w);
}

#define RMNET_INST_ROT(T)                                                      \
  template TensorPtr<T> rot90_exact<T>(Tape<T>&, const TensorPtr<T>&, int);   \
  template TensorPtr<T> rotate_resample<T>(Tape<T>&, const TensorPtr<T>&,     \
                                           double, int, int);                  \
  template TensorPtr<T> realign<T>(Tape<T>&, const TensorPtr<T>&, int,        \
                                   double, InterpMode, int, int);

RMNET_INST_ROT(float)
RMNET_INST_ROT(double)
#undef RMNET_INST_ROT

}  // namespace rmnet
