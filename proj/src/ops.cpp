#include "rmnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

namespace rmnet {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw shape_error(msg);
}

template <typename T>
bool same_dims(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  return a->dims == b->dims;
}

template <typename T>
bool channel_vector_for(const TensorPtr<T>& vec, const TensorPtr<T>& ref) {
  const Dims4& d = vec->dims;
  return d.n == 1 && d.h == 1 && d.w == 1 && d.c == ref->dims.c;
}

// Unpacks one sample (C,H,W) into a (C*K*K) x (Ho*Wo) row-major patch matrix.
// Row (c,ki,kj) matches the flattening of a (Cout,C,K,K) kernel tensor.
template <typename T>
void im2col(const T* x, int C, int H, int W, int K, int stride, int pad, int Ho,
            int Wo, T* col) {
  const int64_t ow_count = Wo;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < K; ++ki) {
      for (int kj = 0; kj < K; ++kj) {
        T* dst = col + (int64_t(c) * K * K + ki * K + kj) * Ho * ow_count;
        for (int oh = 0; oh < Ho; ++oh, dst += ow_count) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + ow_count, T(0));
            continue;
          }
          const T* src = x + (int64_t(c) * H + ih) * W;
          // Valid ow range keeps iw = ow*stride - pad + kj inside [0, W).
          int lo = 0;
          while (lo < Wo && lo * stride - pad + kj < 0) ++lo;
          int hi = Wo;
          while (hi > lo && (hi - 1) * stride - pad + kj >= W) --hi;
          std::fill(dst, dst + lo, T(0));
          if (stride == 1) {
            const T* s = src + (int64_t(lo) - pad + kj);
            std::copy(s, s + (hi - lo), dst + lo);
          } else {
            for (int ow = lo; ow < hi; ++ow)
              dst[ow] = src[ow * stride - pad + kj];
          }
          std::fill(dst + hi, dst + ow_count, T(0));
        }
      }
    }
  }
}

// Scatter-add inverse of im2col into one sample's gradient.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int K, int stride, int pad,
                int Ho, int Wo, T* gx) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < K; ++ki) {
      for (int kj = 0; kj < K; ++kj) {
        const T* src = col + (int64_t(c) * K * K + ki * K + kj) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh, src += Wo) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          T* dstrow = gx + (int64_t(c) * H + ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dstrow[iw] += src[ow];
          }
        }
      }
    }
  }
}

enum class EwKind { Add, Sub, Mul };

template <typename T>
TensorPtr<T> elementwise(Tape<T>& tape, const TensorPtr<T>& a,
                         const TensorPtr<T>& b, EwKind kind, const char* name) {
  bool full = same_dims(a, b);
  bool bcast = !full && channel_vector_for(b, a);
  require(full || bcast, std::string(name) + ": dims " + a->dims.str() +
                             " vs " + b->dims.str());
  auto out = make_tensor<T>(a->dims);
  const int64_t plane = int64_t(a->dims.h) * a->dims.w;
  if (full) {
    for (size_t i = 0; i < out->v.size(); ++i) {
      switch (kind) {
        case EwKind::Add: out->v[i] = a->v[i] + b->v[i]; break;
        case EwKind::Sub: out->v[i] = a->v[i] - b->v[i]; break;
        case EwKind::Mul: out->v[i] = a->v[i] * b->v[i]; break;
      }
    }
  } else {
    int64_t i = 0;
    for (int n = 0; n < a->dims.n; ++n)
      for (int c = 0; c < a->dims.c; ++c) {
        T bv = b->v[c];
        for (int64_t p = 0; p < plane; ++p, ++i) {
          switch (kind) {
            case EwKind::Add: out->v[i] = a->v[i] + bv; break;
            case EwKind::Sub: out->v[i] = a->v[i] - bv; break;
            case EwKind::Mul: out->v[i] = a->v[i] * bv; break;
          }
        }
      }
  }
  tape.record(out, [out, a, b, kind, full, plane] {
    a->ensure_grad();
    b->ensure_grad();
    const auto& go = out->g;
    if (full) {
      for (size_t i = 0; i < go.size(); ++i) {
        switch (kind) {
          case EwKind::Add:
            a->g[i] += go[i];
            b->g[i] += go[i];
            break;
          case EwKind::Sub:
            a->g[i] += go[i];
            b->g[i] -= go[i];
            break;
          case EwKind::Mul:
            a->g[i] += go[i] * b->v[i];
            b->g[i] += go[i] * a->v[i];
            break;
        }
      }
    } else {
      int64_t i = 0;
      for (int n = 0; n < a->dims.n; ++n)
        for (int c = 0; c < a->dims.c; ++c) {
          double acc = 0.0;
          T bv = b->v[c];
          for (int64_t p = 0; p < plane; ++p, ++i) {
            switch (kind) {
              case EwKind::Add:
                a->g[i] += go[i];
                acc += static_cast<double>(go[i]);
                break;
              case EwKind::Sub:
                a->g[i] += go[i];
                acc -= static_cast<double>(go[i]);
                break;
              case EwKind::Mul:
                a->g[i] += go[i] * bv;
                acc += static_cast<double>(go[i]) * a->v[i];
                break;
            }
          }
          b->g[c] += static_cast<T>(acc);
        }
    }
  });
  return out;
}

}  // namespace

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  return elementwise(tape, a, b, EwKind::Add, "add");
}

template <typename T>
TensorPtr<T> sub(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  return elementwise(tape, a, b, EwKind::Sub, "sub");
}

template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  return elementwise(tape, a, b, EwKind::Mul, "mul");
}

template <typename T>
TensorPtr<T> mul_scalar(Tape<T>& tape, const TensorPtr<T>& a, T s) {
  auto out = make_tensor<T>(a->dims);
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * s;
  tape.record(out, [out, a, s] {
    a->ensure_grad();
    for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i] * s;
  });
  return out;
}

template <typename T>
TensorPtr<T> add_scalar(Tape<T>& tape, const TensorPtr<T>& a, T s) {
  auto out = make_tensor<T>(a->dims);
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + s;
  tape.record(out, [out, a] {
    a->ensure_grad();
    for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i];
  });
  return out;
}

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->dims);
  for (size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = x->v[i] > T(0) ? x->v[i] : T(0);
  tape.record(out, [out, x] {
    x->ensure_grad();
    for (size_t i = 0; i < out->g.size(); ++i)
      if (x->v[i] > T(0)) x->g[i] += out->g[i];
  });
  return out;
}

template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b, int stride, int pad) {
  const Dims4 xd = x->dims, wd = w->dims;
  require(wd.h == wd.w, "conv2d: kernel must be square, got " + wd.str());
  require(wd.c == xd.c, "conv2d: input channels " + xd.str() +
                            " vs kernel " + wd.str());
  if (stride < 1) throw contract_error("conv2d: stride must be >= 1");
  if (pad < 0) throw contract_error("conv2d: pad must be >= 0");
  const int K = wd.h;
  require(xd.h + 2 * pad >= K && xd.w + 2 * pad >= K,
          "conv2d: padded extent smaller than kernel for input " + xd.str());
  if (b)
    require(b->dims.n == 1 && b->dims.c == wd.n && b->dims.h == 1 &&
                b->dims.w == 1,
            "conv2d: bias dims " + b->dims.str() + " for kernel " + wd.str());
  const int N = xd.n, Cin = xd.c, H = xd.h, W = xd.w, Cout = wd.n;
  const int Ho = (H + 2 * pad - K) / stride + 1;
  const int Wo = (W + 2 * pad - K) / stride + 1;
  const int64_t rows = int64_t(Cin) * K * K;
  const int64_t cols = int64_t(Ho) * Wo;

  auto out = make_tensor<T>(Dims4{N, Cout, Ho, Wo});
  MapCM<T> wmat(w->v.data(), Cout, rows);
  parallel_for(N, [&](int64_t nb, int64_t ne, int) {
    std::vector<T> col(static_cast<size_t>(rows * cols));
    for (int64_t n = nb; n < ne; ++n) {
      im2col(x->v.data() + n * Cin * int64_t(H) * W, Cin, H, W, K, stride, pad,
             Ho, Wo, col.data());
      MapCM<T> cm(col.data(), rows, cols);
      MapM<T> om(out->v.data() + n * Cout * cols, Cout, cols);
      om.noalias() = wmat * cm;
      if (b) {
        for (int co = 0; co < Cout; ++co)
          om.row(co).array() += b->v[co];
      }
    }
  });

  tape.record(out, [out, x, w, b, stride, pad, K, N, Cin, H, W, Cout, Ho, Wo,
                    rows, cols] {
    x->ensure_grad();
    w->ensure_grad();
    if (b) b->ensure_grad();
    int workers = std::min<int64_t>(max_threads(), std::max<int64_t>(N, 1));
    // Each worker accumulates its own dW; merged in worker order afterwards
    // so results do not depend on scheduling.
    std::vector<MatRM<T>> dw_parts(static_cast<size_t>(workers),
                                   MatRM<T>::Zero(Cout, rows));
    MapCM<T> wmat(w->v.data(), Cout, rows);
    parallel_for(N, [&](int64_t nb, int64_t ne, int widx) {
      std::vector<T> col(static_cast<size_t>(rows * cols));
      std::vector<T> dcol(static_cast<size_t>(rows * cols));
      for (int64_t n = nb; n < ne; ++n) {
        im2col(x->v.data() + n * Cin * int64_t(H) * W, Cin, H, W, K, stride,
               pad, Ho, Wo, col.data());
        MapCM<T> cm(col.data(), rows, cols);
        MapCM<T> gom(out->g.data() + n * Cout * cols, Cout, cols);
        dw_parts[widx].noalias() += gom * cm.transpose();
        MapM<T> dcm(dcol.data(), rows, cols);
        dcm.noalias() = wmat.transpose() * gom;
        col2im_add(dcol.data(), Cin, H, W, K, stride, pad, Ho, Wo,
                   x->g.data() + n * Cin * int64_t(H) * W);
      }
    });
    MapM<T> gw(w->g.data(), Cout, rows);
    for (auto& part : dw_parts) gw.noalias() += part;
    if (b) {
      for (int co = 0; co < Cout; ++co) {
        double acc = 0.0;
        for (int64_t n = 0; n < N; ++n) {
          const T* p = out->g.data() + (n * Cout + co) * cols;
          for (int64_t i = 0; i < cols; ++i) acc += static_cast<double>(p[i]);
        }
        b->g[co] += static_cast<T>(acc);
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> linear(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b) {
  const Dims4 xd = x->dims, wd = w->dims;
  require(xd.h == 1 && xd.w == 1,
          "linear: expects pooled input (N,C,1,1), got " + xd.str());
  require(wd.h == 1 && wd.w == 1 && wd.c == xd.c,
          "linear: weight dims " + wd.str() + " vs input " + xd.str());
  const int N = xd.n, Cin = xd.c, Cout = wd.n;
  if (b)
    require(b->dims.n == 1 && b->dims.c == Cout && b->dims.h == 1 &&
                b->dims.w == 1,
            "linear: bias dims " + b->dims.str());
  auto out = make_tensor<T>(Dims4{N, Cout, 1, 1});
  MapCM<T> xm(x->v.data(), N, Cin);
  MapCM<T> wm(w->v.data(), Cout, Cin);
  MapM<T> om(out->v.data(), N, Cout);
  om.noalias() = xm * wm.transpose();
  if (b) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Cout; ++c) om(n, c) += b->v[c];
  }
  tape.record(out, [out, x, w, b, N, Cin, Cout] {
    x->ensure_grad();
    w->ensure_grad();
    if (b) b->ensure_grad();
    MapCM<T> go(out->g.data(), N, Cout);
    MapCM<T> xm(x->v.data(), N, Cin);
    MapCM<T> wm(w->v.data(), Cout, Cin);
    MapM<T> gx(x->g.data(), N, Cin);
    MapM<T> gw(w->g.data(), Cout, Cin);
    gx.noalias() += go * wm;
    gw.noalias() += go.transpose() * xm;
    if (b) {
      for (int c = 0; c < Cout; ++c) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += static_cast<double>(go(n, c));
        b->g[c] += static_cast<T>(acc);
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> global_avg_pool(Tape<T>& tape, const TensorPtr<T>& x) {
  const Dims4 xd = x->dims;
  require(xd.h >= 1 && xd.w >= 1, "global_avg_pool: empty plane " + xd.str());
  const int64_t plane = int64_t(xd.h) * xd.w;
  auto out = make_tensor<T>(Dims4{xd.n, xd.c, 1, 1});
  for (int64_t nc = 0; nc < int64_t(xd.n) * xd.c; ++nc) {
    const T* p = x->v.data() + nc * plane;
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
    out->v[nc] = static_cast<T>(acc / static_cast<double>(plane));
  }
  tape.record(out, [out, x, plane] {
    x->ensure_grad();
    const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
    for (size_t nc = 0; nc < out->g.size(); ++nc) {
      T gv = out->g[nc] * inv;
      T* p = x->g.data() + int64_t(nc) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += gv;
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape,
                             const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw contract_error("concat_channels: no inputs");
  const Dims4 d0 = parts[0]->dims;
  int ctotal = 0;
  for (const auto& p : parts) {
    require(p->dims.n == d0.n && p->dims.h == d0.h && p->dims.w == d0.w,
            "concat_channels: dims " + p->dims.str() + " vs " + d0.str());
    ctotal += p->dims.c;
  }
  auto out = make_tensor<T>(Dims4{d0.n, ctotal, d0.h, d0.w});
  const int64_t plane = int64_t(d0.h) * d0.w;
  for (int n = 0; n < d0.n; ++n) {
    int64_t coff = 0;
    for (const auto& p : parts) {
      const int64_t block = p->dims.c * plane;
      std::copy(p->v.data() + n * block, p->v.data() + (n + 1) * block,
                out->v.data() + (int64_t(n) * ctotal + coff) * plane);
      coff += p->dims.c;
    }
  }
  tape.record(out, [out, parts, d0, ctotal, plane] {
    for (const auto& p : parts) p->ensure_grad();
    for (int n = 0; n < d0.n; ++n) {
      int64_t coff = 0;
      for (const auto& p : parts) {
        const int64_t block = p->dims.c * plane;
        const T* src = out->g.data() + (int64_t(n) * ctotal + coff) * plane;
        T* dst = p->g.data() + n * block;
        for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
        coff += p->dims.c;
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> reduce_sum(Tape<T>& tape, const TensorPtr<T>& x) {
  auto out = make_tensor<T>(Dims4{1, 1, 1, 1});
  double acc = 0.0;
  for (const T& v : x->v) acc += static_cast<double>(v);
  out->v[0] = static_cast<T>(acc);
  tape.record(out, [out, x] {
    x->ensure_grad();
    const T g = out->g[0];
    for (auto& gi : x->g) gi += g;
  });
  return out;
}

template <typename T>
TensorPtr<T> reduce_mean(Tape<T>& tape, const TensorPtr<T>& x) {
  if (x->size() == 0) throw shape_error("reduce_mean over empty tensor");
  auto out = make_tensor<T>(Dims4{1, 1, 1, 1});
  double acc = 0.0;
  for (const T& v : x->v) acc += static_cast<double>(v);
  const double inv = 1.0 / static_cast<double>(x->size());
  out->v[0] = static_cast<T>(acc * inv);
  tape.record(out, [out, x, inv] {
    x->ensure_grad();
    const T g = static_cast<T>(out->g[0] * inv);
    for (auto& gi : x->g) gi += g;
  });
  return out;
}

template <typename T>
TensorPtr<T> channel_affine(Tape<T>& tape, const TensorPtr<T>& x,
                            const TensorPtr<T>& gamma,
                            const TensorPtr<T>& beta) {
  require(channel_vector_for(gamma, x),
          "channel_affine: gamma dims " + gamma->dims.str() + " vs input " +
              x->dims.str());
  require(channel_vector_for(beta, x),
          "channel_affine: beta dims " + beta->dims.str() + " vs input " +
              x->dims.str());
  auto out = make_tensor<T>(x->dims);
  const int64_t plane = int64_t(x->dims.h) * x->dims.w;
  int64_t i = 0;
  for (int n = 0; n < x->dims.n; ++n)
    for (int c = 0; c < x->dims.c; ++c) {
      const T gmul = gamma->v[c], badd = beta->v[c];
      for (int64_t p = 0; p < plane; ++p, ++i) out->v[i] = x->v[i] * gmul + badd;
    }
  tape.record(out, [out, x, gamma, beta, plane] {
    x->ensure_grad();
    gamma->ensure_grad();
    beta->ensure_grad();
    int64_t i = 0;
    for (int n = 0; n < x->dims.n; ++n)
      for (int c = 0; c < x->dims.c; ++c) {
        double dg = 0.0, db = 0.0;
        const T gmul = gamma->v[c];
        for (int64_t p = 0; p < plane; ++p, ++i) {
          const T go = out->g[i];
          x->g[i] += go * gmul;
          dg += static_cast<double>(go) * x->v[i];
          db += static_cast<double>(go);
        }
        gamma->g[c] += static_cast<T>(dg);
        beta->g[c] += static_cast<T>(db);
      }
  });
  return out;
}

template <typename T>
TensorPtr<T> weighted_softmax_ce(Tape<T>& tape, const TensorPtr<T>& logits,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& weights) {
  const Dims4 d = logits->dims;
  require(d.h == 1 && d.w == 1,
          "weighted_softmax_ce: logits must be (N,M,1,1), got " + d.str());
  const int N = d.n, M = d.c;
  if (static_cast<int>(labels.size()) != N)
    throw contract_error("weighted_softmax_ce: label count mismatch");
  if (static_cast<int>(weights.size()) != M)
    throw contract_error("weighted_softmax_ce: weight count mismatch");
  for (int y : labels)
    if (y < 0 || y >= M)
      throw contract_error("weighted_softmax_ce: label out of range");

  auto probs = std::make_shared<std::vector<T>>(size_t(N) * M);
  double loss_acc = 0.0;
  for (int n = 0; n < N; ++n) {
    const T* z = logits->v.data() + int64_t(n) * M;
    T* p = probs->data() + int64_t(n) * M;
    double zmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) zmax = std::max(zmax, double(z[j]));
    double s = 0.0;
    for (int j = 0; j < M; ++j) s += std::exp(double(z[j]) - zmax);
    for (int j = 0; j < M; ++j)
      p[j] = static_cast<T>(std::exp(double(z[j]) - zmax) / s);
    const int y = labels[n];
    loss_acc += weights[y] * (std::log(s) - (double(z[y]) - zmax));
  }
  auto out = make_tensor<T>(Dims4{1, 1, 1, 1});
  out->v[0] = static_cast<T>(loss_acc / std::max(N, 1));
  tape.record(out, [out, logits, probs, labels, weights, N, M] {
    logits->ensure_grad();
    const double go = static_cast<double>(out->g[0]);
    for (int n = 0; n < N; ++n) {
      const int y = labels[n];
      const double scale = go * weights[y] / N;
      const T* p = probs->data() + int64_t(n) * M;
      T* gz = logits->g.data() + int64_t(n) * M;
      for (int j = 0; j < M; ++j) {
        double delta = (j == y) ? 1.0 : 0.0;
        gz[j] += static_cast<T>(scale * (double(p[j]) - delta));
      }
    }
  });
  return out;
}

template <typename T>
Tensor4<T> softmax_rows(const Tensor4<T>& logits) {
  const Dims4 d = logits.dims;
  require(d.h == 1 && d.w == 1,
          "softmax_rows: logits must be (N,M,1,1), got " + d.str());
  Tensor4<T> out(d);
  for (int n = 0; n < d.n; ++n) {
    const T* z = logits.v.data() + int64_t(n) * d.c;
    T* p = out.v.data() + int64_t(n) * d.c;
    double zmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < d.c; ++j) zmax = std::max(zmax, double(z[j]));
    double s = 0.0;
    for (int j = 0; j < d.c; ++j) s += std::exp(double(z[j]) - zmax);
    for (int j = 0; j < d.c; ++j)
      p[j] = static_cast<T>(std::exp(double(z[j]) - zmax) / s);
  }
  return out;
}

#define RMNET_INST_OPS(T)                                                      \
  template TensorPtr<T> add<T>(Tape<T>&, const TensorPtr<T>&,                 \
                               const TensorPtr<T>&);                           \
  template TensorPtr<T> sub<T>(Tape<T>&, const TensorPtr<T>&,                 \
                               const TensorPtr<T>&);                           \
  template TensorPtr<T> mul<T>(Tape<T>&, const TensorPtr<T>&,                 \
                               const TensorPtr<T>&);                           \
  template TensorPtr<T> mul_scalar<T>(Tape<T>&, const TensorPtr<T>&, T);      \
  template TensorPtr<T> add_scalar<T>(Tape<T>&, const TensorPtr<T>&, T);      \
  template TensorPtr<T> relu<T>(Tape<T>&, const TensorPtr<T>&);               \
  template TensorPtr<T> conv2d<T>(Tape<T>&, const TensorPtr<T>&,              \
                                  const TensorPtr<T>&, const TensorPtr<T>&,    \
                                  int, int);                                   \
  template TensorPtr<T> linear<T>(Tape<T>&, const TensorPtr<T>&,              \
                                  const TensorPtr<T>&, const TensorPtr<T>&);   \
  template TensorPtr<T> global_avg_pool<T>(Tape<T>&, const TensorPtr<T>&);    \
  template TensorPtr<T> concat_channels<T>(Tape<T>&,                          \
                                           const std::vector<TensorPtr<T>>&); \
  template TensorPtr<T> reduce_sum<T>(Tape<T>&, const TensorPtr<T>&);         \
  template TensorPtr<T> reduce_mean<T>(Tape<T>&, const TensorPtr<T>&);        \
  template TensorPtr<T> channel_affine<T>(Tape<T>&, const TensorPtr<T>&,      \
                                          const TensorPtr<T>&,                 \
                                          const TensorPtr<T>&);                \
  template TensorPtr<T> weighted_softmax_ce<T>(Tape<T>&, const TensorPtr<T>&, \
                                               const std::vector<int>&,       \
                                               const std::vector<double>&);   \
  template Tensor4<T> softmax_rows<T>(const Tensor4<T>&);

RMNET_INST_OPS(float)
RMNET_INST_OPS(double)
#undef RMNET_INST_OPS

}  // namespace rmnet
