#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rmnet/runtime.hpp"

namespace rmnet {

// Logical shape (batch, channels, height, width). Row-major storage with w
// fastest; index = ((n*C + c)*H + h)*W + w.
struct Dims4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  int64_t count() const {
    return int64_t(n) * int64_t(c) * int64_t(h) * int64_t(w);
  }
  bool operator==(const Dims4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Dims4& o) const { return !(*this == o); }
  std::string str() const;
};

// Dense rank-4 tensor with an optional gradient buffer of identical shape.
// The gradient is allocated lazily; accumulation is always additive.
template <typename T>
struct Tensor4 {
  Dims4 dims;
  std::vector<T> v;
  std::vector<T> g;  // empty, or exactly v.size()

  Tensor4() = default;
  explicit Tensor4(Dims4 d, T fill = T(0));

  int64_t size() const { return dims.count(); }

  int64_t offset(int n, int c, int h, int w) const {
    return ((int64_t(n) * dims.c + c) * dims.h + h) * dims.w + w;
  }
  T& at(int n, int c, int h, int w) { return v[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return v[offset(n, c, h, w)]; }

  bool has_grad() const { return !g.empty(); }
  // Allocates (zero-filled) if absent; never clears existing values.
  void ensure_grad();
  void zero_grad();
  void drop_grad();

  // Throws shape_error naming `what` if any value is NaN/inf.
  void check_finite(const char* what) const;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor4<T>>;

template <typename T>
TensorPtr<T> make_tensor(Dims4 d, T fill = T(0)) {
  return std::make_shared<Tensor4<T>>(d, fill);
}

template <typename T>
void fill_uniform(Tensor4<T>& t, Rng& rng, double lo, double hi);
template <typename T>
void fill_normal(Tensor4<T>& t, Rng& rng, double mean, double stdev);

// Value copy with dtype conversion (grad buffers are not copied).
template <typename To, typename From>
Tensor4<To> cast_tensor(const Tensor4<From>& src);

// Records one backward closure per forward primitive. backward() zeroes the
// gradients of every recorded output first (intermediates are transient),
// seeds d(loss)/d(loss) = 1, and replays closures in reverse. Leaf gradients
// are NOT cleared here, so two backward() calls accumulate exactly twice the
// gradient into leaves.
template <typename T>
class Tape {
 public:
  void record(TensorPtr<T> out, std::function<void()> backward);
  void backward(const TensorPtr<T>& loss);
  void clear();
  size_t num_records() const { return recs_.size(); }

 private:
  struct Record {
    TensorPtr<T> out;
    std::function<void()> fn;
  };
  std::vector<Record> recs_;
};

extern template struct Tensor4<float>;
extern template struct Tensor4<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template void fill_uniform<float>(Tensor4<float>&, Rng&, double, double);
extern template void fill_uniform<double>(Tensor4<double>&, Rng&, double, double);
extern template void fill_normal<float>(Tensor4<float>&, Rng&, double, double);
extern template void fill_normal<double>(Tensor4<double>&, Rng&, double, double);
template <>
Tensor4<float> cast_tensor<float, double>(const Tensor4<double>&);
template <>
Tensor4<double> cast_tensor<double, float>(const Tensor4<float>&);
template <>
Tensor4<float> cast_tensor<float, float>(const Tensor4<float>&);
template <>
Tensor4<double> cast_tensor<double, double>(const Tensor4<double>&);

}  // namespace rmnet
