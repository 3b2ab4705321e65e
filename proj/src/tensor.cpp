#include "rmnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rmnet {

std::string Dims4::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
Tensor4<T>::Tensor4(Dims4 d, T fill) : dims(d) {
  if (d.n < 0 || d.c < 0 || d.h < 0 || d.w < 0)
    throw shape_error("tensor with negative extent " + d.str());
  v.assign(static_cast<size_t>(d.count()), fill);
}

template <typename T>
void Tensor4<T>::ensure_grad() {
  if (g.empty()) g.assign(v.size(), T(0));
}

template <typename T>
void Tensor4<T>::zero_grad() {
  g.assign(v.size(), T(0));
}

template <typename T>
void Tensor4<T>::drop_grad() {
  g.clear();
  g.shrink_to_fit();
}

template <typename T>
void Tensor4<T>::check_finite(const char* what) const {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(static_cast<double>(v[i]))) {
      std::ostringstream os;
      os << what << ": non-finite value at flat index " << i << " of dims "
         << dims.str();
      throw shape_error(os.str());
    }
  }
}

template <typename T>
void fill_uniform(Tensor4<T>& t, Rng& rng, double lo, double hi) {
  for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(Tensor4<T>& t, Rng& rng, double mean, double stdev) {
  for (auto& x : t.v) x = static_cast<T>(rng.normal(mean, stdev));
}

template <typename T>
void Tape<T>::record(TensorPtr<T> out, std::function<void()> backward) {
  if (!out) throw contract_error("tape record with null output");
  recs_.push_back(Record{std::move(out), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
  if (!loss) throw contract_error("backward on null tensor");
  if (loss->size() != 1)
    throw contract_error("backward requires a scalar, got " + loss->dims.str());
  // Intermediates get fresh gradients every pass; leaves keep theirs.
  for (auto& r : recs_) r.out->zero_grad();
  loss->ensure_grad();
  loss->g[0] += T(1);
  for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) it->fn();
}

template <typename T>
void Tape<T>::clear() {
  recs_.clear();
}

template struct Tensor4<float>;
template struct Tensor4<double>;
template class Tape<float>;
template class Tape<double>;
template void fill_uniform<float>(Tensor4<float>&, Rng&, double, double);
template void fill_uniform<double>(Tensor4<double>&, Rng&, double, double);
template void fill_normal<float>(Tensor4<float>&, Rng&, double, double);
template void fill_normal<double>(Tensor4<double>&, Rng&, double, double);
template <>
Tensor4<float> cast_tensor<float, double>(const Tensor4<double>& s) {
  Tensor4<float> out(s.dims);
  for (size_t i = 0; i < s.v.size(); ++i) out.v[i] = static_cast<float>(s.v[i]);
  return out;
}
template <>
Tensor4<double> cast_tensor<double, float>(const Tensor4<float>& s) {
  Tensor4<double> out(s.dims);
  for (size_t i = 0; i < s.v.size(); ++i) out.v[i] = static_cast<double>(s.v[i]);
  return out;
}
template <>
Tensor4<float> cast_tensor<float, float>(const Tensor4<float>& s) {
  Tensor4<float> out(s.dims);
  out.v = s.v;
  return out;
}
template <>
Tensor4<double> cast_tensor<double, double>(const Tensor4<double>& s) {
  Tensor4<double> out(s.dims);
  out.v = s.v;
  return out;
}

}  // namespace rmnet
