#include "rmnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <vector>

namespace rmnet {

namespace {

using Clock = std::chrono::steady_clock;

double median_ms(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string BenchResult::to_text() const {
  std::ostringstream os;
  os << "batch=" << batch << "\n"
     << "reps=" << reps << "\n"
     << "block_ms=" << block_ms << "\n"
     << "rm_ms=" << rm_ms << "\n"
     << "ratio=" << ratio << "\n";
  return os.str();
}

template <typename T>
BenchResult bench_rm(const ModelGraph& graph, int reps, int batch,
                     uint64_t seed) {
  if (reps < 1) throw config_error("bench: reps must be >= 1");
  if (batch < 1) throw config_error("bench: batch must be >= 1");
  if (!graph.span)
    throw config_error("bench: the model graph has no rotation span");
  auto model = build_model<T>(graph, seed);
  auto x = make_tensor<T>(model.span_input_dims(batch));
  Rng rng(mix_seed(seed, 0x62656e6368ull));
  fill_uniform(*x, rng, -1.0, 1.0);

  auto time_one = [&](auto&& fn) {
    const auto t0 = Clock::now();
    Tape<T> tape;
    auto out = fn(tape);
    const auto t1 = Clock::now();
    (void)out;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };

  // One untimed pass each to warm allocators and caches.
  time_one([&](Tape<T>& t) { return model.run_span_plain(t, x, 0); });
  time_one([&](Tape<T>& t) { return model.run_span_rm(t, x); });

  std::vector<double> solo, wrapped;
  for (int r = 0; r < reps; ++r) {
    solo.push_back(
        time_one([&](Tape<T>& t) { return model.run_span_plain(t, x, 0); }));
    wrapped.push_back(
        time_one([&](Tape<T>& t) { return model.run_span_rm(t, x); }));
  }
  BenchResult res;
  res.reps = reps;
  res.batch = batch;
  res.block_ms = median_ms(solo);
  res.rm_ms = median_ms(wrapped);
  res.ratio = res.rm_ms / res.block_ms;
  return res;
}

template BenchResult bench_rm<float>(const ModelGraph&, int, int, uint64_t);
template BenchResult bench_rm<double>(const ModelGraph&, int, int, uint64_t);

}  // namespace rmnet
