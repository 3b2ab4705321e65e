#include "rmnet/runtime.hpp"

#include <atomic>
#include <cmath>
#include <thread>
#include <vector>

namespace rmnet {

namespace {

uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::atomic<int> g_max_threads{0};

}  // namespace

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b * 0x9e3779b97f4a7c15ull + 0x165667b19e3779f9ull);
  splitmix64(s);
  return splitmix64(s);
}

Rng::Rng(uint64_t seed) : state_(seed) {
  // Warm the state so small seeds diverge immediately.
  splitmix64(state_);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  // Top 53 bits -> [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw contract_error("uniform_int: hi < lo");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
  // Rejection sampling kills modulo bias.
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return lo + static_cast<int64_t>(v % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double Rng::normal(double mean, double stdev) { return mean + stdev * normal(); }

Rng Rng::fork(uint64_t stream) const {
  Rng child(mix_seed(state_, stream));
  return child;
}

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  int n = g_max_threads.load();
  if (n == 0) {
    unsigned hc = std::thread::hardware_concurrency();
    n = hc == 0 ? 1 : static_cast<int>(hc);
  }
  return n;
}

ThreadGuard::ThreadGuard(int n) : saved_(g_max_threads.load()) {
  set_max_threads(n);
}

ThreadGuard::~ThreadGuard() { g_max_threads.store(saved_); }

void parallel_for(int64_t total,
                  const std::function<void(int64_t, int64_t, int)>& fn) {
  if (total <= 0) return;
  int workers = max_threads();
  if (workers > total) workers = static_cast<int>(total);
  if (workers <= 1) {
    fn(0, total, 0);
    return;
  }
  // Static contiguous chunks: worker w gets [w*q + min(w,r), ...), so the
  // partition is a pure function of (total, workers).
  int64_t q = total / workers;
  int64_t r = total % workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  int64_t begin = 0;
  for (int w = 0; w < workers; ++w) {
    int64_t len = q + (w < r ? 1 : 0);
    int64_t end = begin + len;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

}  // namespace rmnet
