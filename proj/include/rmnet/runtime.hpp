#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace rmnet {

// Bad user-supplied configuration (unknown key, inconsistent k*theta, ...).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch or extent underflow.
struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API precondition violated by the caller (not a user-config problem).
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Training produced a non-finite loss.
struct divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File I/O or file format failure (missing file, bad magic, CRC mismatch).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. Wraps mt19937_64 but does its own uniform/normal
// derivation, because libstdc++ distribution outputs are not pinned across
// implementations and reproducibility here is byte-level.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive on both ends.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller (one spare cached).
  double normal();
  double normal(double mean, double stdev);

  // Independent child stream; distinct `stream` values give distinct streams.
  Rng fork(uint64_t stream) const;

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Mixes two 64-bit values into a well-spread seed (splitmix64 finalizer).
uint64_t mix_seed(uint64_t a, uint64_t b);

// Global worker-thread cap. 0 means "hardware concurrency". Strict
// (bit-deterministic) runs pin this to 1 for their duration.
void set_max_threads(int n);
int max_threads();

// RAII override of the thread cap.
class ThreadGuard {
 public:
  explicit ThreadGuard(int n);
  ~ThreadGuard();
  ThreadGuard(const ThreadGuard&) = delete;
  ThreadGuard& operator=(const ThreadGuard&) = delete;

 private:
  int saved_;
};

// Splits [0, total) into contiguous chunks, one per worker. fn(begin, end,
// worker_index) runs on each chunk; chunk boundaries depend only on `total`
// and the worker count, never on scheduling.
void parallel_for(int64_t total,
                  const std::function<void(int64_t, int64_t, int)>& fn);

}  // namespace rmnet
