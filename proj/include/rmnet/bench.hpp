#pragma once

#include <cstdint>
#include <string>

#include "rmnet/blocks.hpp"

namespace rmnet {

struct BenchResult {
  double block_ms = 0;  // solo extractor forward over the span
  double rm_ms = 0;     // full operator forward (k branches + fusion)
  double ratio = 0;
  int reps = 0;
  int batch = 0;

  std::string to_text() const;
};

// Median-of-reps wall time for the wrapped span versus one plain pass of the
// same extractor, identical batch and thread settings.
template <typename T>
BenchResult bench_rm(const ModelGraph& graph, int reps, int batch,
                     uint64_t seed);

extern template BenchResult bench_rm<float>(const ModelGraph&, int, int,
                                            uint64_t);
extern template BenchResult bench_rm<double>(const ModelGraph&, int, int,
                                             uint64_t);

}  // namespace rmnet
