#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmnet/blocks.hpp"

namespace rmnet {

// In-memory database of continuous embedding vectors. Item ids are positions
// in insertion order; `fingerprint` ties the index to the producing model's
// parameters.
struct RetrievalIndex {
  int dim = 0;
  std::vector<float> vecs;          // row-major, item * dim
  std::vector<int> labels;
  std::vector<std::string> names;
  uint32_t fingerprint = 0;

  int size() const { return static_cast<int>(labels.size()); }
  const float* vec(int id) const { return vecs.data() + int64_t(id) * dim; }
  void add(const std::string& name, int label, const std::vector<float>& v);
  // Database must hold at least 10 items to answer top-10 queries.
  void validate_ready() const;
};

struct RankedItem {
  int id = 0;
  double similarity = 0;   // cosine; degenerate items rank last
  bool degenerate = false; // stored vector had zero norm
};

// Exhaustive cosine-similarity scan, descending; ties broken by ascending id.
// Throws contract_error on a zero-norm query or k > database size.
std::vector<RankedItem> query_topk(const RetrievalIndex& index,
                                   const float* query, int k);

// Embedding vectors for a batch via the model's hash layer, values only.
template <typename T>
std::vector<std::vector<float>> embed_batch(const Model<T>& model,
                                            const Tensor4<T>& x);

extern template std::vector<std::vector<float>> embed_batch<float>(
    const Model<float>&, const Tensor4<float>&);
extern template std::vector<std::vector<float>> embed_batch<double>(
    const Model<double>&, const Tensor4<double>&);

}  // namespace rmnet
