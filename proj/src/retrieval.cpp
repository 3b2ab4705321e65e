#include "rmnet/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace rmnet {

void RetrievalIndex::add(const std::string& name, int label,
                         const std::vector<float>& v) {
  if (dim == 0) dim = static_cast<int>(v.size());
  if (static_cast<int>(v.size()) != dim)
    throw contract_error("retrieval index: vector length " +
                         std::to_string(v.size()) + " vs dim " +
                         std::to_string(dim));
  vecs.insert(vecs.end(), v.begin(), v.end());
  labels.push_back(label);
  names.push_back(name);
}

void RetrievalIndex::validate_ready() const {
  if (size() < 10)
    throw config_error("retrieval index holds " + std::to_string(size()) +
                       " items; at least 10 are required");
}

std::vector<RankedItem> query_topk(const RetrievalIndex& index,
                                   const float* query, int k) {
  if (k < 1 || k > index.size())
    throw contract_error("query_topk: k=" + std::to_string(k) +
                         " outside database size " +
                         std::to_string(index.size()));
  double qnorm = 0.0;
  for (int j = 0; j < index.dim; ++j)
    qnorm += double(query[j]) * double(query[j]);
  qnorm = std::sqrt(qnorm);
  if (qnorm == 0.0)
    throw contract_error("query_topk: zero-norm query embedding");

  std::vector<RankedItem> all(static_cast<size_t>(index.size()));
  for (int id = 0; id < index.size(); ++id) {
    const float* v = index.vec(id);
    double dot = 0.0, vnorm = 0.0;
    for (int j = 0; j < index.dim; ++j) {
      dot += double(v[j]) * double(query[j]);
      vnorm += double(v[j]) * double(v[j]);
    }
    RankedItem& item = all[static_cast<size_t>(id)];
    item.id = id;
    if (vnorm == 0.0) {
      // Flag and sink below every well-formed item.
      item.degenerate = true;
      item.similarity = -2.0;
    } else {
      item.similarity = dot / (qnorm * std::sqrt(vnorm));
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const RankedItem& a, const RankedItem& b) {
                     if (a.similarity != b.similarity)
                       return a.similarity > b.similarity;
                     return a.id < b.id;
                   });
  all.resize(static_cast<size_t>(k));
  return all;
}

template <typename T>
std::vector<std::vector<float>> embed_batch(const Model<T>& model,
                                            const Tensor4<T>& x) {
  Tape<T> tape;
  auto xin = std::make_shared<Tensor4<T>>(x);
  auto emb = model.embedding_vec(tape, xin);
  std::vector<std::vector<float>> out(static_cast<size_t>(emb->dims.n));
  const int L = emb->dims.c;
  for (int n = 0; n < emb->dims.n; ++n) {
    out[static_cast<size_t>(n)].resize(static_cast<size_t>(L));
    for (int j = 0; j < L; ++j)
      out[static_cast<size_t>(n)][static_cast<size_t>(j)] =
          static_cast<float>(emb->at(n, j, 0, 0));
  }
  return out;
}

template std::vector<std::vector<float>> embed_batch<float>(
    const Model<float>&, const Tensor4<float>&);
template std::vector<std::vector<float>> embed_batch<double>(
    const Model<double>&, const Tensor4<double>&);

}  // namespace rmnet
