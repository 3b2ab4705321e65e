#include "rmnet/metrics.hpp"

#include <map>

namespace rmnet {

ConfusionMatrix::ConfusionMatrix(int num_classes) : m_(num_classes) {
  if (num_classes < 1)
    throw contract_error("confusion matrix needs >= 1 class");
  counts_.assign(static_cast<size_t>(m_) * m_, 0);
}

void ConfusionMatrix::add(int truth, int predicted, int64_t count) {
  if (truth < 0 || truth >= m_ || predicted < 0 || predicted >= m_)
    throw contract_error("confusion matrix index out of range");
  if (count < 0) throw contract_error("confusion matrix negative count");
  counts_[static_cast<size_t>(truth) * m_ + predicted] += count;
}

int64_t ConfusionMatrix::at(int truth, int predicted) const {
  if (truth < 0 || truth >= m_ || predicted < 0 || predicted >= m_)
    throw contract_error("confusion matrix index out of range");
  return counts_[static_cast<size_t>(truth) * m_ + predicted];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

MetricsReport per_class_metrics(const ConfusionMatrix& cm) {
  const int m = cm.num_classes();
  const int64_t n = cm.total();
  if (n == 0) throw contract_error("metrics on an empty confusion matrix");
  MetricsReport rep;
  rep.per_class.resize(static_cast<size_t>(m));
  int64_t diag = 0;
  for (int c = 0; c < m; ++c) {
    ClassMetrics& x = rep.per_class[static_cast<size_t>(c)];
    x.tp = cm.at(c, c);
    diag += x.tp;
    for (int j = 0; j < m; ++j) {
      if (j == c) continue;
      x.fn += cm.at(c, j);  // truth c predicted elsewhere
      x.fp += cm.at(j, c);  // truth elsewhere predicted c
    }
    x.tn = n - x.tp - x.fp - x.fn;
    if (x.tp + x.fp > 0)
      x.precision = double(x.tp) / double(x.tp + x.fp);
    else
      x.precision_defined = false;
    if (x.tp + x.fn > 0)
      x.sensitivity = double(x.tp) / double(x.tp + x.fn);
    else
      x.sensitivity_defined = false;
    if (x.tn + x.fp > 0)
      x.specificity = double(x.tn) / double(x.tn + x.fp);
    else
      x.specificity_defined = false;
    rep.macro_precision += x.precision;
    rep.macro_sensitivity += x.sensitivity;
    rep.macro_specificity += x.specificity;
  }
  rep.accuracy = double(diag) / double(n);
  rep.macro_precision /= m;
  rep.macro_sensitivity /= m;
  rep.macro_specificity /= m;
  return rep;
}

KappaResult cohen_kappa(const ConfusionMatrix& cm) {
  const int m = cm.num_classes();
  const int64_t n = cm.total();
  if (n == 0) throw contract_error("kappa on an empty confusion matrix");
  KappaResult r;
  int64_t diag = 0;
  int64_t marg = 0;  // sum of row_c * col_c marginal products
  for (int c = 0; c < m; ++c) {
    diag += cm.at(c, c);
    int64_t row = 0, col = 0;
    for (int j = 0; j < m; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    marg += row * col;
  }
  r.p0 = double(diag) / double(n);
  r.pe = double(marg) / (double(n) * double(n));
  // (p0 - pe) / (1 - pe) cancels to a ratio of integers; dividing those
  // directly keeps representable values (and the band cuts) exact.
  if (marg >= n * n) {
    r.defined = false;
    r.kappa = 0.0;
  } else {
    r.kappa = double(n * diag - marg) / double(n * n - marg);
  }
  if (!r.defined)
    r.band = "undefined";
  else if (r.kappa >= 0.75)
    r.band = "high";
  else if (r.kappa >= 0.40)
    r.band = "moderate";
  else
    r.band = "low";
  return r;
}

namespace {

double class_balanced(const std::vector<RankedQuery>& queries,
                      double (*per_query)(const RankedQuery&)) {
  if (queries.empty()) throw contract_error("retrieval metrics: no queries");
  std::map<int, std::pair<double, int64_t>> by_class;  // sum, count
  for (const auto& q : queries) {
    if (q.retrieved.size() != 10)
      throw contract_error("retrieval metrics: expected exactly 10 results, "
                           "got " + std::to_string(q.retrieved.size()));
    auto& slot = by_class[q.query_label];
    slot.first += per_query(q);
    slot.second += 1;
  }
  double acc = 0.0;
  for (const auto& [label, slot] : by_class)
    acc += slot.first / double(slot.second);
  return acc / double(by_class.size());
}

double precision_at_10(const RankedQuery& q) {
  int hits = 0;
  for (int lbl : q.retrieved)
    if (lbl == q.query_label) ++hits;
  return double(hits) / 10.0;
}

double reciprocal_rank(const RankedQuery& q) {
  for (size_t i = 0; i < q.retrieved.size(); ++i)
    if (q.retrieved[i] == q.query_label) return 1.0 / double(i + 1);
  return 0.0;
}

}  // namespace

double map_at_10(const std::vector<RankedQuery>& queries) {
  return class_balanced(queries, precision_at_10);
}

double mrr_at_10(const std::vector<RankedQuery>& queries) {
  return class_balanced(queries, reciprocal_rank);
}

}  // namespace rmnet
