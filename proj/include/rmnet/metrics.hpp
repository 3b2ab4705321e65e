#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmnet/runtime.hpp"

namespace rmnet {

// Square count matrix indexed [truth][prediction].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  void add(int truth, int predicted, int64_t count = 1);
  int64_t at(int truth, int predicted) const;
  int num_classes() const { return m_; }
  int64_t total() const;

 private:
  int m_;
  std::vector<int64_t> counts_;
};

// One-vs-rest counts and rates for a single class. A zero denominator keeps
// the rate at 0 and clears the corresponding `*_defined` flag.
struct ClassMetrics {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0, sensitivity = 0, specificity = 0;
  bool precision_defined = true;
  bool sensitivity_defined = true;
  bool specificity_defined = true;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0;
  double macro_precision = 0, macro_sensitivity = 0, macro_specificity = 0;
};

MetricsReport per_class_metrics(const ConfusionMatrix& cm);

// Chance-corrected agreement: (p0 - pe) / (1 - pe) with pe from the row and
// column marginals. pe == 1 (all mass in one cell row/column pair) leaves
// kappa undefined. Bands: >= 0.75 high, >= 0.40 moderate, else low.
struct KappaResult {
  double p0 = 0, pe = 0, kappa = 0;
  bool defined = true;
  std::string band;
};

KappaResult cohen_kappa(const ConfusionMatrix& cm);

// One retrieval query: the query's class and the classes of the ten database
// items returned, best first.
struct RankedQuery {
  int query_label = 0;
  std::vector<int> retrieved;  // exactly 10 labels
};

// Mean over classes of the mean over that class's queries of
// (matches in top 10) / 10.
double map_at_10(const std::vector<RankedQuery>& queries);

// Same outer structure with 1/rank of the first match (0 when no match).
double mrr_at_10(const std::vector<RankedQuery>& queries);

}  // namespace rmnet
