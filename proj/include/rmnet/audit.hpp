#pragma once

#include <string>
#include <vector>

#include "rmnet/blocks.hpp"

namespace rmnet {

struct AuditOptions {
  int probes = 20;
  uint64_t seed = 1;
  double tol_equivariance = 1e-5;
  double tol_invariance = 1e-5;
  double tol_logits = 1e-4;
};

// Measured deviations are max absolute differences relative to the largest
// reference magnitude. A value of -1 means "not applicable to this model".
struct AuditReport {
  StructureLabel structure = StructureLabel::Baseline;
  Fusion fusion = Fusion::Meanout;
  InterpMode interp = InterpMode::ExactQuarter;
  int k = 0;
  double theta = 0;
  double span_equivariance_dev = -1;  // operator out under rotated input
  double pooled_invariance_dev = -1;  // pooled features under rotated input
  double logits_invariance_dev = -1;  // end to end, quarter-rotated images
  bool enforced = false;  // tolerances are binding for this configuration
  bool pass = true;
  std::vector<std::string> notes;

  // Line-delimited key=value rendering.
  std::string to_text() const;
};

// Probes the model with random span-entry features and quarter-rotated
// inputs. Tolerances bind (enforced=true) only for configurations where the
// algebra is exact: rotations on, shared weights, mean or max fusion, exact
// interpolation; pooled/logit checks additionally need the strict structure.
// Everything else is measured and reported with an explanatory note.
template <typename T>
AuditReport audit_model(const Model<T>& model, const AuditOptions& opts);

extern template AuditReport audit_model<float>(const Model<float>&,
                                               const AuditOptions&);
extern template AuditReport audit_model<double>(const Model<double>&,
                                                const AuditOptions&);

}  // namespace rmnet
