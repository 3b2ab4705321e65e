#include "rmnet/audit.hpp"

#include <cmath>
#include <sstream>

#include "rmnet/ops.hpp"
#include "rmnet/rotation.hpp"

namespace rmnet {

namespace {

template <typename T>
double max_abs(const Tensor4<T>& t) {
  double m = 0.0;
  for (const T& v : t.v) m = std::max(m, std::abs(double(v)));
  return m;
}

template <typename T>
double rel_dev(const Tensor4<T>& got, const Tensor4<T>& want) {
  if (got.dims != want.dims)
    throw contract_error("audit: deviation over mismatched dims " +
                         got.dims.str() + " vs " + want.dims.str());
  double dev = 0.0;
  for (size_t i = 0; i < got.v.size(); ++i)
    dev = std::max(dev, std::abs(double(got.v[i]) - double(want.v[i])));
  const double scale = std::max(max_abs(want), 1e-12);
  return dev / scale;
}

// Smooth blobs supported well inside the plane, so interpolated rotations
// lose nothing off the edges.
template <typename T>
void fill_interior_bumps(Tensor4<T>& t, Rng& rng) {
  const int H = t.dims.h, W = t.dims.w;
  const double cy = (H - 1) * 0.5, cx = (W - 1) * 0.5;
  const double reach = 0.3 * std::min(H, W);
  for (int n = 0; n < t.dims.n; ++n)
    for (int c = 0; c < t.dims.c; ++c) {
      double mx[3], my[3], amp[3], s2[3];
      for (int b = 0; b < 3; ++b) {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = reach * std::sqrt(rng.uniform());
        mx[b] = cx + rad * std::cos(ang);
        my[b] = cy + rad * std::sin(ang);
        amp[b] = rng.uniform(-1.0, 1.0);
        const double sig = std::min(H, W) * rng.uniform(0.10, 0.16);
        s2[b] = 2.0 * sig * sig;
      }
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double v = 0.0;
          for (int b = 0; b < 3; ++b) {
            const double dx = x - mx[b], dy = y - my[b];
            v += amp[b] * std::exp(-(dx * dx + dy * dy) / s2[b]);
          }
          t.at(n, c, y, x) = static_cast<T>(v);
        }
    }
}

std::string fmt_dev(double v) {
  if (v < 0) return "n/a";
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace

std::string AuditReport::to_text() const {
  std::ostringstream os;
  os << "structure=" << structure_name(structure) << "\n";
  if (k > 0) {
    os << "fusion=" << fusion_name(fusion) << "\n"
       << "interp=" << interp_name(interp) << "\n"
       << "k=" << k << "\n"
       << "theta=" << theta << "\n";
  }
  os << "span_equivariance_dev=" << fmt_dev(span_equivariance_dev) << "\n"
     << "pooled_invariance_dev=" << fmt_dev(pooled_invariance_dev) << "\n"
     << "logits_invariance_dev=" << fmt_dev(logits_invariance_dev) << "\n"
     << "enforced=" << (enforced ? 1 : 0) << "\n"
     << "pass=" << (pass ? 1 : 0) << "\n";
  for (const auto& n : notes) os << "note=" << n << "\n";
  return os.str();
}

template <typename T>
AuditReport audit_model(const Model<T>& model, const AuditOptions& opts) {
  if (opts.probes < 1) throw contract_error("audit: probes must be >= 1");
  AuditReport rep;
  rep.structure = structure_label(model.graph);
  Rng rng(mix_seed(opts.seed, 0x6175646974ull));

  // End-to-end check under quarter-rotated inputs (any model shape).
  {
    Tape<T> tape;
    auto x = make_tensor<T>(Dims4{opts.probes, model.graph.in_channels,
                                  model.graph.in_extent,
                                  model.graph.in_extent});
    fill_uniform(*x, rng, -1.0, 1.0);
    auto z0 = model.logits(tape, x);
    double dev = 0.0;
    for (int j = 1; j < 4; ++j) {
      Tape<T> tj;
      auto xr = rot90_exact(tj, x, j);
      auto zj = model.logits(tj, xr);
      dev = std::max(dev, rel_dev(*zj, *z0));
    }
    rep.logits_invariance_dev = dev;
  }

  if (!model.has_span()) {
    rep.notes.push_back(
        "no rotation span; end-to-end deviation reported for reference");
    rep.enforced = false;
    return rep;
  }

  const RmConfig& rm = model.graph.rm;
  rep.fusion = rm.fusion;
  rep.interp = rm.interp;
  rep.k = rm.k;
  rep.theta = rm.theta_degrees;

  const bool algebra_exact = rm.rotations_enabled && rm.weight_sharing &&
                             rm.interp == InterpMode::ExactQuarter &&
                             rm.fusion != Fusion::Embedding;
  const bool whole_trunk = model.graph.span->first == 1 &&
                           rep.structure == StructureLabel::Strict;

  // Span-level probes: rotate the operator's input, compare against the
  // rotated output (equivariance) and the pooled features (invariance).
  Dims4 sd = model.span_input_dims(opts.probes);
  auto f0 = make_tensor<T>(sd);
  if (rm.interp == InterpMode::ExactQuarter)
    fill_uniform(*f0, rng, -1.0, 1.0);
  else
    fill_interior_bumps(*f0, rng);

  Tape<T> tape;
  auto out0 = model.run_span_rm(tape, f0);
  auto pool0 = global_avg_pool(tape, out0);
  double equiv_dev = 0.0, pool_dev = 0.0;
  for (int i = 1; i < rm.k; ++i) {
    const double ang = i * rm.theta_degrees;
    Tape<T> ti;
    TensorPtr<T> fi, expect;
    if (rm.interp == InterpMode::ExactQuarter) {
      const int q = static_cast<int>(std::llround(ang / 90.0));
      fi = rot90_exact(ti, f0, q);
      expect = rot90_exact(ti, out0, q);
    } else {
      fi = rotate_resample(ti, f0, ang, sd.h, sd.w);
      expect = rotate_resample(ti, out0, ang, out0->dims.h, out0->dims.w);
    }
    auto outi = model.run_span_rm(ti, fi);
    equiv_dev = std::max(equiv_dev, rel_dev(*outi, *expect));
    auto pooli = global_avg_pool(ti, outi);
    pool_dev = std::max(pool_dev, rel_dev(*pooli, *pool0));
  }
  rep.span_equivariance_dev = equiv_dev;
  rep.pooled_invariance_dev = pool_dev;

  if (!rm.rotations_enabled)
    rep.notes.push_back(
        "rotations disabled; operator reduces to the plain extractor");
  if (!rm.weight_sharing)
    rep.notes.push_back(
        "independent branch weights break the rotation algebra");
  if (rm.fusion == Fusion::Embedding)
    rep.notes.push_back(
        "embedding fusion mixes branches by position and is not "
        "rotation-invariant");
  if (rm.interp == InterpMode::Bilinear)
    rep.notes.push_back(
        "interpolated rotations are approximate; deviations reported, not "
        "enforced");
  if (rep.structure == StructureLabel::Relaxed)
    rep.notes.push_back(
        "blocks after the span process spatial maps; end-to-end invariance "
        "is not expected");
  if (model.graph.span->first > 1)
    rep.notes.push_back(
        "blocks before the span are not rotation-equivariant; input-level "
        "invariance is not expected");

  rep.enforced = algebra_exact;
  if (algebra_exact) {
    rep.pass = rep.span_equivariance_dev < opts.tol_equivariance &&
               rep.pooled_invariance_dev < opts.tol_invariance;
    if (whole_trunk)
      rep.pass = rep.pass && rep.logits_invariance_dev < opts.tol_logits;
  }
  return rep;
}

template AuditReport audit_model<float>(const Model<float>&,
                                        const AuditOptions&);
template AuditReport audit_model<double>(const Model<double>&,
                                         const AuditOptions&);

}  // namespace rmnet
