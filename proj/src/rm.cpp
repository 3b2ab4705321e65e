#include "rmnet/rm.hpp"

#include <cmath>
#include <memory>

namespace rmnet {

const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::Meanout: return "meanout";
    case Fusion::Maxout: return "maxout";
    case Fusion::Embedding: return "embedding";
  }
  return "?";
}

const char* interp_name(InterpMode m) {
  return m == InterpMode::ExactQuarter ? "exact" : "bilinear";
}

Fusion fusion_from_name(const std::string& s) {
  if (s == "meanout") return Fusion::Meanout;
  if (s == "maxout") return Fusion::Maxout;
  if (s == "embedding") return Fusion::Embedding;
  throw config_error("unknown fusion '" + s +
                     "' (expected meanout|maxout|embedding)");
}

InterpMode interp_from_name(const std::string& s) {
  if (s == "exact") return InterpMode::ExactQuarter;
  if (s == "bilinear") return InterpMode::Bilinear;
  throw config_error("unknown interpolation '" + s +
                     "' (expected exact|bilinear)");
}

void RmConfig::validate() const {
  if (k < 1) throw config_error("rm: k must be >= 1, got " + std::to_string(k));
  if (!(theta_degrees > 0))
    throw config_error("rm: theta must be positive");
  if (std::abs(k * theta_degrees - 360.0) > 1e-6)
    throw config_error("rm: k * theta must equal 360 degrees, got " +
                       std::to_string(k) + " * " +
                       std::to_string(theta_degrees));
  if (interp == InterpMode::ExactQuarter) {
    double q = theta_degrees / 90.0;
    if (std::abs(q - std::nearbyint(q)) > 1e-9)
      throw config_error(
          "rm: exact interpolation needs theta to be a multiple of 90; use "
          "bilinear for theta=" + std::to_string(theta_degrees));
  }
  if (canvas < 0) throw config_error("rm: canvas must be >= 0");
}

namespace {

template <typename T>
void require_same_branch_dims(const std::vector<TensorPtr<T>>& branches,
                              const char* what) {
  if (branches.empty())
    throw contract_error(std::string(what) + ": no branches");
  for (const auto& b : branches)
    if (b->dims != branches[0]->dims)
      throw shape_error(std::string(what) + ": branch dims " + b->dims.str() +
                        " vs " + branches[0]->dims.str());
}

}  // namespace

template <typename T>
TensorPtr<T> fuse_meanout(Tape<T>& tape,
                          const std::vector<TensorPtr<T>>& branches) {
  require_same_branch_dims(branches, "fuse_meanout");
  const size_t k = branches.size();
  if (k == 1) return branches[0];
  std::vector<TensorPtr<T>> level = branches;
  while (level.size() > 1) {
    std::vector<TensorPtr<T>> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(add(tape, level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level.swap(next);
  }
  return mul_scalar(tape, level[0], static_cast<T>(1.0 / double(k)));
}

template <typename T>
TensorPtr<T> fuse_maxout(Tape<T>& tape,
                         const std::vector<TensorPtr<T>>& branches) {
  require_same_branch_dims(branches, "fuse_maxout");
  const size_t k = branches.size();
  if (k == 1) return branches[0];
  auto out = make_tensor<T>(branches[0]->dims);
  auto winner = std::make_shared<std::vector<uint16_t>>(out->v.size(), 0);
  out->v = branches[0]->v;
  for (size_t i = 1; i < k; ++i) {
    const auto& bv = branches[i]->v;
    for (size_t j = 0; j < bv.size(); ++j) {
      // Strict > keeps the lowest branch index on ties.
      if (bv[j] > out->v[j]) {
        out->v[j] = bv[j];
        (*winner)[j] = static_cast<uint16_t>(i);
      }
    }
  }
  tape.record(out, [out, branches, winner] {
    for (const auto& b : branches) b->ensure_grad();
    for (size_t j = 0; j < out->g.size(); ++j)
      branches[(*winner)[j]]->g[j] += out->g[j];
  });
  return out;
}

template <typename T>
TensorPtr<T> fuse_embedding(Tape<T>& tape,
                            const std::vector<TensorPtr<T>>& branches,
                            const TensorPtr<T>& w, const TensorPtr<T>& b) {
  require_same_branch_dims(branches, "fuse_embedding");
  if (!w) throw contract_error("fuse_embedding: missing 1x1 weights");
  const int c = branches[0]->dims.c;
  const int kc = c * static_cast<int>(branches.size());
  if (w->dims.h != 1 || w->dims.w != 1 || w->dims.c != kc || w->dims.n != c)
    throw shape_error("fuse_embedding: weights " + w->dims.str() +
                      ", expected (" + std::to_string(c) + "," +
                      std::to_string(kc) + ",1,1)");
  auto cat = concat_channels(tape, branches);
  return conv2d(tape, cat, w, b, 1, 0);
}

template <typename T>
TensorPtr<T> rm_forward(Tape<T>& tape, const TensorPtr<T>& x,
                        const BranchFn<T>& f, const RmConfig& cfg) {
  cfg.validate();
  if (!f.run) throw contract_error("rm_forward: extractor not set");
  const int s = f.downsample;
  if (s < 1) throw contract_error("rm_forward: downsample must be >= 1");
  const int H = x->dims.h, W = x->dims.w;
  if (H % s != 0 || W % s != 0)
    throw config_error("rm: input extent " + x->dims.str() +
                       " not divisible by extractor downsample " +
                       std::to_string(s));
  const int Hc = H / s, Wc = W / s;

  // Identical branches fold: without rotations, shared weights and a mean
  // fusion, every branch is the same computation.
  if (!cfg.rotations_enabled && cfg.weight_sharing &&
      cfg.fusion == Fusion::Meanout) {
    auto y = f.run(tape, x, 0);
    if (y->dims.h != Hc || y->dims.w != Wc)
      throw shape_error("rm: extractor output " + y->dims.str() +
                        " does not match expected extent " +
                        std::to_string(Hc) + "x" + std::to_string(Wc));
    return y;
  }

  std::vector<TensorPtr<T>> branches;
  branches.reserve(static_cast<size_t>(cfg.k));

  if (!cfg.rotations_enabled) {
    for (int i = 0; i < cfg.k; ++i) {
      auto y = f.run(tape, x, i);
      if (y->dims.h != Hc || y->dims.w != Wc)
        throw shape_error("rm: extractor output " + y->dims.str() +
                          " does not match expected extent " +
                          std::to_string(Hc) + "x" + std::to_string(Wc));
      branches.push_back(y);
    }
  } else if (cfg.interp == InterpMode::ExactQuarter) {
    const int step = static_cast<int>(std::llround(cfg.theta_degrees / 90.0));
    for (int i = 0; i < cfg.k; ++i) {
      auto xi = rot90_exact(tape, x, i * step);
      auto yi = f.run(tape, xi, i);
      branches.push_back(realign(tape, yi, i, cfg.theta_degrees,
                                 InterpMode::ExactQuarter, Hc, Wc));
    }
  } else {
    int D = cfg.canvas;
    if (D == 0) {
      D = pick_canvas(H, W, s);
    } else {
      if (D < diagonal_bound(H, W))
        throw config_error("rm: canvas " + std::to_string(D) +
                           " smaller than the rotated diagonal of " +
                           x->dims.str());
      if ((D - H) % (2 * s) != 0 || (D - W) % (2 * s) != 0)
        throw config_error("rm: canvas " + std::to_string(D) +
                           " is not stride-aligned with input " +
                           x->dims.str() + " (downsample " +
                           std::to_string(s) + ")");
    }
    const int Dc = D / s;
    for (int i = 0; i < cfg.k; ++i) {
      auto xi = rotate_resample(tape, x, i * cfg.theta_degrees, D, D);
      auto yi = f.run(tape, xi, i);
      if (yi->dims.h != Dc || yi->dims.w != Dc)
        throw shape_error("rm: extractor output " + yi->dims.str() +
                          " does not match canvas extent " +
                          std::to_string(Dc));
      branches.push_back(realign(tape, yi, i, cfg.theta_degrees,
                                 InterpMode::Bilinear, Hc, Wc));
    }
  }

  switch (cfg.fusion) {
    case Fusion::Meanout: return fuse_meanout(tape, branches);
    case Fusion::Maxout: return fuse_maxout(tape, branches);
    case Fusion::Embedding:
      return fuse_embedding(tape, branches, f.embed_w, f.embed_b);
  }
  throw contract_error("rm_forward: bad fusion enum");
}

#define RMNET_INST_RM(T)                                                       \
  template TensorPtr<T> fuse_meanout<T>(Tape<T>&,                             \
                                        const std::vector<TensorPtr<T>>&);    \
  template TensorPtr<T> fuse_maxout<T>(Tape<T>&,                              \
                                       const std::vector<TensorPtr<T>>&);     \
  template TensorPtr<T> fuse_embedding<T>(Tape<T>&,                           \
                                          const std::vector<TensorPtr<T>>&,   \
                                          const TensorPtr<T>&,                 \
                                          const TensorPtr<T>&);                \
  template TensorPtr<T> rm_forward<T>(Tape<T>&, const TensorPtr<T>&,          \
                                      const BranchFn<T>&, const RmConfig&);

RMNET_INST_RM(float)
RMNET_INST_RM(double)
#undef RMNET_INST_RM

}  // namespace rmnet
