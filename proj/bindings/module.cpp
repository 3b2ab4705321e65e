#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "rmnet/dataset.hpp"
#include "rmnet/metrics.hpp"
#include "rmnet/ops.hpp"
#include "rmnet/retrieval.hpp"
#include "rmnet/rm.hpp"
#include "rmnet/rotation.hpp"

namespace py = pybind11;
using namespace rmnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

TensorPtr<double> to_tensor(const Array& a, const char* what) {
  if (a.ndim() != 4)
    throw py::value_error(std::string(what) +
                          " must be a 4-d array shaped (n, c, h, w)");
  Dims4 d{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
          static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3))};
  auto t = make_tensor<double>(d);
  std::memcpy(t->v.data(), a.data(),
              sizeof(double) * static_cast<size_t>(d.count()));
  return t;
}

py::array_t<double> from_tensor(const Tensor4<double>& t) {
  py::array_t<double> a({t.dims.n, t.dims.c, t.dims.h, t.dims.w});
  std::memcpy(a.mutable_data(), t.v.data(),
              sizeof(double) * static_cast<size_t>(t.size()));
  return a;
}

// Bias vectors arrive as (c,) arrays; ops expect (1, c, 1, 1) tensors.
TensorPtr<double> bias_tensor(const py::object& b, const char* what) {
  if (b.is_none()) return nullptr;
  Array a = b.cast<Array>();
  if (a.ndim() != 1)
    throw py::value_error(std::string(what) + " must be a 1-d array");
  auto t = make_tensor<double>(Dims4{1, static_cast<int>(a.shape(0)), 1, 1});
  std::memcpy(t->v.data(), a.data(), sizeof(double) * size_t(a.shape(0)));
  return t;
}

ConfusionMatrix matrix_from(const py::array_t<int64_t, py::array::c_style |
                                                           py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1))
    throw py::value_error("confusion matrix must be a square 2-d array");
  const int m = static_cast<int>(a.shape(0));
  ConfusionMatrix cm(m);
  auto r = a.unchecked<2>();
  for (int t = 0; t < m; ++t)
    for (int p = 0; p < m; ++p)
      if (r(t, p)) cm.add(t, p, r(t, p));
  return cm;
}

std::vector<RankedQuery> queries_from(
    const std::vector<int>& query_labels,
    const py::array_t<int64_t, py::array::c_style | py::array::forcecast>&
        retrieved) {
  if (retrieved.ndim() != 2)
    throw py::value_error("retrieved must be a 2-d array (queries, 10)");
  if (static_cast<size_t>(retrieved.shape(0)) != query_labels.size())
    throw py::value_error("query_labels and retrieved row counts differ");
  auto r = retrieved.unchecked<2>();
  std::vector<RankedQuery> qs(query_labels.size());
  for (size_t i = 0; i < qs.size(); ++i) {
    qs[i].query_label = query_labels[i];
    for (py::ssize_t j = 0; j < retrieved.shape(1); ++j)
      qs[i].retrieved.push_back(static_cast<int>(r(py::ssize_t(i), j)));
  }
  return qs;
}

RmConfig rm_config(int k, double theta, const std::string& fusion,
                   const std::string& interp, bool rotations, int canvas) {
  RmConfig cfg;
  cfg.k = k;
  cfg.theta_degrees = theta;
  cfg.fusion = fusion_from_name(fusion);
  cfg.interp = interp_from_name(interp);
  cfg.rotations_enabled = rotations;
  cfg.canvas = canvas;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rotation-pooled convolution primitives";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const io_error& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const config_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const shape_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const contract_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("diagonal_bound", &diagonal_bound, py::arg("h"), py::arg("w"),
        "Smallest extent whose square covers the h x w diagonal.");
  m.def("pick_canvas", &pick_canvas, py::arg("h"), py::arg("w"),
        py::arg("downsample") = 1,
        "Rotation canvas: covers the diagonal, parity-aligned with the "
        "content so centered embed and crop offsets stay integral.");

  m.def(
      "rot90",
      [](const Array& x, int turns) {
        Tape<double> tape;
        return from_tensor(*rot90_exact(tape, to_tensor(x, "x"), turns));
      },
      py::arg("x"), py::arg("turns") = 1,
      "Exact clockwise quarter-turn rotation of (n, c, h, w) maps.");

  m.def(
      "rotate",
      [](const Array& x, double degrees, int out_h, int out_w) {
        Tape<double> tape;
        auto t = to_tensor(x, "x");
        if (out_h == 0) out_h = t->dims.h;
        if (out_w == 0) out_w = t->dims.w;
        return from_tensor(*rotate_resample(tape, t, degrees, out_h, out_w));
      },
      py::arg("x"), py::arg("degrees"), py::arg("out_h") = 0,
      py::arg("out_w") = 0,
      "Clockwise bilinear rotation about the center onto an (out_h, out_w) "
      "grid; zero fill outside, exact pixel copies at multiples of 90.");

  m.def(
      "realign",
      [](const Array& x, int branch, double theta, const std::string& interp,
         int out_h, int out_w) {
        Tape<double> tape;
        auto t = to_tensor(x, "x");
        if (out_h == 0) out_h = t->dims.h;
        if (out_w == 0) out_w = t->dims.w;
        return from_tensor(*realign(tape, t, branch, theta,
                                    interp_from_name(interp), out_h, out_w));
      },
      py::arg("x"), py::arg("branch"), py::arg("theta"),
      py::arg("interp") = "exact", py::arg("out_h") = 0, py::arg("out_w") = 0,
      "Undo branch i's expansion rotation (i * theta clockwise).");

  m.def(
      "conv2d",
      [](const Array& x, const Array& w, const py::object& b, int stride,
         int pad) {
        Tape<double> tape;
        return from_tensor(*conv2d(tape, to_tensor(x, "x"), to_tensor(w, "w"),
                                   bias_tensor(b, "b"), stride, pad));
      },
      py::arg("x"), py::arg("w"), py::arg("b") = py::none(),
      py::arg("stride") = 1, py::arg("pad") = 0,
      "Cross-correlation of (n, cin, h, w) with (cout, cin, k, k).");

  m.def(
      "global_avg_pool",
      [](const Array& x) {
        Tape<double> tape;
        return from_tensor(*global_avg_pool(tape, to_tensor(x, "x")));
      },
      py::arg("x"), "Mean over the spatial extent, (n, c, h, w) -> (n, c, 1, 1).");

  m.def(
      "fuse",
      [](const std::vector<Array>& branches, const std::string& mode) {
        if (branches.empty())
          throw py::value_error("fuse needs at least one branch");
        Tape<double> tape;
        std::vector<TensorPtr<double>> ts;
        for (const auto& b : branches) ts.push_back(to_tensor(b, "branch"));
        if (mode == "meanout") return from_tensor(*fuse_meanout(tape, ts));
        if (mode == "maxout") return from_tensor(*fuse_maxout(tape, ts));
        throw py::value_error("fuse mode must be meanout or maxout");
      },
      py::arg("branches"), py::arg("mode") = "meanout",
      "Elementwise mean or max across same-shape branch outputs.");

  m.def(
      "rm_conv",
      [](const Array& x, const Array& w, const py::object& b, int stride,
         int pad, int k, double theta, const std::string& fusion,
         const std::string& interp, bool rotations, int canvas,
         const py::object& embed_w, const py::object& embed_b) {
        Tape<double> tape;
        BranchFn<double> f;
        auto wt = to_tensor(w, "w");
        auto bt = bias_tensor(b, "b");
        f.run = [wt, bt, stride, pad](Tape<double>& t,
                                      const TensorPtr<double>& in, int) {
          return conv2d(t, in, wt, bt, stride, pad);
        };
        f.downsample = stride;
        if (!embed_w.is_none()) {
          Array ew = embed_w.cast<Array>();
          if (ew.ndim() != 2)
            throw py::value_error("embed_w must be 2-d (c, k*c)");
          auto t = make_tensor<double>(Dims4{static_cast<int>(ew.shape(0)),
                                             static_cast<int>(ew.shape(1)), 1,
                                             1});
          std::memcpy(t->v.data(), ew.data(),
                      sizeof(double) * static_cast<size_t>(t->size()));
          f.embed_w = t;
          f.embed_b = bias_tensor(embed_b, "embed_b");
        }
        auto cfg = rm_config(k, theta, fusion, interp, rotations, canvas);
        return from_tensor(*rm_forward(tape, to_tensor(x, "x"), f, cfg));
      },
      py::arg("x"), py::arg("w"), py::arg("b") = py::none(),
      py::arg("stride") = 1, py::arg("pad") = 1, py::arg("k") = 4,
      py::arg("theta") = 90.0, py::arg("fusion") = "meanout",
      py::arg("interp") = "exact", py::arg("rotations") = true,
      py::arg("canvas") = 0, py::arg("embed_w") = py::none(),
      py::arg("embed_b") = py::none(),
      "Rotation-fused convolution: k clockwise-rotated copies through one "
      "shared conv, counter-rotated and fused.");

  m.def(
      "kappa",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>&
             cm) {
        KappaResult r = cohen_kappa(matrix_from(cm));
        py::dict d;
        d["kappa"] = r.kappa;
        d["p0"] = r.p0;
        d["pe"] = r.pe;
        d["defined"] = r.defined;
        d["band"] = r.band;
        return d;
      },
      py::arg("confusion"),
      "Chance-corrected agreement from a [truth][predicted] count matrix.");

  m.def(
      "class_metrics",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>&
             cm) {
        MetricsReport r = per_class_metrics(matrix_from(cm));
        py::list per;
        for (const auto& c : r.per_class) {
          py::dict d;
          d["precision"] = c.precision;
          d["sensitivity"] = c.sensitivity;
          d["specificity"] = c.specificity;
          d["precision_defined"] = c.precision_defined;
          d["sensitivity_defined"] = c.sensitivity_defined;
          d["specificity_defined"] = c.specificity_defined;
          per.append(d);
        }
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["macro_precision"] = r.macro_precision;
        d["macro_sensitivity"] = r.macro_sensitivity;
        d["macro_specificity"] = r.macro_specificity;
        d["per_class"] = per;
        return d;
      },
      py::arg("confusion"),
      "One-vs-rest precision, sensitivity and specificity per class.");

  m.def(
      "map_at_10",
      [](const std::vector<int>& query_labels,
         const py::array_t<int64_t,
                           py::array::c_style | py::array::forcecast>& ret) {
        return map_at_10(queries_from(query_labels, ret));
      },
      py::arg("query_labels"), py::arg("retrieved"),
      "Class-balanced mean precision over top-10 result label rows.");

  m.def(
      "mrr_at_10",
      [](const std::vector<int>& query_labels,
         const py::array_t<int64_t,
                           py::array::c_style | py::array::forcecast>& ret) {
        return mrr_at_10(queries_from(query_labels, ret));
      },
      py::arg("query_labels"), py::arg("retrieved"),
      "Class-balanced mean reciprocal rank of the first matching label.");

  m.def(
      "cosine_topk",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>&
             db,
         const py::array_t<float, py::array::c_style | py::array::forcecast>&
             q,
         int k) {
        if (db.ndim() != 2) throw py::value_error("db must be 2-d (items, dim)");
        if (q.ndim() != 1 || q.shape(0) != db.shape(1))
          throw py::value_error("query length must match the db width");
        RetrievalIndex index;
        index.dim = static_cast<int>(db.shape(1));
        auto r = db.unchecked<2>();
        std::vector<float> row(static_cast<size_t>(index.dim));
        for (py::ssize_t i = 0; i < db.shape(0); ++i) {
          for (py::ssize_t j = 0; j < db.shape(1); ++j)
            row[static_cast<size_t>(j)] = r(i, j);
          index.add("", 0, row);
        }
        py::list out;
        for (const auto& item : query_topk(index, q.data(), k))
          out.append(py::make_tuple(item.id, item.similarity, item.degenerate));
        return out;
      },
      py::arg("db"), py::arg("query"), py::arg("k"),
      "Exhaustive cosine scan, descending; returns (id, similarity, "
      "degenerate) tuples; zero-norm rows sink to the bottom.");

  m.def(
      "gen_synthetic",
      [](const std::string& out_dir, int n, int classes, int canvas,
         double noise, uint64_t seed, bool force) {
        SynthSpec spec;
        spec.n = n;
        spec.classes = classes;
        spec.canvas = canvas;
        spec.noise = noise;
        spec.seed = seed;
        gen_synthetic(spec, out_dir, force);
      },
      py::arg("out_dir"), py::arg("n") = 800, py::arg("classes") = 8,
      py::arg("canvas") = 64, py::arg("noise") = 0.05, py::arg("seed") = 7,
      py::arg("force") = false,
      "Write a class-balanced corpus of lobed-blob renderings.");
}
