#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "rmnet/train.hpp"

using namespace rmnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int c = 0;
    path = fs::temp_directory_path() /
           ("rmnet_train_" + std::to_string(uint64_t(::getpid())) + "_" +
            std::to_string(c++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

// Deterministic in-memory source: each class adds mass with its own channel
// signature (in quadrant c for spatial variety), so the pooled channel means
// alone separate the classes.
class ToySource : public BatchSource<double> {
 public:
  ToySource(int n, int classes, int extent, uint64_t seed)
      : n_(n), classes_(classes), extent_(extent), seed_(seed) {}

  int size() const override { return n_; }
  int num_classes() const override { return classes_; }
  std::vector<int64_t> class_counts() const override {
    std::vector<int64_t> c(size_t(classes_), 0);
    for (int i = 0; i < n_; ++i) ++c[size_t(i % classes_)];
    return c;
  }
  void fill(const std::vector<int>& ids, bool, Rng&, Tensor4<double>& x,
            std::vector<int>& y) override {
    x = Tensor4<double>(
        Dims4{int(ids.size()), 3, extent_, extent_});
    y.resize(ids.size());
    const int half = extent_ / 2;
    for (size_t b = 0; b < ids.size(); ++b) {
      const int id = ids[b];
      const int cls = id % classes_;
      y[b] = cls;
      Rng item(mix_seed(seed_, uint64_t(id)));
      for (int c = 0; c < 3; ++c)
        for (int r = 0; r < extent_; ++r)
          for (int col = 0; col < extent_; ++col)
            x.at(int(b), c, r, col) = item.uniform(-0.1, 0.1);
      static const double sig[4][3] = {
          {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.7, 0.7, 0.0}};
      const int qr = (cls / 2) % 2, qc = cls % 2;
      for (int c = 0; c < 3; ++c) {
        const double amp = sig[cls % 4][c];
        if (amp == 0.0) continue;
        for (int r = 0; r < half; ++r)
          for (int col = 0; col < half; ++col)
            x.at(int(b), c, qr * half + r, qc * half + col) += amp;
      }
    }
  }

 private:
  int n_, classes_, extent_;
  uint64_t seed_;
};

}  // namespace

TEST_CASE("config validation and the lr schedule") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 19) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 20) == doctest::Approx(0.001));
  CHECK(lr_at(cfg, 40) == doctest::Approx(0.0001));

  TrainConfig bad = cfg;
  bad.lr0 = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.epochs = -1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.decay_every = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.momentum = 1.5;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("inverse-frequency class weights") {
  // w_c = n / (M * n_c)
  auto w = inverse_frequency_weights({10, 30});
  CHECK(w[0] == doctest::Approx(40.0 / (2 * 10)));
  CHECK(w[1] == doctest::Approx(40.0 / (2 * 30)));
  // absent classes get a neutral weight
  auto w2 = inverse_frequency_weights({5, 0, 5});
  CHECK(w2[1] == doctest::Approx(1.0));
  // balanced counts give uniform 1
  auto w3 = inverse_frequency_weights({7, 7, 7});
  for (double v : w3) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("sgd implements the momentum + weight-decay update") {
  auto p = make_tensor<double>(Dims4{1, 1, 1, 2});
  p->v = {1.0, -2.0};
  p->ensure_grad();
  p->g = {0.5, 0.25};

  TrainConfig cfg;
  cfg.lr0 = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  Sgd<double> opt({p}, cfg);

  // step 1: v = g + wd*w, w -= lr*v
  double v0 = 0.5 + 0.01 * 1.0;
  double v1 = 0.25 + 0.01 * -2.0;
  double w0 = 1.0 - 0.1 * v0;
  double w1 = -2.0 - 0.1 * v1;
  opt.step(0);
  CHECK(p->v[0] == doctest::Approx(w0).epsilon(1e-14));
  CHECK(p->v[1] == doctest::Approx(w1).epsilon(1e-14));

  // step 2 with the same gradient: v <- 0.9*v + g + wd*w
  v0 = 0.9 * v0 + 0.5 + 0.01 * w0;
  v1 = 0.9 * v1 + 0.25 + 0.01 * w1;
  w0 -= 0.1 * v0;
  w1 -= 0.1 * v1;
  opt.step(0);
  CHECK(p->v[0] == doctest::Approx(w0).epsilon(1e-13));
  CHECK(p->v[1] == doctest::Approx(w1).epsilon(1e-13));

  opt.zero_grad();
  CHECK(p->g[0] == 0.0);
  CHECK(p->g[1] == 0.0);
}

TEST_CASE("training a tiny model fits a separable toy problem") {
  ModelGraph g = preset_graph("tiny", 4);
  auto model = build_model<double>(g, 1);
  ToySource train(64, 4, 16, 3);
  ToySource val(32, 4, 16, 4);

  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.epochs = 8;
  cfg.batch = 16;
  cfg.decay_every = 6;
  cfg.seed = 5;
  cfg.strict = true;

  auto weights = inverse_frequency_weights(train.class_counts());
  std::ostringstream log;
  auto result = train_model(model, train, &val, cfg, weights, &log);
  REQUIRE(result.log.size() == 8);
  CHECK(result.log.front().train_loss > result.log.back().train_loss);
  CHECK(result.log.back().val_accuracy > 0.9);

  // log stream carries one line per epoch with the expected fields
  const std::string text = log.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
  CHECK(text.find("epoch=0 ") != std::string::npos);
  CHECK(text.find("epoch=7 ") != std::string::npos);
  CHECK(text.find("lr=") != std::string::npos);
  CHECK(text.find("val_acc=") != std::string::npos);

  // evaluation agrees with the logged accuracy
  auto cm = evaluate_confusion(model, val, 16, weights, nullptr);
  auto rep = per_class_metrics(cm);
  CHECK(rep.accuracy == doctest::Approx(result.log.back().val_accuracy));
}

TEST_CASE("strict training is bit-reproducible") {
  auto run = [] {
    ModelGraph g = preset_graph("tiny", 4);
    auto model = build_model<double>(g, 9);
    ToySource train(32, 4, 16, 7);
    TrainConfig cfg;
    cfg.lr0 = 0.02;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.seed = 2;
    cfg.strict = true;
    auto weights = inverse_frequency_weights(train.class_counts());
    train_model<double>(model, train, nullptr, cfg, weights, nullptr);
    std::vector<double> flat;
    for (const auto& p : model.params())
      flat.insert(flat.end(), p->v.begin(), p->v.end());
    return flat;
  };
  auto a = run();
  auto b = run();
  CHECK(a == b);  // bitwise
}

TEST_CASE("divergence raises a structured error") {
  ModelGraph g = preset_graph("tiny", 4);
  auto model = build_model<double>(g, 1);
  ToySource train(32, 4, 16, 3);
  TrainConfig cfg;
  cfg.lr0 = 1e12;  // guaranteed blow-up
  cfg.epochs = 3;
  cfg.batch = 8;
  cfg.strict = true;
  auto weights = inverse_frequency_weights(train.class_counts());
  CHECK_THROWS_WITH_AS(
      train_model<double>(model, train, nullptr, cfg, weights, nullptr),
      doctest::Contains("lower lr0"), divergence_error);
}

TEST_CASE("image source: rotation protocol and determinism") {
  TempDir dir;
  SynthSpec spec;
  spec.n = 40;
  spec.classes = 4;
  spec.canvas = 32;
  spec.seed = 3;
  gen_synthetic(spec, dir.str(), false);
  LoadedDataset ds = load_dataset(dir.str());

  PreprocessCfg pcfg;
  pcfg.resize_short = 24;
  pcfg.crop = 16;
  auto stats = compute_norm_stats({&ds.images[0], &ds.images[1]}, pcfg);

  std::vector<int> subset = {0, 5, 10, 15};
  ImageSource<double> src(&ds, subset, stats, pcfg);
  CHECK(src.size() == 4);

  Tensor4<double> x1, x2;
  std::vector<int> y1, y2;
  Rng r1(1), r2(1);
  src.fill({0, 1, 2, 3}, false, r1, x1, y1);
  src.fill({0, 1, 2, 3}, false, r2, x2, y2);
  CHECK(x1.v == x2.v);
  CHECK(y1 == y2);
  CHECK(x1.dims == (Dims4{4, 3, 16, 16}));
  // labels come from the dataset through the subset indirection
  for (size_t i = 0; i < subset.size(); ++i)
    CHECK(y1[i] == ds.manifest.class_ids[size_t(subset[i])]);

  // rotation protocol changes pixels but not labels, deterministically
  ImageSource<double> rot_src(&ds, subset, stats, pcfg);
  rot_src.enable_rotation(77);
  Tensor4<double> xr1, xr2;
  std::vector<int> yr1, yr2;
  Rng r3(1), r4(9);  // fill rng must not matter in eval mode
  rot_src.fill({0, 1, 2, 3}, false, r3, xr1, yr1);
  rot_src.fill({0, 1, 2, 3}, false, r4, xr2, yr2);
  CHECK(xr1.v == xr2.v);
  CHECK(yr1 == y1);
  CHECK(xr1.v != x1.v);

  // same seed, fresh source: identical rotated views
  ImageSource<double> rot_src2(&ds, subset, stats, pcfg);
  rot_src2.enable_rotation(77);
  Tensor4<double> xr3;
  std::vector<int> yr3;
  rot_src2.fill({0, 1, 2, 3}, false, r3, xr3, yr3);
  CHECK(xr3.v == xr1.v);

  // a different rotation seed gives different views
  ImageSource<double> rot_src3(&ds, subset, stats, pcfg);
  rot_src3.enable_rotation(78);
  Tensor4<double> xr4;
  std::vector<int> yr4;
  rot_src3.fill({0, 1, 2, 3}, false, r3, xr4, yr4);
  CHECK(xr4.v != xr1.v);

  CHECK(src.class_counts().size() == 4);
}

TEST_CASE("training accepts labels only inside the class range") {
  // fill() produces an out-of-range label -> contract_error from the loss
  class BadSource : public BatchSource<double> {
   public:
    int size() const override { return 4; }
    int num_classes() const override { return 2; }
    std::vector<int64_t> class_counts() const override { return {2, 2}; }
    void fill(const std::vector<int>& ids, bool, Rng&, Tensor4<double>& x,
              std::vector<int>& y) override {
      x = Tensor4<double>(Dims4{int(ids.size()), 3, 8, 8});
      y.assign(ids.size(), 5);
    }
  };
  ModelGraph g = preset_graph("tiny", 2);
  g.in_extent = 8;
  auto model = build_model<double>(g, 0);
  BadSource src;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  cfg.strict = true;
  CHECK_THROWS_AS(
      train_model<double>(model, src, nullptr, cfg, {1.0, 1.0}, nullptr),
      contract_error);
}
