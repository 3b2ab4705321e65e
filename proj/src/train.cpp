#include "rmnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "rmnet/ops.hpp"

namespace rmnet {

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw config_error("train: lr0 must be positive");
  if (!(decay_factor > 0) || decay_factor > 1)
    throw config_error("train: decay_factor must be in (0, 1]");
  if (decay_every < 1) throw config_error("train: decay_every must be >= 1");
  if (momentum < 0 || momentum >= 1)
    throw config_error("train: momentum must be in [0, 1)");
  if (weight_decay < 0) throw config_error("train: weight_decay must be >= 0");
  if (batch < 1) throw config_error("train: batch must be >= 1");
  if (epochs < 1) throw config_error("train: epochs must be >= 1");
}

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw contract_error("lr_at: negative epoch");
  return cfg.lr0 * std::pow(cfg.decay_factor, double(epoch / cfg.decay_every));
}

std::vector<double> inverse_frequency_weights(
    const std::vector<int64_t>& counts) {
  if (counts.empty()) throw contract_error("class weights: no classes");
  int64_t n = 0;
  for (int64_t c : counts) {
    if (c < 0) throw contract_error("class weights: negative count");
    n += c;
  }
  if (n == 0) throw contract_error("class weights: empty training set");
  const double m = double(counts.size());
  std::vector<double> w(counts.size(), 1.0);
  for (size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) w[c] = double(n) / (m * double(counts[c]));
  return w;
}

template <typename T>
ImageSource<T>::ImageSource(const LoadedDataset* ds, std::vector<int> subset,
                            NormStats stats, PreprocessCfg cfg)
    : ds_(ds), subset_(std::move(subset)), stats_(stats), cfg_(cfg) {
  if (!ds_) throw contract_error("ImageSource: null dataset");
  for (int id : subset_)
    if (id < 0 || id >= ds_->size())
      throw contract_error("ImageSource: subset index out of range");
}

template <typename T>
void ImageSource<T>::enable_rotation(uint64_t rotation_seed) {
  Rng rng(mix_seed(rotation_seed, 0x726f74617465ull));
  rotation_deg_.resize(subset_.size());
  rotated_.clear();
  rotated_.resize(subset_.size());
  for (size_t i = 0; i < subset_.size(); ++i)
    rotation_deg_[i] = rng.uniform(0.0, 360.0);
}

template <typename T>
std::vector<int64_t> ImageSource<T>::class_counts() const {
  return ds_->class_counts(subset_);
}

template <typename T>
void ImageSource<T>::fill(const std::vector<int>& ids, bool train_mode,
                          Rng& rng, Tensor4<T>& x, std::vector<int>& y) {
  std::vector<const Image*> views(ids.size());
  y.resize(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    const int local = ids[i];
    if (local < 0 || local >= size())
      throw contract_error("ImageSource: batch index out of range");
    const int global = subset_[static_cast<size_t>(local)];
    const Image* img = &ds_->images[static_cast<size_t>(global)];
    if (!rotation_deg_.empty()) {
      Image& cache = rotated_[static_cast<size_t>(local)];
      if (cache.w == 0)
        cache = rotate_image(*img, rotation_deg_[static_cast<size_t>(local)]);
      img = &cache;
    }
    views[i] = img;
    y[i] = ds_->manifest.class_ids[static_cast<size_t>(global)];
  }
  x = preprocess_batch<T>(views, train_mode, stats_, cfg_, &rng, &upscaled_);
}

template <typename T>
Sgd<T>::Sgd(std::vector<TensorPtr<T>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p) throw contract_error("sgd: null parameter");
    velocity_.emplace_back(p->v.size(), T(0));
  }
}

template <typename T>
void Sgd<T>::step(int epoch) {
  const T lr = static_cast<T>(lr_at(cfg_, epoch));
  const T mom = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (!p.has_grad()) continue;
    auto& vel = velocity_[i];
    for (size_t j = 0; j < p.v.size(); ++j) {
      vel[j] = mom * vel[j] + p.g[j] + wd * p.v[j];
      p.v[j] -= lr * vel[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_)
    if (p->has_grad()) p->zero_grad();
}

namespace {

template <typename T>
std::vector<int> argmax_rows(const Tensor4<T>& logits) {
  std::vector<int> out(static_cast<size_t>(logits.dims.n));
  for (int n = 0; n < logits.dims.n; ++n) {
    int best = 0;
    for (int j = 1; j < logits.dims.c; ++j)
      if (logits.at(n, j, 0, 0) > logits.at(n, best, 0, 0)) best = j;
    out[static_cast<size_t>(n)] = best;
  }
  return out;
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& order,
                                           int batch) {
  std::vector<std::vector<int>> out;
  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch)) {
    const size_t end = std::min(order.size(), at + static_cast<size_t>(batch));
    out.emplace_back(order.begin() + static_cast<long>(at),
                     order.begin() + static_cast<long>(end));
  }
  return out;
}

}  // namespace

template <typename T>
TrainResult train_model(Model<T>& model, BatchSource<T>& train,
                        BatchSource<T>* val, const TrainConfig& cfg,
                        const std::vector<double>& class_weights,
                        std::ostream* log_stream) {
  cfg.validate();
  if (static_cast<int>(class_weights.size()) != model.graph.classes)
    throw contract_error("train: class weight count vs model classes");
  if (train.size() < 1) throw contract_error("train: empty training source");
  std::optional<ThreadGuard> guard;
  if (cfg.strict) guard.emplace(1);

  Sgd<T> opt(model.params(), cfg);
  Rng root(mix_seed(cfg.seed, 0x747261696e0aull));
  TrainResult result;

  std::vector<int> order(static_cast<size_t>(train.size()));
  for (int i = 0; i < train.size(); ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = root.fork(static_cast<uint64_t>(epoch));
    for (int i = train.size() - 1; i > 0; --i) {
      int j = static_cast<int>(erng.uniform_int(0, i));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    double loss_sum = 0.0;
    int64_t seen = 0;
    int batch_no = 0;
    for (const auto& ids : make_batches(order, cfg.batch)) {
      Tensor4<T> xb;
      std::vector<int> yb;
      train.fill(ids, true, erng, xb, yb);
      Tape<T> tape;
      auto x = std::make_shared<Tensor4<T>>(std::move(xb));
      auto loss = weighted_softmax_ce(tape, model.logits(tape, x), yb,
                                      class_weights);
      const double lv = static_cast<double>(loss->v[0]);
      if (!std::isfinite(lv)) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << " batch " << batch_no
           << " (loss " << lv << "); try a lower lr0";
        throw divergence_error(os.str());
      }
      tape.backward(loss);
      opt.step(epoch);
      opt.zero_grad();
      loss_sum += lv * static_cast<double>(ids.size());
      seen += static_cast<int64_t>(ids.size());
      ++batch_no;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr_at(cfg, epoch);
    entry.train_loss = loss_sum / double(seen);
    if (val && val->size() > 0) {
      double vloss = 0.0;
      auto cm = evaluate_confusion(model, *val, cfg.batch, class_weights,
                                   &vloss);
      entry.val_loss = vloss;
      int64_t diag = 0;
      for (int c = 0; c < cm.num_classes(); ++c) diag += cm.at(c, c);
      entry.val_accuracy = double(diag) / double(cm.total());
    }
    result.log.push_back(entry);
    if (log_stream) {
      (*log_stream) << "epoch=" << entry.epoch << " lr=" << entry.lr
                    << " train_loss=" << entry.train_loss;
      if (val) {
        (*log_stream) << " val_loss=" << entry.val_loss
                      << " val_acc=" << entry.val_accuracy;
      }
      (*log_stream) << "\n" << std::flush;
    }
  }
  return result;
}

template <typename T>
ConfusionMatrix evaluate_confusion(const Model<T>& model,
                                   BatchSource<T>& source, int batch,
                                   const std::vector<double>& class_weights,
                                   double* mean_loss) {
  if (batch < 1) throw contract_error("evaluate: batch must be >= 1");
  if (source.size() < 1) throw contract_error("evaluate: empty source");
  ConfusionMatrix cm(source.num_classes());
  Rng rng(0);  // eval path never consumes randomness
  std::vector<int> order(static_cast<size_t>(source.size()));
  for (int i = 0; i < source.size(); ++i) order[static_cast<size_t>(i)] = i;
  double loss_sum = 0.0;
  int64_t seen = 0;
  for (const auto& ids : make_batches(order, batch)) {
    Tensor4<T> xb;
    std::vector<int> yb;
    source.fill(ids, false, rng, xb, yb);
    Tape<T> tape;
    auto x = std::make_shared<Tensor4<T>>(std::move(xb));
    auto z = model.logits(tape, x);
    if (mean_loss) {
      auto loss = weighted_softmax_ce(tape, z, yb, class_weights);
      loss_sum += double(loss->v[0]) * double(ids.size());
    }
    auto pred = argmax_rows(*z);
    for (size_t i = 0; i < ids.size(); ++i)
      cm.add(yb[i], pred[i]);
    seen += static_cast<int64_t>(ids.size());
  }
  if (mean_loss) *mean_loss = loss_sum / double(seen);
  return cm;
}

#define RMNET_INST_TRAIN(T)                                                    \
  template class ImageSource<T>;                                               \
  template class Sgd<T>;                                                       \
  template TrainResult train_model<T>(Model<T>&, BatchSource<T>&,             \
                                      BatchSource<T>*, const TrainConfig&,     \
                                      const std::vector<double>&,              \
                                      std::ostream*);                          \
  template ConfusionMatrix evaluate_confusion<T>(                              \
      const Model<T>&, BatchSource<T>&, int, const std::vector<double>&,       \
      double*);

RMNET_INST_TRAIN(float)
RMNET_INST_TRAIN(double)
#undef RMNET_INST_TRAIN

}  // namespace rmnet
