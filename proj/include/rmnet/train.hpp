#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "rmnet/blocks.hpp"
#include "rmnet/dataset.hpp"
#include "rmnet/metrics.hpp"

namespace rmnet {

struct TrainConfig {
  double lr0 = 0.01;
  double decay_factor = 0.1;
  int decay_every = 20;  // epochs between decays
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch = 32;
  int epochs = 60;
  uint64_t seed = 0;
  bool strict = false;  // single worker, bit-reproducible

  void validate() const;
};

// lr0 * decay_factor^(epoch / decay_every), epoch 0-based.
double lr_at(const TrainConfig& cfg, int epoch);

// w_c = n / (M * n_c); classes with no samples get a neutral 1.
std::vector<double> inverse_frequency_weights(
    const std::vector<int64_t>& counts);

// Batch access used by the trainer and evaluator. Implementations must fill
// deterministically given (ids, rng state).
template <typename T>
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual int size() const = 0;
  virtual int num_classes() const = 0;
  virtual std::vector<int64_t> class_counts() const = 0;
  virtual void fill(const std::vector<int>& ids, bool train_mode, Rng& rng,
                    Tensor4<T>& x, std::vector<int>& y) = 0;
};

// Decoded images restricted to a subset of a dataset, preprocessed on the
// fly. An optional per-item rotation (fixed angles drawn from rotation_seed)
// runs before preprocessing; used for rotated evaluation protocols.
template <typename T>
class ImageSource : public BatchSource<T> {
 public:
  ImageSource(const LoadedDataset* ds, std::vector<int> subset,
              NormStats stats, PreprocessCfg cfg);
  void enable_rotation(uint64_t rotation_seed);

  int size() const override { return static_cast<int>(subset_.size()); }
  int num_classes() const override { return ds_->num_classes(); }
  std::vector<int64_t> class_counts() const override;
  void fill(const std::vector<int>& ids, bool train_mode, Rng& rng,
            Tensor4<T>& x, std::vector<int>& y) override;

  const std::vector<int>& subset() const { return subset_; }
  const LoadedDataset& dataset() const { return *ds_; }
  int64_t upscaled_count() const { return upscaled_; }

 private:
  const LoadedDataset* ds_;
  std::vector<int> subset_;
  NormStats stats_;
  PreprocessCfg cfg_;
  std::vector<double> rotation_deg_;  // per subset item, empty = off
  std::vector<Image> rotated_;        // cache, built lazily with angles
  int64_t upscaled_ = 0;
};

// Momentum SGD with L2 coupled into the velocity:
// v <- momentum*v + g + wd*w; w <- w - lr*v.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<TensorPtr<T>> params, const TrainConfig& cfg);
  void step(int epoch);
  void zero_grad();

 private:
  std::vector<TensorPtr<T>> params_;
  std::vector<std::vector<T>> velocity_;
  TrainConfig cfg_;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

// Runs the full schedule. Throws divergence_error (naming epoch and batch)
// on a non-finite loss. `log_stream` gets one line per epoch when non-null.
template <typename T>
TrainResult train_model(Model<T>& model, BatchSource<T>& train,
                        BatchSource<T>* val, const TrainConfig& cfg,
                        const std::vector<double>& class_weights,
                        std::ostream* log_stream);

// Confusion matrix over a source using argmax predictions; optionally the
// mean weighted loss.
template <typename T>
ConfusionMatrix evaluate_confusion(const Model<T>& model,
                                   BatchSource<T>& source, int batch,
                                   const std::vector<double>& class_weights,
                                   double* mean_loss);

#define RMNET_EXTERN_TRAIN(T)                                                  \
  extern template class ImageSource<T>;                                        \
  extern template class Sgd<T>;                                                \
  extern template TrainResult train_model<T>(                                  \
      Model<T>&, BatchSource<T>&, BatchSource<T>*, const TrainConfig&,         \
      const std::vector<double>&, std::ostream*);                              \
  extern template ConfusionMatrix evaluate_confusion<T>(                       \
      const Model<T>&, BatchSource<T>&, int, const std::vector<double>&,       \
      double*);

RMNET_EXTERN_TRAIN(float)
RMNET_EXTERN_TRAIN(double)
#undef RMNET_EXTERN_TRAIN

}  // namespace rmnet
