#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "rmnet/tensor.hpp"

namespace rmnet {

// 8-bit RGB image, packed rows.
struct Image {
  int w = 0, h = 0;
  std::vector<uint8_t> rgb;

  uint8_t* px(int x, int y) { return rgb.data() + 3 * (int64_t(y) * w + x); }
  const uint8_t* px(int x, int y) const {
    return rgb.data() + 3 * (int64_t(y) * w + x);
  }
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Bilinear resize with edge clamping.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// Clockwise rotation about the image center, bilinear taps, black outside,
// same extent.
Image rotate_image(const Image& img, double angle_degrees);

// Root directory layout: labels.csv with a "path,label" header; image paths
// relative to the root. Class ids follow lexicographic label order.
struct Manifest {
  std::vector<std::string> paths;
  std::vector<std::string> labels;
  std::vector<int> class_ids;
  std::vector<std::string> classes;
};

Manifest load_manifest(const std::string& root);
void save_labels_csv(
    const std::string& root,
    const std::vector<std::pair<std::string, std::string>>& rows);

// Deterministic 8:1:1 shuffle-split of [0, n); a pure function of (n, seed).
struct SplitIndices {
  std::vector<int> train, val, test;
};
SplitIndices split_811(int n, uint64_t seed);

struct NormStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stdev{1, 1, 1};
};

struct PreprocessCfg {
  int resize_short = 72;
  int crop = 64;
};

// Shorter side to resize_short, then a crop window: random position plus
// random horizontal/vertical flips in train mode, centered otherwise.
// Scales to [0,1] and normalizes per channel. Images smaller than
// resize_short are upscaled and counted in *upscaled when given.
template <typename T>
Tensor4<T> preprocess_batch(const std::vector<const Image*>& images,
                            bool train_mode, const NormStats& stats,
                            const PreprocessCfg& cfg, Rng* rng,
                            int64_t* upscaled = nullptr);

// Per-channel mean/stdev of the deterministic (center-crop) views.
NormStats compute_norm_stats(const std::vector<const Image*>& images,
                             const PreprocessCfg& cfg);

struct SynthSpec {
  int n = 800;
  int classes = 8;
  int canvas = 64;
  double noise = 0.05;
  uint64_t seed = 7;
};

// Writes a class-balanced corpus of lobed-blob renderings under out_dir
// (class subdirectories of PPMs plus labels.csv and a gen.txt echo).
// Identical spec -> byte-identical files. Refuses a directory that already
// holds a labels.csv unless force is set.
void gen_synthetic(const SynthSpec& spec, const std::string& out_dir,
                   bool force);

struct LoadedDataset {
  std::string root;
  Manifest manifest;
  std::vector<Image> images;

  int size() const { return static_cast<int>(images.size()); }
  int num_classes() const { return static_cast<int>(manifest.classes.size()); }
  std::vector<int64_t> class_counts(const std::vector<int>& subset) const;
};

LoadedDataset load_dataset(const std::string& root);

extern template Tensor4<float> preprocess_batch<float>(
    const std::vector<const Image*>&, bool, const NormStats&,
    const PreprocessCfg&, Rng*, int64_t*);
extern template Tensor4<double> preprocess_batch<double>(
    const std::vector<const Image*>&, bool, const NormStats&,
    const PreprocessCfg&, Rng*, int64_t*);

}  // namespace rmnet
