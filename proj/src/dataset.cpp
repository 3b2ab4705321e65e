#include "rmnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace rmnet {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

uint8_t clamp_u8(double v) {
  if (v <= 0.0) return 0;
  if (v >= 255.0) return 255;
  return static_cast<uint8_t>(std::lround(v));
}

// Skips whitespace and # comments between PPM header tokens.
int next_ppm_int(std::istream& in, const std::string& path) {
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw io_error(path + ": truncated header");
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    break;
  }
  int v;
  if (!(in >> v)) throw io_error(path + ": bad header token");
  return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6')
    throw io_error(path + ": not a binary PPM (P6)");
  Image img;
  img.w = next_ppm_int(in, path);
  img.h = next_ppm_int(in, path);
  int maxval = next_ppm_int(in, path);
  if (img.w < 1 || img.h < 1) throw io_error(path + ": bad extents");
  if (maxval != 255) throw io_error(path + ": only maxval 255 is supported");
  in.get();  // single whitespace byte after maxval
  img.rgb.resize(size_t(img.w) * img.h * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw io_error(path + ": truncated pixel data");
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.w < 1 || img.h < 1 ||
      img.rgb.size() != size_t(img.w) * img.h * 3)
    throw contract_error("write_ppm: malformed image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot create " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw io_error("short write to " + path);
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1)
    throw contract_error("resize_bilinear: bad target extents");
  Image out;
  out.w = out_w;
  out.h = out_h;
  out.rgb.resize(size_t(out_w) * out_h * 3);
  const double sx = double(img.w) / out_w, sy = double(img.h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double ay = fy - y0;
    int yc0 = std::clamp(y0, 0, img.h - 1), yc1 = std::clamp(y0 + 1, 0, img.h - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double ax = fx - x0;
      int xc0 = std::clamp(x0, 0, img.w - 1), xc1 = std::clamp(x0 + 1, 0, img.w - 1);
      const uint8_t* p00 = img.px(xc0, yc0);
      const uint8_t* p01 = img.px(xc1, yc0);
      const uint8_t* p10 = img.px(xc0, yc1);
      const uint8_t* p11 = img.px(xc1, yc1);
      uint8_t* dst = out.px(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        double v = (1 - ay) * ((1 - ax) * p00[ch] + ax * p01[ch]) +
                   ay * ((1 - ax) * p10[ch] + ax * p11[ch]);
        dst[ch] = clamp_u8(v);
      }
    }
  }
  return out;
}

Image rotate_image(const Image& img, double angle_degrees) {
  Image out;
  out.w = img.w;
  out.h = img.h;
  out.rgb.assign(size_t(img.w) * img.h * 3, 0);
  double cs, sn;
  const double quarters = angle_degrees / 90.0;
  const double qr = std::round(quarters);
  if (std::abs(quarters - qr) < 1e-9) {
    // exact taps at quarter multiples
    static const double cq[4] = {1, 0, -1, 0};
    static const double sq[4] = {0, 1, 0, -1};
    const int q = int(((int64_t(qr) % 4) + 4) % 4);
    cs = cq[q];
    sn = sq[q];
  } else {
    const double a = angle_degrees * kPi / 180.0;
    cs = std::cos(a);
    sn = std::sin(a);
  }
  const double cx = (img.w - 1) * 0.5, cy = (img.h - 1) * 0.5;
  for (int y = 0; y < out.h; ++y) {
    const double uy = y - cy;
    for (int x = 0; x < out.w; ++x) {
      const double ux = x - cx;
      // Inverse map of a clockwise rotation (y axis points down).
      const double sxf = cx + cs * ux + sn * uy;
      const double syf = cy - sn * ux + cs * uy;
      const int x0 = static_cast<int>(std::floor(sxf));
      const int y0 = static_cast<int>(std::floor(syf));
      const double ax = sxf - x0, ay = syf - y0;
      double acc[3] = {0, 0, 0};
      const double ws[4] = {(1 - ay) * (1 - ax), (1 - ay) * ax,
                            ay * (1 - ax), ay * ax};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int t = 0; t < 4; ++t) {
        if (ws[t] == 0.0 || xs[t] < 0 || xs[t] >= img.w || ys[t] < 0 ||
            ys[t] >= img.h)
          continue;
        const uint8_t* p = img.px(xs[t], ys[t]);
        for (int ch = 0; ch < 3; ++ch) acc[ch] += ws[t] * p[ch];
      }
      uint8_t* dst = out.px(x, y);
      for (int ch = 0; ch < 3; ++ch) dst[ch] = clamp_u8(acc[ch]);
    }
  }
  return out;
}

Manifest load_manifest(const std::string& root) {
  const std::string csv = (fs::path(root) / "labels.csv").string();
  std::ifstream in(csv);
  if (!in) throw io_error("cannot open " + csv);
  Manifest m;
  std::string line;
  if (!std::getline(in, line)) throw io_error(csv + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label")
    throw io_error(csv + ": expected 'path,label' header, got '" + line + "'");
  size_t lineno = 1;
  std::set<std::string> distinct;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
      throw io_error(csv + ":" + std::to_string(lineno) + ": malformed row '" +
                     line + "'");
    m.paths.push_back(line.substr(0, comma));
    m.labels.push_back(line.substr(comma + 1));
    distinct.insert(m.labels.back());
  }
  if (m.paths.empty()) throw io_error(csv + ": no data rows");
  m.classes.assign(distinct.begin(), distinct.end());  // set is sorted
  std::map<std::string, int> id;
  for (size_t i = 0; i < m.classes.size(); ++i)
    id[m.classes[i]] = static_cast<int>(i);
  m.class_ids.reserve(m.labels.size());
  for (const auto& l : m.labels) m.class_ids.push_back(id[l]);
  return m;
}

void save_labels_csv(
    const std::string& root,
    const std::vector<std::pair<std::string, std::string>>& rows) {
  const std::string csv = (fs::path(root) / "labels.csv").string();
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw io_error("cannot create " + csv);
  out << "path,label\n";
  for (const auto& [p, l] : rows) out << p << "," << l << "\n";
  if (!out) throw io_error("short write to " + csv);
}

SplitIndices split_811(int n, uint64_t seed) {
  if (n < 10) throw config_error("split needs at least 10 samples, got " +
                                 std::to_string(n));
  std::vector<int> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed, 0x73706c6974ull));
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  const int nval = n / 10, ntest = n / 10;
  const int ntrain = n - nval - ntest;
  SplitIndices s;
  s.train.assign(ids.begin(), ids.begin() + ntrain);
  s.val.assign(ids.begin() + ntrain, ids.begin() + ntrain + nval);
  s.test.assign(ids.begin() + ntrain + nval, ids.end());
  return s;
}

namespace {

struct CropView {
  const Image* img;
  int ox = 0, oy = 0;
  bool hflip = false, vflip = false;

  // Pixel of the cropped/flipped window in [0, crop)^2.
  const uint8_t* at(int x, int y, int crop) const {
    int xx = hflip ? crop - 1 - x : x;
    int yy = vflip ? crop - 1 - y : y;
    return img->px(ox + xx, oy + yy);
  }
};

}  // namespace

template <typename T>
Tensor4<T> preprocess_batch(const std::vector<const Image*>& images,
                            bool train_mode, const NormStats& stats,
                            const PreprocessCfg& cfg, Rng* rng,
                            int64_t* upscaled) {
  if (images.empty()) throw contract_error("preprocess_batch: empty batch");
  if (cfg.crop > cfg.resize_short)
    throw config_error("preprocess: crop " + std::to_string(cfg.crop) +
                       " larger than resized side " +
                       std::to_string(cfg.resize_short));
  if (train_mode && !rng)
    throw contract_error("preprocess_batch: train mode needs an rng");
  const int crop = cfg.crop;
  Tensor4<T> out(Dims4{static_cast<int>(images.size()), 3, crop, crop});
  std::vector<Image> scaled(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    const Image* src = images[i];
    if (!src || src->w < 1) throw contract_error("preprocess_batch: bad image");
    const int shorter = std::min(src->w, src->h);
    if (shorter != cfg.resize_short) {
      if (shorter < cfg.resize_short && upscaled) ++*upscaled;
      const double scale = double(cfg.resize_short) / shorter;
      const int nw = std::max(cfg.resize_short,
                              static_cast<int>(std::lround(src->w * scale)));
      const int nh = std::max(cfg.resize_short,
                              static_cast<int>(std::lround(src->h * scale)));
      scaled[i] = resize_bilinear(*src, nw, nh);
      src = &scaled[i];
    }
    CropView view{src};
    const int mx = src->w - crop, my = src->h - crop;
    if (train_mode) {
      view.ox = static_cast<int>(rng->uniform_int(0, mx));
      view.oy = static_cast<int>(rng->uniform_int(0, my));
      view.hflip = rng->uniform() < 0.5;
      view.vflip = rng->uniform() < 0.5;
    } else {
      view.ox = mx / 2;
      view.oy = my / 2;
    }
    for (int ch = 0; ch < 3; ++ch) {
      const double mean = stats.mean[static_cast<size_t>(ch)];
      const double inv = 1.0 / stats.stdev[static_cast<size_t>(ch)];
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x)
          out.at(static_cast<int>(i), ch, y, x) = static_cast<T>(
              ((view.at(x, y, crop)[ch] / 255.0) - mean) * inv);
    }
  }
  return out;
}

NormStats compute_norm_stats(const std::vector<const Image*>& images,
                             const PreprocessCfg& cfg) {
  if (images.empty()) throw contract_error("compute_norm_stats: no images");
  NormStats ns;
  std::array<double, 3> sum{0, 0, 0}, sumsq{0, 0, 0};
  int64_t count = 0;
  NormStats ident;  // raw [0,1] values
  for (const Image* img : images) {
    std::vector<const Image*> one{img};
    Tensor4<double> t =
        preprocess_batch<double>(one, false, ident, cfg, nullptr);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < cfg.crop; ++y)
        for (int x = 0; x < cfg.crop; ++x) {
          double v = t.at(0, ch, y, x);
          sum[static_cast<size_t>(ch)] += v;
          sumsq[static_cast<size_t>(ch)] += v * v;
        }
    }
    count += int64_t(cfg.crop) * cfg.crop;
  }
  for (int ch = 0; ch < 3; ++ch) {
    const double m = sum[static_cast<size_t>(ch)] / double(count);
    double var = sumsq[static_cast<size_t>(ch)] / double(count) - m * m;
    if (var < 1e-12) var = 1e-12;
    ns.mean[static_cast<size_t>(ch)] = m;
    ns.stdev[static_cast<size_t>(ch)] = std::sqrt(var);
  }
  return ns;
}

void gen_synthetic(const SynthSpec& spec, const std::string& out_dir,
                   bool force) {
  if (spec.classes < 2 || spec.classes > 64)
    throw config_error("gen: classes must be in [2, 64]");
  if (spec.n < spec.classes || spec.n % spec.classes != 0)
    throw config_error("gen: n=" + std::to_string(spec.n) +
                       " must be a positive multiple of classes=" +
                       std::to_string(spec.classes));
  if (spec.canvas < 32) throw config_error("gen: canvas must be >= 32");
  if (spec.noise < 0 || spec.noise > 0.5)
    throw config_error("gen: noise must be in [0, 0.5]");

  const fs::path root(out_dir);
  if (fs::exists(root / "labels.csv") && !force)
    throw config_error(out_dir +
                       " already holds a generated set; pass force to "
                       "overwrite");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw io_error("cannot create " + out_dir + ": " + ec.message());

  const int per = spec.n / spec.classes;
  const int S = spec.canvas;
  const double r0 = 0.234 * S;
  Rng base(mix_seed(spec.seed, 0x67656e64617461ull));
  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(static_cast<size_t>(spec.n));

  // Class templates: lobe count cycles 2..5, the second tier doubles the
  // lobe depth, later tiers shrink the base radius.
  const double tint[3] = {1.0, 0.93, 0.86};
  for (int c = 0; c < spec.classes; ++c) {
    const std::string cls = "c" + std::to_string(c);
    fs::create_directories(root / cls, ec);
    if (ec) throw io_error("cannot create class dir: " + ec.message());
    const int lobes = 2 + c % 4;
    const double depth = ((c / 4) % 2 == 0) ? 0.18 : 0.42;
    const double rscale = std::pow(0.82, double(c / 8));
    for (int i = 0; i < per; ++i) {
      Rng rng = base.fork(uint64_t(c) * 1000003ull + uint64_t(i));
      const double alpha = rng.uniform(0.0, 2.0 * kPi);
      const double jr = 1.0 + rng.uniform(-0.08, 0.08);
      const double ji = 1.0 + rng.uniform(-0.10, 0.10);
      const double cx = (S - 1) * 0.5 + rng.uniform(-1.5, 1.5);
      const double cy = (S - 1) * 0.5 + rng.uniform(-1.5, 1.5);
      const double rbase = r0 * jr * rscale;
      Image img;
      img.w = S;
      img.h = S;
      img.rgb.resize(size_t(S) * S * 3);
      for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double phi = std::atan2(dy, dx) - alpha;
          const double rim =
              rbase * (1.0 + depth * std::cos(lobes * phi) +
                       0.18 * std::cos(phi - 0.7));
          const double t = (rim - r) / 1.2;
          const double mask = 1.0 / (1.0 + std::exp(-std::clamp(t, -30.0, 30.0)));
          const double body = 0.82 * ji * mask;
          const double noise_px = spec.noise * rng.normal();
          uint8_t* p = img.px(x, y);
          for (int ch = 0; ch < 3; ++ch)
            p[ch] = clamp_u8(255.0 * (body * tint[ch] + noise_px));
        }
      }
      char name[32];
      std::snprintf(name, sizeof(name), "s%05d.ppm", i);
      const std::string rel = cls + "/" + name;
      write_ppm((root / rel).string(), img);
      rows.emplace_back(rel, cls);
    }
  }
  save_labels_csv(out_dir, rows);
  std::ofstream echo((root / "gen.txt").string(), std::ios::trunc);
  echo << "n=" << spec.n << "\nclasses=" << spec.classes
       << "\ncanvas=" << spec.canvas << "\nnoise=" << spec.noise
       << "\nseed=" << spec.seed << "\n";
}

std::vector<int64_t> LoadedDataset::class_counts(
    const std::vector<int>& subset) const {
  std::vector<int64_t> counts(static_cast<size_t>(num_classes()), 0);
  for (int id : subset) {
    if (id < 0 || id >= size())
      throw contract_error("class_counts: index out of range");
    ++counts[static_cast<size_t>(manifest.class_ids[static_cast<size_t>(id)])];
  }
  return counts;
}

LoadedDataset load_dataset(const std::string& root) {
  LoadedDataset ds;
  ds.root = root;
  ds.manifest = load_manifest(root);
  ds.images.reserve(ds.manifest.paths.size());
  for (const auto& rel : ds.manifest.paths)
    ds.images.push_back(read_ppm((fs::path(root) / rel).string()));
  return ds;
}

template Tensor4<float> preprocess_batch<float>(
    const std::vector<const Image*>&, bool, const NormStats&,
    const PreprocessCfg&, Rng*, int64_t*);
template Tensor4<double> preprocess_batch<double>(
    const std::vector<const Image*>&, bool, const NormStats&,
    const PreprocessCfg&, Rng*, int64_t*);

}  // namespace rmnet
