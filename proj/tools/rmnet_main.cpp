#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "rmnet/audit.hpp"
#include "rmnet/bench.hpp"
#include "rmnet/checkpoint.hpp"
#include "rmnet/config.hpp"
#include "rmnet/dataset.hpp"
#include "rmnet/metrics.hpp"
#include "rmnet/retrieval.hpp"
#include "rmnet/train.hpp"

namespace {

using namespace rmnet;

// Exit codes: 0 ok, 2 configuration, 3 divergence, 4 invariance violation,
// 5 fingerprint mismatch, 1 anything else.
struct invariance_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct fingerprint_mismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join_csv(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ",";
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// Writes to the report path when set, stdout otherwise.
class Report {
 public:
  explicit Report(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::trunc);
      if (!file_) throw io_error("cannot create report file " + path);
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

NormStats stats_from_config(const RunConfig& cfg) {
  NormStats ns;
  auto parse3 = [](const std::string& raw, const char* what,
                   std::array<double, 3>& out) {
    auto parts = split_csv(raw);
    if (parts.size() != 3)
      throw config_error(std::string(what) + " must hold three values");
    for (int i = 0; i < 3; ++i) out[size_t(i)] = std::stod(parts[size_t(i)]);
  };
  if (!cfg.has("norm_mean") || !cfg.has("norm_std"))
    throw config_error("checkpoint lacks normalization statistics");
  parse3(cfg.get("norm_mean", ""), "norm_mean", ns.mean);
  parse3(cfg.get("norm_std", ""), "norm_std", ns.stdev);
  return ns;
}

struct LoadedModel {
  Model<float> model;
  RunConfig spec;
  NormStats stats;
  PreprocessCfg pcfg;
  std::vector<std::string> vocab;
  CheckpointData ck;
};

LoadedModel load_model(const std::string& path) {
  CheckpointData ck = load_checkpoint(path);
  RunConfig spec = parse_config_text(ck.spec_text, path + " (spec)");
  ModelGraph graph = model_graph_from_config(spec);
  LoadedModel lm{build_model<float>(graph, 0),
                 spec,
                 stats_from_config(spec),
                 preprocess_from_config(spec),
                 split_csv(spec.get("label_vocab", "")),
                 {}};
  restore_model(lm.model, ck);
  lm.ck = std::move(ck);
  if (lm.vocab.size() == 1 && lm.vocab[0].empty())
    throw config_error("checkpoint lacks a label vocabulary");
  if (static_cast<int>(lm.vocab.size()) != graph.classes)
    throw config_error("checkpoint vocabulary size does not match classes");
  return lm;
}

// The split an item set belongs to must be recomputed exactly as training
// did: same dataset size, same seed.
std::vector<int> pick_split(const SplitIndices& s, const std::string& which,
                            int n) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  if (which == "all") {
    std::vector<int> all(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }
  throw config_error("unknown split '" + which +
                     "' (expected train|val|test|all)");
}

void check_vocab(const LoadedModel& lm, const LoadedDataset& ds) {
  if (lm.vocab != ds.manifest.classes)
    throw config_error(
        "dataset classes do not match the checkpoint vocabulary (" +
        join_csv(ds.manifest.classes) + " vs " + join_csv(lm.vocab) + ")");
}

int run_gen(const SynthSpec& spec, const std::string& out_dir, bool force) {
  gen_synthetic(spec, out_dir, force);
  std::cout << "out=" << out_dir << "\n"
            << "n=" << spec.n << "\n"
            << "classes=" << spec.classes << "\n"
            << "canvas=" << spec.canvas << "\n"
            << "noise=" << spec.noise << "\n"
            << "seed=" << spec.seed << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  const std::string data = cfg.get("data", "");
  const std::string out = cfg.get("out", "");
  if (data.empty()) throw config_error("train: data directory is required");
  if (out.empty()) throw config_error("train: output checkpoint is required");

  const int threads = cfg.get_int("threads", 0);
  if (threads) set_max_threads(threads);

  LoadedDataset ds = load_dataset(data);
  TrainConfig tcfg = train_config_from_config(cfg);
  PreprocessCfg pcfg = preprocess_from_config(cfg);

  RunConfig effective = cfg;
  if (!effective.has("preset")) effective.set("preset", "rmnet-s");
  if (effective.has("classes")) {
    if (effective.get_int("classes", 0) != ds.num_classes())
      throw config_error("configured classes=" + effective.get("classes", "") +
                         " but the dataset holds " +
                         std::to_string(ds.num_classes()));
  } else {
    effective.set("classes", std::to_string(ds.num_classes()));
  }
  ModelGraph graph = model_graph_from_config(effective);
  if (graph.in_extent != pcfg.crop)
    throw config_error("model input extent " +
                       std::to_string(graph.in_extent) +
                       " does not match crop " + std::to_string(pcfg.crop));

  SplitIndices split = split_811(ds.size(), tcfg.seed);
  std::vector<const Image*> train_views;
  train_views.reserve(split.train.size());
  for (int id : split.train)
    train_views.push_back(&ds.images[static_cast<size_t>(id)]);
  NormStats stats = compute_norm_stats(train_views, pcfg);

  ImageSource<float> train_src(&ds, split.train, stats, pcfg);
  ImageSource<float> val_src(&ds, split.val, stats, pcfg);

  auto model = build_model<float>(graph, tcfg.seed);
  auto weights = inverse_frequency_weights(train_src.class_counts());

  std::ofstream log_file;
  std::ostream* log_stream = &std::cout;
  const std::string log_path = cfg.get("log", "");
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::trunc);
    if (!log_file) throw io_error("cannot create log file " + log_path);
    log_stream = &log_file;
  }

  TrainResult result =
      train_model(model, train_src, &val_src, tcfg, weights, log_stream);

  write_graph_to_config(graph, effective);
  // Paths and host tuning do not describe the model; keeping them would make
  // the artifact depend on where it was produced.
  for (const char* key : {"data", "out", "log", "config", "threads"})
    effective.erase(key);
  effective.set("label_vocab", join_csv(ds.manifest.classes));
  effective.set("norm_mean", fmt_double(stats.mean[0]) + "," +
                                 fmt_double(stats.mean[1]) + "," +
                                 fmt_double(stats.mean[2]));
  effective.set("norm_std", fmt_double(stats.stdev[0]) + "," +
                                fmt_double(stats.stdev[1]) + "," +
                                fmt_double(stats.stdev[2]));
  CheckpointData ck = snapshot_model(model, effective.render());
  save_checkpoint(out, ck);

  std::cout << "ckpt=" << out << "\n"
            << "params=" << model.param_count() << "\n"
            << "fingerprint=" << params_fingerprint(model) << "\n"
            << "structure=" << structure_name(structure_label(graph)) << "\n"
            << "epochs=" << tcfg.epochs << "\n";
  if (!result.log.empty()) {
    std::cout << "final_train_loss=" << result.log.back().train_loss << "\n"
              << "final_val_acc=" << result.log.back().val_accuracy << "\n";
  }
  if (train_src.upscaled_count() > 0)
    std::cout << "warn_upscaled=" << train_src.upscaled_count() << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& which, bool rotate, uint64_t rotate_seed,
             int batch, const std::string& report_path, int threads) {
  if (threads) set_max_threads(threads);
  LoadedModel lm = load_model(ckpt);
  LoadedDataset ds = load_dataset(data);
  check_vocab(lm, ds);

  SplitIndices split = split_811(ds.size(), lm.spec.get_u64("seed", 0));
  ImageSource<float> src(&ds, pick_split(split, which, ds.size()), lm.stats,
                         lm.pcfg);
  if (rotate) src.enable_rotation(rotate_seed);

  auto weights = inverse_frequency_weights(ds.class_counts(split.train));
  double mean_loss = 0.0;
  ConfusionMatrix cm =
      evaluate_confusion(lm.model, src, batch, weights, &mean_loss);
  MetricsReport mr = per_class_metrics(cm);
  KappaResult kr = cohen_kappa(cm);

  Report rep(report_path);
  std::ostream& os = rep.out();
  os << "split=" << which << "\n"
     << "items=" << cm.total() << "\n"
     << "rotated=" << (rotate ? 1 : 0) << "\n"
     << "loss=" << mean_loss << "\n"
     << "accuracy=" << mr.accuracy << "\n"
     << "macro_precision=" << mr.macro_precision << "\n"
     << "macro_sensitivity=" << mr.macro_sensitivity << "\n"
     << "macro_specificity=" << mr.macro_specificity << "\n"
     << "kappa=" << kr.kappa << "\n"
     << "kappa_p0=" << kr.p0 << "\n"
     << "kappa_pe=" << kr.pe << "\n"
     << "kappa_band=" << kr.band << "\n";
  int undefined = 0;
  for (size_t c = 0; c < mr.per_class.size(); ++c) {
    const auto& x = mr.per_class[c];
    os << "class." << lm.vocab[c] << ".precision=" << x.precision << "\n"
       << "class." << lm.vocab[c] << ".sensitivity=" << x.sensitivity << "\n"
       << "class." << lm.vocab[c] << ".specificity=" << x.specificity << "\n";
    if (!x.precision_defined || !x.sensitivity_defined ||
        !x.specificity_defined)
      ++undefined;
  }
  if (undefined) os << "warn_zero_denominator_classes=" << undefined << "\n";
  os << "# confusion matrix, rows = truth, columns = predicted\n";
  for (int t = 0; t < cm.num_classes(); ++t) {
    os << "# " << lm.vocab[static_cast<size_t>(t)];
    for (int p = 0; p < cm.num_classes(); ++p) os << " " << cm.at(t, p);
    os << "\n";
  }
  return 0;
}

int run_retrieve(const std::string& ckpt, const std::string& data,
                 const std::string& index_path, const std::string& save_index,
                 bool rotate, uint64_t rotate_seed, int batch,
                 const std::string& report_path, int threads) {
  if (threads) set_max_threads(threads);
  LoadedModel lm = load_model(ckpt);
  if (lm.model.graph.head != HeadKind::Hasher)
    throw config_error(
        "retrieval needs a checkpoint trained with head=hasher");
  LoadedDataset ds = load_dataset(data);
  check_vocab(lm, ds);
  const uint32_t fp = params_fingerprint(lm.model);

  SplitIndices split = split_811(ds.size(), lm.spec.get_u64("seed", 0));

  RetrievalIndex index;
  if (!index_path.empty()) {
    CheckpointData ick = load_checkpoint(index_path);
    RunConfig ispec = parse_config_text(ick.spec_text, index_path + " (spec)");
    const uint32_t stored_fp =
        static_cast<uint32_t>(ispec.get_u64("fingerprint", 0));
    if (!ick.index)
      throw io_error(index_path + ": file holds no retrieval item table");
    const NamedTensorBlob* vecs = nullptr;
    for (const auto& t : ick.tensors)
      if (t.name == "index.vectors") vecs = &t;
    if (!vecs) throw io_error(index_path + ": no embedding vectors");
    if (stored_fp != fp)
      throw fingerprint_mismatch(
          "index " + index_path +
          " was built by a different model (fingerprint " +
          std::to_string(stored_fp) + " vs " + std::to_string(fp) + ")");
    index.dim = vecs->dims.c;
    index.fingerprint = stored_fp;
    for (const auto& row : *ick.index) {
      std::vector<float> v(vecs->data.begin() + int64_t(row.id) * index.dim,
                           vecs->data.begin() +
                               int64_t(row.id + 1) * index.dim);
      index.add(row.name, static_cast<int>(row.label), v);
    }
  } else {
    // Build the database from the training split.
    ImageSource<float> db_src(&ds, split.train, lm.stats, lm.pcfg);
    Rng rng(0);
    std::vector<int> ids(split.train.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    for (size_t at = 0; at < ids.size(); at += static_cast<size_t>(batch)) {
      const size_t end = std::min(ids.size(), at + static_cast<size_t>(batch));
      std::vector<int> chunk(ids.begin() + static_cast<long>(at),
                             ids.begin() + static_cast<long>(end));
      Tensor4<float> x;
      std::vector<int> y;
      db_src.fill(chunk, false, rng, x, y);
      auto embs = embed_batch(lm.model, x);
      for (size_t i = 0; i < chunk.size(); ++i) {
        const int global = split.train[at + i];
        index.add(ds.manifest.paths[static_cast<size_t>(global)], y[i],
                  embs[i]);
      }
    }
    index.fingerprint = fp;
  }
  index.validate_ready();

  if (!save_index.empty()) {
    CheckpointData ick;
    NamedTensorBlob vecs;
    vecs.name = "index.vectors";
    vecs.dims = Dims4{index.size(), index.dim, 1, 1};
    vecs.data = index.vecs;
    ick.tensors.push_back(std::move(vecs));
    RunConfig ispec;
    ispec.set("fingerprint", std::to_string(fp));
    ispec.set("hash_bits", std::to_string(index.dim));
    ispec.set("label_vocab", join_csv(ds.manifest.classes));
    ick.spec_text = ispec.render();
    std::vector<IndexRow> rows;
    for (int id = 0; id < index.size(); ++id)
      rows.push_back(IndexRow{static_cast<uint32_t>(id),
                              index.names[static_cast<size_t>(id)],
                              static_cast<uint32_t>(
                                  index.labels[static_cast<size_t>(id)])});
    ick.index = std::move(rows);
    save_checkpoint(save_index, ick);
  }

  // Queries: the test split, optionally rotated.
  ImageSource<float> q_src(&ds, split.test, lm.stats, lm.pcfg);
  if (rotate) q_src.enable_rotation(rotate_seed);
  std::vector<RankedQuery> queries;
  int degenerate_hits = 0;
  Rng rng(0);
  std::vector<int> ids(split.test.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  for (size_t at = 0; at < ids.size(); at += static_cast<size_t>(batch)) {
    const size_t end = std::min(ids.size(), at + static_cast<size_t>(batch));
    std::vector<int> chunk(ids.begin() + static_cast<long>(at),
                           ids.begin() + static_cast<long>(end));
    Tensor4<float> x;
    std::vector<int> y;
    q_src.fill(chunk, false, rng, x, y);
    auto embs = embed_batch(lm.model, x);
    for (size_t i = 0; i < chunk.size(); ++i) {
      auto ranked = query_topk(index, embs[i].data(), 10);
      RankedQuery q;
      q.query_label = y[i];
      for (const auto& item : ranked) {
        q.retrieved.push_back(index.labels[static_cast<size_t>(item.id)]);
        if (item.degenerate) ++degenerate_hits;
      }
      queries.push_back(std::move(q));
    }
  }

  Report rep(report_path);
  std::ostream& os = rep.out();
  os << "database=" << index.size() << "\n"
     << "queries=" << queries.size() << "\n"
     << "rotated=" << (rotate ? 1 : 0) << "\n"
     << "dim=" << index.dim << "\n"
     << "fingerprint=" << fp << "\n"
     << "map_at_10=" << map_at_10(queries) << "\n"
     << "mrr_at_10=" << mrr_at_10(queries) << "\n";
  if (degenerate_hits)
    os << "warn_degenerate_results=" << degenerate_hits << "\n";
  return 0;
}

int run_check(const std::string& ckpt, int probes, uint64_t seed,
              int threads) {
  if (threads) set_max_threads(threads);
  LoadedModel lm = load_model(ckpt);
  AuditOptions opts;
  opts.probes = probes;
  opts.seed = seed;
  AuditReport rep = audit_model(lm.model, opts);
  std::cout << rep.to_text();
  if (rep.enforced && !rep.pass)
    throw invariance_violation("invariance audit failed for " +
                               std::string(structure_name(rep.structure)) +
                               "/" + fusion_name(rep.fusion));
  return 0;
}

int run_bench(const RunConfig& cfg, int reps, int batch, int threads) {
  if (threads) set_max_threads(threads);
  RunConfig full = cfg;
  if (!full.has("rm_span")) full.set("rm_span", "1:5");
  if (!full.has("classes")) full.set("classes", "8");
  ModelGraph graph = model_graph_from_config(full);
  BenchResult res = bench_rm<float>(graph, reps, batch,
                                    full.get_u64("seed", 0));
  std::cout << "preset=" << full.get("preset", "rmnet-s") << "\n"
            << "rm_span=" << full.get("rm_span", "") << "\n"
            << "k=" << graph.rm.k << "\n"
            << "theta=" << graph.rm.theta_degrees << "\n"
            << res.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotation-pooled convolutional network tool"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus");
  SynthSpec gspec;
  std::string gen_out;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", gspec.n, "total samples");
  gen->add_option("--classes", gspec.classes, "class count");
  gen->add_option("--canvas", gspec.canvas, "image extent");
  gen->add_option("--noise", gspec.noise, "additive noise level");
  gen->add_option("--seed", gspec.seed, "generator seed");
  gen->add_flag("--force", gen_force, "overwrite an existing corpus");

  // train: every option mirrors a config-file key; flags win over the file.
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config;
  tr->add_option("--config", tr_config, "key=value config file");
  struct SOpt { std::string key; CLI::Option* opt; std::string val; };
  struct IOpt { std::string key; CLI::Option* opt; int val = 0; };
  struct DOpt { std::string key; CLI::Option* opt; double val = 0; };
  std::vector<std::unique_ptr<SOpt>> sopts;
  std::vector<std::unique_ptr<IOpt>> iopts;
  std::vector<std::unique_ptr<DOpt>> dopts;
  auto add_s = [&](const std::string& flag, const std::string& key,
                   const char* help) {
    auto o = std::make_unique<SOpt>();
    o->key = key;
    o->opt = tr->add_option(flag, o->val, help);
    sopts.push_back(std::move(o));
  };
  auto add_i = [&](const std::string& flag, const std::string& key,
                   const char* help) {
    auto o = std::make_unique<IOpt>();
    o->key = key;
    o->opt = tr->add_option(flag, o->val, help);
    iopts.push_back(std::move(o));
  };
  auto add_d = [&](const std::string& flag, const std::string& key,
                   const char* help) {
    auto o = std::make_unique<DOpt>();
    o->key = key;
    o->opt = tr->add_option(flag, o->val, help);
    dopts.push_back(std::move(o));
  };
  add_s("--data", "data", "dataset root directory");
  add_s("--out", "out", "output checkpoint path");
  add_s("--log", "log", "epoch log file (default stdout)");
  add_s("--preset", "preset", "architecture preset (rmnet-s|tiny)");
  add_s("--rm", "rm_span", "trunk span to wrap, 'first:last' or 'none'");
  add_s("--fusion", "fusion", "meanout|maxout|embedding");
  add_s("--interp", "interp", "exact|bilinear");
  add_s("--head", "head", "classifier|hasher");
  add_i("--classes", "classes", "number of classes");
  add_i("--k", "k", "rotation count");
  add_d("--theta", "theta", "rotation interval in degrees");
  add_i("--hash-bits", "hash_bits", "embedding width for the hasher head");
  add_i("--rm-canvas", "rm_canvas", "rotation canvas (bilinear mode)");
  add_i("--epochs", "epochs", "training epochs");
  add_i("--batch", "batch", "batch size");
  add_i("--decay-every", "decay_every", "epochs between lr decays");
  add_i("--threads", "threads", "worker cap (0 = hardware)");
  add_i("--resize-short", "resize_short", "resize shorter side to this");
  add_i("--crop", "crop", "crop extent");
  add_d("--lr0", "lr0", "initial learning rate");
  add_d("--decay-factor", "decay_factor", "lr decay factor");
  add_d("--momentum", "momentum", "sgd momentum");
  add_d("--weight-decay", "weight_decay", "l2 coefficient");
  std::string tr_seed;
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "training seed");
  bool tr_strict = false, tr_no_ws = false, tr_no_rot = false;
  auto* tr_strict_opt =
      tr->add_flag("--strict", tr_strict, "bit-reproducible single worker");
  auto* tr_no_ws_opt = tr->add_flag("--no-weight-sharing", tr_no_ws,
                                    "independent branch weights");
  auto* tr_no_rot_opt =
      tr->add_flag("--no-rotations", tr_no_rot, "disable branch rotations");

  // eval
  auto* ev = app.add_subcommand("eval", "classification metrics");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  bool ev_rotate = false;
  uint64_t ev_rotate_seed = 13;
  int ev_batch = 32, ev_threads = 0;
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset root")->required();
  ev->add_option("--split", ev_split, "train|val|test|all");
  ev->add_option("--report", ev_report, "report file (default stdout)");
  ev->add_flag("--rotate", ev_rotate, "rotate items by seeded random angles");
  ev->add_option("--rotate-seed", ev_rotate_seed, "rotation protocol seed");
  ev->add_option("--batch", ev_batch, "evaluation batch size");
  ev->add_option("--threads", ev_threads, "worker cap");

  // retrieve
  auto* rt = app.add_subcommand("retrieve", "embedding retrieval metrics");
  std::string rt_ckpt, rt_data, rt_index, rt_save, rt_report;
  bool rt_rotate = false;
  uint64_t rt_rotate_seed = 13;
  int rt_batch = 32, rt_threads = 0;
  rt->add_option("--ckpt", rt_ckpt, "model checkpoint")->required();
  rt->add_option("--data", rt_data, "dataset root")->required();
  rt->add_option("--index", rt_index, "load a prebuilt embedding index");
  rt->add_option("--save-index", rt_save, "write the embedding index here");
  rt->add_option("--report", rt_report, "report file (default stdout)");
  rt->add_flag("--rotate", rt_rotate, "rotate queries by seeded angles");
  rt->add_option("--rotate-seed", rt_rotate_seed, "rotation protocol seed");
  rt->add_option("--batch", rt_batch, "embedding batch size");
  rt->add_option("--threads", rt_threads, "worker cap");

  // check
  auto* ch = app.add_subcommand("check", "invariance audit");
  std::string ch_ckpt;
  int ch_probes = 20, ch_threads = 0;
  uint64_t ch_seed = 1;
  ch->add_option("--ckpt", ch_ckpt, "model checkpoint")->required();
  ch->add_option("--probes", ch_probes, "probe batch size");
  ch->add_option("--seed", ch_seed, "probe seed");
  ch->add_option("--threads", ch_threads, "worker cap");

  // bench
  auto* be = app.add_subcommand("bench", "operator overhead measurement");
  std::string be_preset = "rmnet-s", be_span = "1:5", be_fusion, be_interp;
  int be_k = 0, be_reps = 5, be_batch = 8, be_threads = 0;
  double be_theta = 0;
  be->add_option("--preset", be_preset, "architecture preset");
  be->add_option("--rm", be_span, "span to wrap");
  be->add_option("--k", be_k, "rotation count");
  be->add_option("--theta", be_theta, "rotation interval");
  be->add_option("--fusion", be_fusion, "meanout|maxout|embedding");
  be->add_option("--interp", be_interp, "exact|bilinear");
  be->add_option("--reps", be_reps, "timing repetitions");
  be->add_option("--batch", be_batch, "batch size");
  be->add_option("--threads", be_threads, "worker cap");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) return run_gen(gspec, gen_out, gen_force);

    if (tr->parsed()) {
      RunConfig cfg;
      if (!tr_config.empty()) cfg = parse_config_file(tr_config);
      for (const auto& o : sopts)
        if (o->opt->count()) cfg.set(o->key, o->val);
      for (const auto& o : iopts)
        if (o->opt->count()) cfg.set(o->key, std::to_string(o->val));
      for (const auto& o : dopts)
        if (o->opt->count()) cfg.set(o->key, fmt_double(o->val));
      if (tr_seed_opt->count()) cfg.set("seed", tr_seed);
      if (tr_strict_opt->count()) cfg.set("strict", "1");
      if (tr_no_ws_opt->count()) cfg.set("weight_sharing", "0");
      if (tr_no_rot_opt->count()) cfg.set("rotations", "0");
      return run_train(cfg);
    }

    if (ev->parsed())
      return run_eval(ev_ckpt, ev_data, ev_split, ev_rotate, ev_rotate_seed,
                      ev_batch, ev_report, ev_threads);

    if (rt->parsed())
      return run_retrieve(rt_ckpt, rt_data, rt_index, rt_save, rt_rotate,
                          rt_rotate_seed, rt_batch, rt_report, rt_threads);

    if (ch->parsed()) return run_check(ch_ckpt, ch_probes, ch_seed, ch_threads);

    if (be->parsed()) {
      RunConfig cfg;
      cfg.set("preset", be_preset);
      cfg.set("rm_span", be_span);
      if (be_k) cfg.set("k", std::to_string(be_k));
      if (be_theta > 0) cfg.set("theta", fmt_double(be_theta));
      if (!be_fusion.empty()) cfg.set("fusion", be_fusion);
      if (!be_interp.empty()) cfg.set("interp", be_interp);
      return run_bench(cfg, be_reps, be_batch, be_threads);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const invariance_violation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const fingerprint_mismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
