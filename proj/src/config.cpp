#include "rmnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rmnet {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool key_known(const std::string& key) {
  const auto& keys = known_config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      // model
      "preset", "classes", "in_channels", "input_extent", "head", "hash_bits",
      // rotation operator
      "rm_span", "k", "theta", "fusion", "interp", "rotations",
      "weight_sharing", "rm_canvas",
      // optimization
      "lr0", "decay_factor", "decay_every", "momentum", "weight_decay",
      "batch", "epochs", "seed", "strict", "threads",
      // data and preprocessing
      "data", "out", "log", "resize_short", "crop",
      "n", "noise", "gen_canvas", "force",
      // trained-artifact echo
      "label_vocab", "norm_mean", "norm_std", "fingerprint",
  };
  return keys;
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!key_known(key))
    throw config_error("unknown config key '" + key + "'");
  kv_[key] = value;
}

void RunConfig::erase(const std::string& key) { kv_.erase(key); }

std::string RunConfig::get(const std::string& key,
                           const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t used = 0;
    int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + it->second +
                       "' is not an integer");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + it->second +
                       "' is not a number");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw config_error("config key '" + key + "': '" + v + "' is not a boolean");
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': '" + it->second +
                       "' is not an unsigned integer");
  }
}

std::string RunConfig::render() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
  return os.str();
}

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": empty key");
    if (!key_known(key))
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": unknown config key '" + key + "'");
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

ModelGraph model_graph_from_config(const RunConfig& cfg) {
  const std::string preset = cfg.get("preset", "rmnet-s");
  ModelGraph g = preset_graph(preset, cfg.get_int("classes", 8));
  g.in_channels = cfg.get_int("in_channels", g.in_channels);
  g.in_extent = cfg.get_int("input_extent", g.in_extent);
  g.head = head_from_name(cfg.get("head", head_name(g.head)));
  g.hash_bits = cfg.get_int("hash_bits", g.hash_bits);

  const std::string span = cfg.get("rm_span", "none");
  if (span != "none" && !span.empty()) {
    auto colon = span.find(':');
    if (colon == std::string::npos)
      throw config_error("rm_span must be 'first:last' or 'none', got '" +
                         span + "'");
    try {
      RmSpan s;
      s.first = std::stoi(span.substr(0, colon));
      s.last = std::stoi(span.substr(colon + 1));
      g.span = s;
    } catch (const std::exception&) {
      throw config_error("rm_span must be 'first:last' or 'none', got '" +
                         span + "'");
    }
  }
  g.rm.k = cfg.get_int("k", g.rm.k);
  g.rm.theta_degrees = cfg.get_double("theta", g.rm.theta_degrees);
  g.rm.fusion = fusion_from_name(cfg.get("fusion", fusion_name(g.rm.fusion)));
  g.rm.interp = interp_from_name(cfg.get("interp", interp_name(g.rm.interp)));
  g.rm.rotations_enabled = cfg.get_bool("rotations", g.rm.rotations_enabled);
  g.rm.weight_sharing = cfg.get_bool("weight_sharing", g.rm.weight_sharing);
  g.rm.canvas = cfg.get_int("rm_canvas", g.rm.canvas);
  return g;
}

TrainConfig train_config_from_config(const RunConfig& cfg) {
  TrainConfig t;
  t.lr0 = cfg.get_double("lr0", t.lr0);
  t.decay_factor = cfg.get_double("decay_factor", t.decay_factor);
  t.decay_every = cfg.get_int("decay_every", t.decay_every);
  t.momentum = cfg.get_double("momentum", t.momentum);
  t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
  t.batch = cfg.get_int("batch", t.batch);
  t.epochs = cfg.get_int("epochs", t.epochs);
  t.seed = cfg.get_u64("seed", t.seed);
  t.strict = cfg.get_bool("strict", t.strict);
  t.validate();
  return t;
}

PreprocessCfg preprocess_from_config(const RunConfig& cfg) {
  PreprocessCfg p;
  p.resize_short = cfg.get_int("resize_short", p.resize_short);
  p.crop = cfg.get_int("crop", p.crop);
  if (p.crop < 8) throw config_error("crop must be >= 8");
  if (p.crop > p.resize_short)
    throw config_error("crop cannot exceed resize_short");
  return p;
}

void write_graph_to_config(const ModelGraph& g, RunConfig& cfg) {
  cfg.set("classes", std::to_string(g.classes));
  cfg.set("in_channels", std::to_string(g.in_channels));
  cfg.set("input_extent", std::to_string(g.in_extent));
  cfg.set("head", head_name(g.head));
  cfg.set("hash_bits", std::to_string(g.hash_bits));
  if (g.span) {
    cfg.set("rm_span", std::to_string(g.span->first) + ":" +
                           std::to_string(g.span->last));
    cfg.set("k", std::to_string(g.rm.k));
    std::ostringstream th;
    th << g.rm.theta_degrees;
    cfg.set("theta", th.str());
    cfg.set("fusion", fusion_name(g.rm.fusion));
    cfg.set("interp", interp_name(g.rm.interp));
    cfg.set("rotations", g.rm.rotations_enabled ? "1" : "0");
    cfg.set("weight_sharing", g.rm.weight_sharing ? "1" : "0");
    cfg.set("rm_canvas", std::to_string(g.rm.canvas));
  } else {
    cfg.set("rm_span", "none");
  }
}

}  // namespace rmnet
