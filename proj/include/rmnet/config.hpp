#pragma once

#include <map>
#include <string>
#include <vector>

#include "rmnet/blocks.hpp"
#include "rmnet/dataset.hpp"
#include "rmnet/train.hpp"

namespace rmnet {

// Flat key=value settings. Keys are validated against the known registry;
// unknown keys are configuration errors, not warnings.
class RunConfig {
 public:
  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key);
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  // Sorted key=value lines, one per entry.
  std::string render() const;

 private:
  std::map<std::string, std::string> kv_;
};

const std::vector<std::string>& known_config_keys();

// Parses "key = value" lines ('#' starts a comment). Unknown keys, missing
// '=' or empty keys throw config_error naming `origin` and the line.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

// Builds the model description from a config (preset plus overrides such as
// rm_span, k, theta, fusion, interp, rotations, weight_sharing, head).
ModelGraph model_graph_from_config(const RunConfig& cfg);
TrainConfig train_config_from_config(const RunConfig& cfg);
PreprocessCfg preprocess_from_config(const RunConfig& cfg);

// Writes the graph back into config entries so a checkpoint's spec text can
// rebuild the identical architecture. Does not record the preset; callers
// keep their own "preset" entry.
void write_graph_to_config(const ModelGraph& g, RunConfig& cfg);

}  // namespace rmnet
