#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmnet/blocks.hpp"

namespace rmnet {

// Incremental CRC-32 (reflected, poly 0xEDB88320, the zlib convention).
class Crc32 {
 public:
  void update(const void* data, size_t len);
  uint32_t value() const { return state_ ^ 0xffffffffu; }
  static uint32_t of(const void* data, size_t len);

 private:
  uint32_t state_ = 0xffffffffu;
};

struct NamedTensorBlob {
  std::string name;
  Dims4 dims;
  std::vector<float> data;
};

struct IndexRow {
  uint32_t id = 0;
  std::string name;
  uint32_t label = 0;
};

// Versioned little-endian container: named f32 tensors, a free-form spec
// text, an optional item table, and a trailing whole-file CRC-32.
struct CheckpointData {
  std::vector<NamedTensorBlob> tensors;
  std::string spec_text;
  std::optional<std::vector<IndexRow>> index;
};

void save_checkpoint(const std::string& path, const CheckpointData& ck);
// Verifies magic, version and the trailing CRC before parsing; any mismatch
// throws io_error naming the file.
CheckpointData load_checkpoint(const std::string& path);

// CRC-32 over the f32 parameter payloads in name order; ties an embedding
// index to the exact weights that produced it.
template <typename T>
uint32_t params_fingerprint(const Model<T>& model);

template <typename T>
CheckpointData snapshot_model(const Model<T>& model,
                              const std::string& spec_text);
// Restores by name; every model parameter must match a stored tensor with
// identical dims, and no stored tensor may be left over.
template <typename T>
void restore_model(Model<T>& model, const CheckpointData& ck);

#define RMNET_EXTERN_CK(T)                                                     \
  extern template uint32_t params_fingerprint<T>(const Model<T>&);            \
  extern template CheckpointData snapshot_model<T>(const Model<T>&,           \
                                                   const std::string&);        \
  extern template void restore_model<T>(Model<T>&, const CheckpointData&);

RMNET_EXTERN_CK(float)
RMNET_EXTERN_CK(double)
#undef RMNET_EXTERN_CK

}  // namespace rmnet
