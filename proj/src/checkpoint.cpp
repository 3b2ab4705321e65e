#include "rmnet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace rmnet {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

const std::array<uint32_t, 256>& crc_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void put_u32(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  put_u32(buf, static_cast<uint32_t>(v & 0xffffffffu));
  put_u32(buf, static_cast<uint32_t>(v >> 32));
}

void put_str(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<uint32_t>(s.size()));
  buf.append(s);
}

void put_f32s(std::string& buf, const std::vector<float>& v) {
  for (float f : v) put_u32(buf, std::bit_cast<uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint8_t>(buf_[at_]) |
                 (static_cast<uint8_t>(buf_[at_ + 1]) << 8) |
                 (static_cast<uint8_t>(buf_[at_ + 2]) << 16) |
                 (static_cast<uint32_t>(static_cast<uint8_t>(buf_[at_ + 3]))
                  << 24);
    at_ += 4;
    return v;
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::string str() {
    uint32_t len = u32();
    need(len);
    std::string s = buf_.substr(at_, len);
    at_ += len;
    return s;
  }
  std::vector<float> f32s(uint64_t count) {
    std::vector<float> out(count);
    for (uint64_t i = 0; i < count; ++i)
      out[i] = std::bit_cast<float>(u32());
    return out;
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf_[at_++]);
  }
  size_t remaining() const { return buf_.size() - at_; }

 private:
  void need(size_t n) {
    if (buf_.size() - at_ < n)
      throw io_error(path_ + ": truncated record");
  }
  const std::string& buf_;
  std::string path_;
  size_t at_ = 0;
};

}  // namespace

void Crc32::update(const void* data, size_t len) {
  const auto* p = static_cast<const uint8_t*>(data);
  const auto& t = crc_table();
  uint32_t c = state_;
  for (size_t i = 0; i < len; ++i) c = t[(c ^ p[i]) & 0xff] ^ (c >> 8);
  state_ = c;
}

uint32_t Crc32::of(const void* data, size_t len) {
  Crc32 c;
  c.update(data, len);
  return c.value();
}

void save_checkpoint(const std::string& path, const CheckpointData& ck) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, 0);  // reserved flags
  put_u32(buf, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (int64_t(t.data.size()) != t.dims.count())
      throw contract_error("checkpoint: tensor '" + t.name +
                           "' payload does not match dims " + t.dims.str());
    put_str(buf, t.name);
    put_u32(buf, static_cast<uint32_t>(t.dims.n));
    put_u32(buf, static_cast<uint32_t>(t.dims.c));
    put_u32(buf, static_cast<uint32_t>(t.dims.h));
    put_u32(buf, static_cast<uint32_t>(t.dims.w));
    put_u64(buf, t.data.size());
    put_f32s(buf, t.data);
  }
  put_str(buf, ck.spec_text);
  buf.push_back(ck.index ? 1 : 0);
  if (ck.index) {
    put_u32(buf, static_cast<uint32_t>(ck.index->size()));
    for (const auto& row : *ck.index) {
      put_u32(buf, row.id);
      put_str(buf, row.name);
      put_u32(buf, row.label);
    }
  }
  put_u32(buf, Crc32::of(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot create " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("short write to " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw io_error(path + ": too short to be a checkpoint");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw io_error(path + ": bad magic");
  const size_t body = buf.size() - 4;
  const uint32_t stored = static_cast<uint8_t>(buf[body]) |
                          (static_cast<uint8_t>(buf[body + 1]) << 8) |
                          (static_cast<uint8_t>(buf[body + 2]) << 16) |
                          (static_cast<uint32_t>(
                               static_cast<uint8_t>(buf[body + 3]))
                           << 24);
  if (Crc32::of(buf.data(), body) != stored)
    throw io_error(path + ": checksum mismatch, file is corrupt");

  Reader r(buf, path);
  r.u32();  // magic, already checked
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw io_error(path + ": unsupported version " + std::to_string(version));
  r.u32();  // flags
  CheckpointData ck;
  const uint32_t ntensors = r.u32();
  ck.tensors.reserve(ntensors);
  for (uint32_t i = 0; i < ntensors; ++i) {
    NamedTensorBlob t;
    t.name = r.str();
    t.dims.n = static_cast<int>(r.u32());
    t.dims.c = static_cast<int>(r.u32());
    t.dims.h = static_cast<int>(r.u32());
    t.dims.w = static_cast<int>(r.u32());
    const uint64_t count = r.u64();
    if (int64_t(count) != t.dims.count())
      throw io_error(path + ": tensor '" + t.name + "' count/dims mismatch");
    t.data = r.f32s(count);
    ck.tensors.push_back(std::move(t));
  }
  ck.spec_text = r.str();
  if (r.u8()) {
    std::vector<IndexRow> rows(r.u32());
    for (auto& row : rows) {
      row.id = r.u32();
      row.name = r.str();
      row.label = r.u32();
    }
    ck.index = std::move(rows);
  }
  if (r.remaining() != 4)
    throw io_error(path + ": trailing bytes after index table");
  return ck;
}

template <typename T>
uint32_t params_fingerprint(const Model<T>& model) {
  Crc32 crc;
  for (const auto& [name, p] : model.named_params()) {
    for (const T& x : p->v) {
      const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(x));
      uint8_t le[4] = {static_cast<uint8_t>(bits & 0xff),
                       static_cast<uint8_t>((bits >> 8) & 0xff),
                       static_cast<uint8_t>((bits >> 16) & 0xff),
                       static_cast<uint8_t>((bits >> 24) & 0xff)};
      crc.update(le, 4);
    }
  }
  return crc.value();
}

template <typename T>
CheckpointData snapshot_model(const Model<T>& model,
                              const std::string& spec_text) {
  CheckpointData ck;
  ck.spec_text = spec_text;
  for (const auto& [name, p] : model.named_params()) {
    NamedTensorBlob t;
    t.name = name;
    t.dims = p->dims;
    t.data.reserve(p->v.size());
    for (const T& x : p->v) t.data.push_back(static_cast<float>(x));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename T>
void restore_model(Model<T>& model, const CheckpointData& ck) {
  std::vector<bool> used(ck.tensors.size(), false);
  for (const auto& [name, p] : model.named_params()) {
    const NamedTensorBlob* found = nullptr;
    for (size_t i = 0; i < ck.tensors.size(); ++i) {
      if (ck.tensors[i].name == name) {
        found = &ck.tensors[i];
        used[i] = true;
        break;
      }
    }
    if (!found)
      throw io_error("checkpoint is missing tensor '" + name + "'");
    if (found->dims != p->dims)
      throw io_error("checkpoint tensor '" + name + "' dims " +
                     found->dims.str() + " vs model " + p->dims.str());
    for (size_t j = 0; j < found->data.size(); ++j)
      p->v[j] = static_cast<T>(found->data[j]);
  }
  for (size_t i = 0; i < used.size(); ++i)
    if (!used[i])
      throw io_error("checkpoint holds unknown tensor '" +
                     ck.tensors[i].name + "'");
}

#define RMNET_INST_CK(T)                                                       \
  template uint32_t params_fingerprint<T>(const Model<T>&);                   \
  template CheckpointData snapshot_model<T>(const Model<T>&,                  \
                                            const std::string&);              \
  template void restore_model<T>(Model<T>&, const CheckpointData&);

RMNET_INST_CK(float)
RMNET_INST_CK(double)
#undef RMNET_INST_CK

}  // namespace rmnet
