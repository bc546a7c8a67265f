#include "vlnwb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vlnwb {

namespace {

constexpr char kMagic[8] = {'V', 'L', 'N', 'W', 'B', 'C', 'K', 'P'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void put_record(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                const std::vector<Real>& data) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  out.put(static_cast<char>(1));  // dtype f64
  put_u32(out, static_cast<uint32_t>(shape.size()));
  for (int d : shape) put_u32(out, static_cast<uint32_t>(d));
  for (Real x : data) put_f64(out, x);
}

struct Record {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> data;
};

Record get_record(std::istream& in) {
  Record r;
  const uint32_t name_len = get_u32(in);
  r.name.resize(name_len);
  in.read(r.name.data(), name_len);
  const int dtype = in.get();
  if (dtype != 0 && dtype != 1) throw std::runtime_error("checkpoint: bad dtype byte");
  const uint32_t rank = get_u32(in);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(in);
    r.shape.push_back(static_cast<int>(d));
    n *= d;
  }
  r.data.resize(static_cast<size_t>(n));
  for (auto& x : r.data) x = dtype == 1 ? get_f64(in) : static_cast<Real>(get_f32(in));
  if (!in) throw std::runtime_error("checkpoint: truncated record '" + r.name + "'");
  return r;
}

void read_header(std::istream& in, CheckpointMeta& meta) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  meta.seed = get_u64(in);
  meta.step = get_u64(in);
  meta.epoch = get_u64(in);
  meta.config_hash = get_u64(in);
  for (auto& w : meta.rng_state) w = get_u64(in);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta.seed);
  put_u64(out, meta.step);
  put_u64(out, meta.epoch);
  put_u64(out, meta.config_hash);
  for (uint64_t w : meta.rng_state) put_u64(out, w);

  // params + two Adam moment records each
  put_u32(out, static_cast<uint32_t>(store.names().size() * 3));
  for (const auto& name : store.names()) {
    const Tensor& t = store.at(name);
    put_record(out, name, t.shape, t.data);
    const AdamSlot& slot = store.adam_slot(name);
    put_record(out, name + "</m>", t.shape, slot.m);
    put_record(out, name + "</v>", t.shape, slot.v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  CheckpointMeta meta;
  read_header(in, meta);
  const uint32_t count = get_u32(in);
  size_t restored = 0;
  for (uint32_t i = 0; i < count; ++i) {
    Record r = get_record(in);
    std::string base = r.name;
    int kind = 0;  // 0 = param, 1 = adam m, 2 = adam v
    if (base.size() > 4 && base.compare(base.size() - 4, 4, "</m>") == 0) {
      base.resize(base.size() - 4);
      kind = 1;
    } else if (base.size() > 4 && base.compare(base.size() - 4, 4, "</v>") == 0) {
      base.resize(base.size() - 4);
      kind = 2;
    }
    if (!store.has(base))
      throw std::runtime_error("checkpoint: parameter '" + base + "' not registered in model");
    Tensor& t = store.at(base);
    if (t.shape != r.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + base + "'");
    if (kind == 0) {
      t.data = std::move(r.data);
      ++restored;
    } else if (kind == 1) {
      store.adam_slot(base).m = std::move(r.data);
    } else {
      store.adam_slot(base).v = std::move(r.data);
    }
  }
  if (restored != store.names().size())
    throw std::runtime_error("checkpoint: file carries " + std::to_string(restored) +
                             " parameters, model expects " +
                             std::to_string(store.names().size()));
  store.step = meta.step;
  return meta;
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  CheckpointMeta meta;
  read_header(in, meta);
  return meta;
}

}  // namespace vlnwb
