#include "vlnwb/feature_store.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vlnwb {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::filesystem::path FeatureStore::index_path(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  p += ".idx.json";
  return p;
}

void FeatureStore::write(const std::filesystem::path& bin_path, std::span<const Record> records) {
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("features: cannot write " + bin_path.string());
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  for (const auto& r : records) {
    index[r.id] = static_cast<uint64_t>(out.tellp());
    put_u32(out, static_cast<uint32_t>(r.id.size()));
    out.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    put_u32(out, static_cast<uint32_t>(r.dims.size()));
    int64_t n = 1;
    for (int d : r.dims) {
      put_u32(out, static_cast<uint32_t>(d));
      n *= d;
    }
    if (n != static_cast<int64_t>(r.values.size()))
      throw std::runtime_error("features: dims do not match payload for '" + r.id + "'");
    for (float v : r.values) put_f32(out, v);
  }
  if (!out) throw std::runtime_error("features: write failed");
  std::ofstream idx(index_path(bin_path), std::ios::trunc);
  idx << index.dump(2) << "\n";
  if (!idx) throw std::runtime_error("features: index write failed");
}

FeatureStore FeatureStore::open(const std::filesystem::path& bin_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw std::runtime_error("features: cannot open " + bin_path.string());
  FeatureStore store;
  while (in.peek() != EOF) {
    Record r;
    const uint32_t id_len = get_u32(in);
    r.id.resize(id_len);
    in.read(r.id.data(), id_len);
    const uint32_t rank = get_u32(in);
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const int d = static_cast<int>(get_u32(in));
      r.dims.push_back(d);
      n *= d;
    }
    r.values.resize(static_cast<size_t>(n));
    for (auto& v : r.values) v = get_f32(in);
    if (!in) throw std::runtime_error("features: truncated record in " + bin_path.string());
    if (store.index_.count(r.id))
      throw std::runtime_error("features: duplicate record '" + r.id + "'");
    store.index_[r.id] = store.records_.size();
    store.records_.push_back(std::move(r));
  }
  return store;
}

const FeatureStore::Record& FeatureStore::get(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::runtime_error("features: no record '" + id + "'");
  return records_[it->second];
}

}  // namespace vlnwb
