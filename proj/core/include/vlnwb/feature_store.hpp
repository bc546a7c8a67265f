#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vlnwb {

// Precomputed per-panorama features: one binary payload file plus a JSON
// index mapping record id to byte offset. Records are little-endian:
//   u32 id length, id bytes, u32 rank, u32 dims[rank], f32 payload.
// The store loads fully into memory at open and supports concurrent readers.
class FeatureStore {
 public:
  struct Record {
    std::string id;
    std::vector<int> dims;
    std::vector<float> values;
  };

  static void write(const std::filesystem::path& bin_path, std::span<const Record> records);
  static FeatureStore open(const std::filesystem::path& bin_path);

  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const Record& get(const std::string& id) const;
  size_t size() const { return records_.size(); }

  static std::filesystem::path index_path(const std::filesystem::path& bin_path);

 private:
  std::vector<Record> records_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace vlnwb
