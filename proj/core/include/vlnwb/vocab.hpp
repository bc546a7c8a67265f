#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlnwb {

// Lowercased token vocabulary built from a training corpus (min frequency 1)
// with fixed special ids up front.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kMask = 4;

  static Vocab build(std::span<const std::vector<std::string>> corpus) {
    Vocab v;
    std::map<std::string, int> freq;  // ordered map keeps vocab ids reproducible
    for (const auto& stream : corpus)
      for (const auto& tok : stream) ++freq[tok];
    for (const auto& [word, count] : freq) {
      (void)count;
      v.index_[word] = static_cast<int>(v.words_.size());
      v.words_.push_back(word);
    }
    return v;
  }

  int id(const std::string& lower_word) const {
    const auto it = index_.find(lower_word);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& word(int id) const {
    if (id < 0 || id >= size()) throw std::runtime_error("vocab: id out of range");
    return words_[id];
  }

  int size() const { return static_cast<int>(words_.size()); }

  const std::vector<std::string>& words() const { return words_; }

 private:
  Vocab() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "<mask>"}) {
      index_[s] = static_cast<int>(words_.size());
      words_.push_back(s);
    }
  }

  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

}  // namespace vlnwb
