#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace twohop {

// Vocabulary tokenizer with greedy longest-match encoding. Token ids are
// indices into the vocabulary; decoding is plain concatenation, so
// decode(encode(t)) == t whenever encoding succeeds.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(std::vector<std::string> tokens, std::vector<int> special_ids = {});

  static Tokenizer load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& text(int id) const;
  bool is_special(int id) const;
  std::optional<int> find(std::string_view token) const;

  std::vector<int> encode(std::string_view text) const;

  struct Offset {
    int id;
    std::size_t begin;  // byte offsets into the source text
    std::size_t end;
  };
  std::vector<Offset> encode_with_offsets(std::string_view text) const;

  std::string decode(std::span<const int> ids) const;

  // ids of non-special tokens, in vocabulary order
  std::vector<int> regular_ids() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> special_;
  std::unordered_map<std::string_view, int> index_;  // views into tokens_
  std::size_t max_len_ = 0;

  void build_index();
};

}  // namespace twohop
