#include "twohop/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include "twohop/common.hpp"

namespace twohop {

using nlohmann::json;

Tokenizer::Tokenizer(std::vector<std::string> tokens, std::vector<int> special_ids)
    : tokens_(std::move(tokens)) {
  special_.assign(tokens_.size(), false);
  for (int id : special_ids) {
    require(id >= 0 && id < size(), "special id out of range");
    special_[static_cast<std::size_t>(id)] = true;
  }
  build_index();
}

void Tokenizer::build_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  max_len_ = 0;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    require(!tokens_[i].empty(), "empty token at id " + std::to_string(i));
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    (void)it;
    require(inserted, "duplicate token in vocabulary: '" + tokens_[i] + "'");
    max_len_ = std::max(max_len_, tokens_[i].size());
  }
}

Tokenizer Tokenizer::load(const std::string& path) {
  json j = json::parse(read_file(path));
  require(j.contains("tokens") && j["tokens"].is_array(), "tokenizer file missing 'tokens' array: " + path);
  std::vector<std::string> toks = j["tokens"].get<std::vector<std::string>>();
  std::vector<int> special;
  if (j.contains("special_ids")) special = j["special_ids"].get<std::vector<int>>();
  return Tokenizer(std::move(toks), std::move(special));
}

void Tokenizer::save(const std::string& path) const {
  json j;
  j["tokens"] = tokens_;
  std::vector<int> special;
  for (int i = 0; i < size(); ++i)
    if (special_[static_cast<std::size_t>(i)]) special.push_back(i);
  j["special_ids"] = special;
  write_file(path, j.dump(1) + "\n");
}

const std::string& Tokenizer::text(int id) const {
  require(id >= 0 && id < size(), "token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Tokenizer::is_special(int id) const {
  require(id >= 0 && id < size(), "token id out of range: " + std::to_string(id));
  return special_[static_cast<std::size_t>(id)];
}

std::optional<int> Tokenizer::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<Tokenizer::Offset> Tokenizer::encode_with_offsets(std::string_view text) const {
  std::vector<Offset> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t remaining = text.size() - pos;
    int id = -1;
    std::size_t len = std::min(max_len_, remaining);
    for (; len >= 1; --len) {
      auto it = index_.find(text.substr(pos, len));
      if (it != index_.end()) {
        id = it->second;
        break;
      }
    }
    require(id >= 0, "cannot tokenize text at byte " + std::to_string(pos) + ": '" +
                         std::string(text.substr(pos, 8)) + "...'");
    out.push_back(Offset{id, pos, pos + len});
    pos += len;
  }
  return out;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& o : encode_with_offsets(text)) ids.push_back(o.id);
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) out += text(id);
  return out;
}

std::vector<int> Tokenizer::regular_ids() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (!special_[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

}  // namespace twohop
