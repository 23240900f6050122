#include "rmgan/vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "rmgan/error.hpp"

namespace rmgan {

namespace {
const std::vector<std::string> kReserved = {"[PAD]", "[MASK]", "[BOS]", "[EOS]", "[UNK]"};
}

Vocabulary::Vocabulary() {
  tokens_ = kReserved;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_[tokens_[i]] = static_cast<int>(i);
  }
}

Vocabulary Vocabulary::from_sentences(const SentenceSet& sentences) {
  std::map<std::string, std::size_t> freq;
  for (const auto& sent : sentences.sentences) {
    for (const auto& tok : sent) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, count] : order) {
    if (v.index_.count(tok)) continue;  // a reserved literal in the corpus
    v.index_[tok] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_token_list(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReserved.size() ||
      !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
    throw DataError("Vocabulary: token list does not start with reserved tokens");
  }
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (const auto& tok : tokens) {
    if (v.index_.count(tok)) throw DataError("Vocabulary: duplicate token " + tok);
    v.index_[tok] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::invalid_argument("Vocabulary::token: id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id(tok));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (is_reserved(i)) continue;
    out.push_back(token(i));
  }
  return out;
}

}  // namespace rmgan
