#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace rmgan {

enum class Provenance { kTrain, kValid, kTest, kGenerated };

/// Tokenized sentences plus where they came from.
struct SentenceSet {
  std::vector<std::vector<std::string>> sentences;
  Provenance tag = Provenance::kTrain;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

/// Token/id association with reserved special tokens at the front.
/// Non-reserved ids are assigned by (frequency descending, token
/// lexicographic) so vocabulary construction is deterministic.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary();
  static Vocabulary from_sentences(const SentenceSet& sentences);
  /// Rebuilds from an explicit token list (checkpoint restore); the list
  /// must start with the five reserved tokens.
  static Vocabulary from_token_list(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }
  std::size_t reserved_count() const { return kNumReserved; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  /// Drops reserved ids; the inverse of encode on in-vocabulary text.
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& token_list() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace rmgan
