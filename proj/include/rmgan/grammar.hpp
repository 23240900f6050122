#pragma once

#include <map>
#include <string>
#include <vector>

#include "rmgan/rng.hpp"
#include "rmgan/vocab.hpp"

namespace rmgan {

/// Weighted template grammar used to synthesize a desk-scale corpus.
/// Template slots starting with '$' name a word category; other slots are
/// literals. Membership of a sentence is decidable by direct matching.
struct GrammarSpec {
  struct Template {
    std::vector<std::string> slots;
    double weight = 1.0;
  };

  std::map<std::string, std::vector<std::string>> categories;
  std::vector<Template> templates;

  /// Built-in caption-style grammar: 55 surface words, sentences of
  /// 7-10 tokens.
  static GrammarSpec caption_default();

  std::vector<std::string> sample(Rng& rng) const;
  /// Index of the template a sentence instantiates, or -1.
  int match_template(const std::vector<std::string>& sentence) const;
  bool contains(const std::vector<std::string>& sentence) const {
    return match_template(sentence) >= 0;
  }

  std::size_t surface_vocabulary_size() const;
  std::size_t max_sentence_length() const;
  void validate() const;
};

SentenceSet gen_synthetic_corpus(const GrammarSpec& spec, std::size_t n, Rng& rng);

}  // namespace rmgan
