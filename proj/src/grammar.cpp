#include "rmgan/grammar.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "rmgan/error.hpp"

namespace rmgan {

GrammarSpec GrammarSpec::caption_default() {
  GrammarSpec g;
  g.categories["det"] = {"a", "the"};
  g.categories["adj"] = {"small", "large", "red",   "blue",  "old",
                         "young", "shiny", "quiet", "busy",  "bright"};
  g.categories["noun"] = {"man",   "woman", "dog",    "cat",   "bird",
                          "child", "car",   "bike",   "boat",  "train",
                          "table", "chair", "plate",  "bowl",  "tree",
                          "house", "street", "park",  "room",  "kitchen"};
  g.categories["verb"] = {"sits",  "stands", "sleeps", "waits", "rides",
                          "walks", "runs",   "jumps",  "rests", "plays"};
  g.categories["prep"] = {"near", "under", "beside", "behind", "above", "inside"};
  g.categories["adv"] = {"quietly", "slowly", "quickly", "calmly"};

  auto t = [](std::initializer_list<const char*> slots, double w) {
    GrammarSpec::Template tpl;
    for (const char* s : slots) tpl.slots.push_back(s);
    tpl.weight = w;
    return tpl;
  };
  g.templates.push_back(t({"$det", "$noun", "$verb", "$prep", "$det", "$noun", "."}, 0.30));
  g.templates.push_back(t({"$det", "$adj", "$noun", "$verb", "$adv", ".", }, 0.20));
  g.templates.push_back(
      t({"$det", "$noun", "$verb", "$adv", "$prep", "$det", "$adj", "$noun", "."}, 0.15));
  g.templates.push_back(
      t({"there", "is", "$det", "$adj", "$noun", "$prep", "$det", "$noun", "."}, 0.20));
  g.templates.push_back(
      t({"$det", "$adj", "$adj", "$noun", "$verb", "$prep", "$det", "$noun", "."}, 0.15));
  g.validate();
  return g;
}

void GrammarSpec::validate() const {
  if (templates.empty()) throw ConfigError("grammar: no templates");
  double total = 0.0;
  for (const auto& tpl : templates) {
    if (tpl.weight <= 0.0) throw ConfigError("grammar: non-positive template weight");
    total += tpl.weight;
    for (const auto& slot : tpl.slots) {
      if (!slot.empty() && slot[0] == '$' && !categories.count(slot.substr(1))) {
        throw ConfigError("grammar: unknown category " + slot);
      }
    }
  }
  if (total <= 0.0) throw ConfigError("grammar: zero total weight");
  for (const auto& [name, words] : categories) {
    if (words.empty()) throw ConfigError("grammar: empty category " + name);
  }
}

std::vector<std::string> GrammarSpec::sample(Rng& rng) const {
  double total = 0.0;
  for (const auto& tpl : templates) total += tpl.weight;
  double pick = rng.uniform() * total;
  std::size_t ti = 0;
  for (; ti + 1 < templates.size(); ++ti) {
    pick -= templates[ti].weight;
    if (pick < 0.0) break;
  }
  const Template& tpl = templates[ti];
  std::vector<std::string> out;
  out.reserve(tpl.slots.size());
  for (const auto& slot : tpl.slots) {
    if (!slot.empty() && slot[0] == '$') {
      const auto& words = categories.at(slot.substr(1));
      out.push_back(words[rng.uniform_index(words.size())]);
    } else {
      out.push_back(slot);
    }
  }
  return out;
}

int GrammarSpec::match_template(const std::vector<std::string>& sentence) const {
  for (std::size_t ti = 0; ti < templates.size(); ++ti) {
    const Template& tpl = templates[ti];
    if (tpl.slots.size() != sentence.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < tpl.slots.size() && ok; ++k) {
      const std::string& slot = tpl.slots[k];
      if (!slot.empty() && slot[0] == '$') {
        const auto& words = categories.at(slot.substr(1));
        ok = std::find(words.begin(), words.end(), sentence[k]) != words.end();
      } else {
        ok = slot == sentence[k];
      }
    }
    if (ok) return static_cast<int>(ti);
  }
  return -1;
}

std::size_t GrammarSpec::surface_vocabulary_size() const {
  std::set<std::string> words;
  for (const auto& [name, list] : categories) words.insert(list.begin(), list.end());
  for (const auto& tpl : templates) {
    for (const auto& slot : tpl.slots) {
      if (slot.empty() || slot[0] != '$') words.insert(slot);
    }
  }
  return words.size();
}

std::size_t GrammarSpec::max_sentence_length() const {
  std::size_t m = 0;
  for (const auto& tpl : templates) m = std::max(m, tpl.slots.size());
  return m;
}

SentenceSet gen_synthetic_corpus(const GrammarSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_synthetic_corpus: n must be >= 1");
  SentenceSet set;
  set.tag = Provenance::kTrain;
  set.sentences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) set.sentences.push_back(spec.sample(rng));
  return set;
}

}  // namespace rmgan
