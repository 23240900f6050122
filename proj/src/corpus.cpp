#include "rmgan/corpus.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "rmgan/error.hpp"

namespace rmgan {

std::vector<std::string> tokenize_line(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool valid_utf8(const std::string& bytes) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(bytes[i]);
    std::size_t len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      if (c < 0xC2) return false;  // overlong
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      if (c > 0xF4) return false;  // beyond U+10FFFF
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(bytes[i + k]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

SentenceSet load_sentences(const std::string& path, Provenance tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  SentenceSet set;
  set.tag = tag;
  std::string line;
  std::size_t lineno = 0;
  bool any_line = false;
  while (std::getline(in, line)) {
    ++lineno;
    any_line = true;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!valid_utf8(line)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed UTF-8");
    }
    auto tokens = tokenize_line(line);
    if (tokens.empty()) {
      std::cerr << "warning: " << path << ":" << lineno << ": empty line skipped\n";
      continue;
    }
    set.sentences.push_back(std::move(tokens));
  }
  if (!any_line || set.sentences.empty()) {
    throw DataError("corpus file has no sentences: " + path);
  }
  return set;
}

std::pair<SentenceSet, Vocabulary> load_corpus(const std::string& path) {
  SentenceSet set = load_sentences(path, Provenance::kTrain);
  Vocabulary vocab = Vocabulary::from_sentences(set);
  return {std::move(set), std::move(vocab)};
}

void save_sentences(const SentenceSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  for (const auto& sent : set.sentences) {
    out << detokenize(sent) << '\n';
  }
}

}  // namespace rmgan
