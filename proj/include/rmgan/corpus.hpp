#pragma once

#include <string>
#include <utility>

#include "rmgan/vocab.hpp"

namespace rmgan {

/// Reads a plain-text corpus (UTF-8, one sentence per line, whitespace
/// tokenization) and builds its vocabulary. Empty lines are skipped with a
/// warning on stderr; an empty file or malformed UTF-8 raises DataError.
std::pair<SentenceSet, Vocabulary> load_corpus(const std::string& path);

/// Sentence loading without vocabulary construction.
SentenceSet load_sentences(const std::string& path,
                           Provenance tag = Provenance::kGenerated);

void save_sentences(const SentenceSet& set, const std::string& path);

std::vector<std::string> tokenize_line(const std::string& line);
std::string detokenize(const std::vector<std::string>& tokens);

bool valid_utf8(const std::string& bytes);

}  // namespace rmgan
