#include "rest/core/tokenizer.hpp"

#include <cctype>

#include "rest/core/error.hpp"

namespace rest {
namespace {

const char* const kReservedWords[Vocabulary::kReserved] = {"<bos>", "<eos>", "<pad>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* w : kReservedWords) {
    ids_.emplace(w, static_cast<int>(words_.size()));
    words_.emplace_back(w);
  }
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    for (const auto& part : split_words(w)) add(part);
  }
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& texts) {
  Vocabulary vocab;
  for (const auto& t : texts) {
    for (const auto& w : split_words(t)) vocab.add(w);
  }
  return vocab;
}

void Vocabulary::add(const std::string& word) {
  if (word.empty() || ids_.count(word)) return;
  ids_.emplace(word, static_cast<int>(words_.size()));
  words_.push_back(word);
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return ids_.count(std::string(word)) > 0;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorCode::kInvalidArgument, "token id out of range: " + std::to_string(id));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return {words_.begin() + kReserved, words_.end()};
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (std::ispunct(c)) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  const std::string norm = normalize_text(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    words.emplace_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::string truncate_words(std::string_view text, std::size_t max_words) {
  auto words = split_words(text);
  if (words.size() > max_words) words.resize(max_words);
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.vocab_size = vocab.size();
  for (const auto& w : split_words(text)) seq.ids.push_back(vocab.id(w));
  return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (int id : seq.ids) {
    if (id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(id);
  }
  return out;
}

}  // namespace rest
