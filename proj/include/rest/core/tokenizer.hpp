#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rest {

// Word-level vocabulary with four reserved ids. Words are stored lowercase.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // Duplicates and reserved spellings are ignored; order of first
  // appearance fixes the ids.
  explicit Vocabulary(const std::vector<std::string>& words);

  // Collects every word of every text (after normalize_text).
  static Vocabulary from_corpus(const std::vector<std::string>& texts);

  int size() const noexcept { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& word(int id) const;
  // Content words only (reserved ids excluded), in id order.
  std::vector<std::string> words() const;

 private:
  void add(const std::string& word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;
  int vocab_size = 0;

  std::size_t size() const noexcept { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Lowercase, punctuation stripped, whitespace collapsed to single spaces.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

// Normalized text cut to at most `max_words` words.
std::string truncate_words(std::string_view text, std::size_t max_words);

// BOS/EOS are not emitted; the decoder pipeline adds them.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);
// Reserved control ids are dropped; kUnk renders as "<unk>".
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace rest
