#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tsasr {

enum class TokenClass { word, capital, punct, special, timestamp };

/// Token inventory of the miniature multitask format.
///
/// Id layout (stable for a given (n_words, n_timestamps)):
///   [0, V)            plain words w_i
///   [V, 2V)           capitalized variants W_i (paired with w_i)
///   2V .. 2V+2        punctuation "." "," "?"
///   2V+3 .. 2V+8      <|prev|> <|startoftranscript|> <|en|> <|transcribe|> <|notimestamps|> <|endoftext|>
///   2V+9 ..           timestamps <|t_0|> .. <|t_{n_timestamps-1}|>, one contiguous block
class TokenGrammar {
 public:
  TokenGrammar(int n_words, int n_timestamps);

  int n_words() const { return n_words_; }
  int n_timestamps() const { return n_timestamps_; }
  int size() const { return 2 * n_words_ + 3 + 6 + n_timestamps_; }

  int word(int i) const;
  int capital(int i) const;
  int period() const { return 2 * n_words_; }
  int comma() const { return 2 * n_words_ + 1; }
  int question() const { return 2 * n_words_ + 2; }
  int prev() const { return 2 * n_words_ + 3; }
  int sot() const { return 2 * n_words_ + 4; }
  int lang_en() const { return 2 * n_words_ + 5; }
  int transcribe() const { return 2 * n_words_ + 6; }
  int no_timestamps() const { return 2 * n_words_ + 7; }
  int eot() const { return 2 * n_words_ + 8; }
  int timestamp(int k) const;

  TokenClass classify(int id) const;
  bool valid(int id) const { return id >= 0 && id < size(); }
  bool is_word(int id) const { return valid(id) && classify(id) == TokenClass::word; }
  bool is_capital(int id) const { return valid(id) && classify(id) == TokenClass::capital; }
  bool is_punct(int id) const { return valid(id) && classify(id) == TokenClass::punct; }
  bool is_special(int id) const { return valid(id) && classify(id) == TokenClass::special; }
  bool is_timestamp(int id) const { return valid(id) && classify(id) == TokenClass::timestamp; }
  /// Word, capital or punctuation.
  bool is_text(int id) const;

  /// Capitalized variant -> plain word; every other id unchanged.
  int to_plain(int id) const;
  /// Plain word -> capitalized variant; every other id unchanged.
  int to_capital(int id) const;
  /// Word index of a plain or capitalized token.
  int word_index(int id) const;
  int timestamp_index(int id) const;

  std::string name(int id) const;
  std::string render(const std::vector<int>& tokens) const;
  /// Inverse of render(): whitespace-separated token names.
  std::vector<int> parse(std::string_view text) const;

  friend bool operator==(const TokenGrammar&, const TokenGrammar&) = default;

 private:
  int n_words_;
  int n_timestamps_;
};

}  // namespace tsasr
