#include "tsasr/miniwhisper/grammar.hpp"

#include "tsasr/errors.hpp"

#include <array>

namespace tsasr {

namespace {
constexpr std::array<std::string_view, 3> kPunct = {".", ",", "?"};
constexpr std::array<std::string_view, 6> kSpecial = {"<|prev|>",       "<|startoftranscript|>", "<|en|>",
                                                      "<|transcribe|>", "<|notimestamps|>",      "<|endoftext|>"};
}  // namespace

TokenGrammar::TokenGrammar(int n_words, int n_timestamps) : n_words_(n_words), n_timestamps_(n_timestamps) {
  if (n_words <= 0 || n_timestamps <= 0) throw ConfigError("grammar: word and timestamp counts must be positive");
}

int TokenGrammar::word(int i) const {
  if (i < 0 || i >= n_words_) throw ContractError("grammar: word index " + std::to_string(i) + " out of range");
  return i;
}

int TokenGrammar::capital(int i) const { return n_words_ + word(i); }

int TokenGrammar::timestamp(int k) const {
  if (k < 0 || k >= n_timestamps_) throw ContractError("grammar: timestamp " + std::to_string(k) + " out of range");
  return 2 * n_words_ + 9 + k;
}

TokenClass TokenGrammar::classify(int id) const {
  if (!valid(id)) throw ContractError("grammar: token id " + std::to_string(id) + " out of range");
  if (id < n_words_) return TokenClass::word;
  if (id < 2 * n_words_) return TokenClass::capital;
  if (id < 2 * n_words_ + 3) return TokenClass::punct;
  if (id < 2 * n_words_ + 9) return TokenClass::special;
  return TokenClass::timestamp;
}

bool TokenGrammar::is_text(int id) const {
  if (!valid(id)) return false;
  const auto c = classify(id);
  return c == TokenClass::word || c == TokenClass::capital || c == TokenClass::punct;
}

int TokenGrammar::to_plain(int id) const { return is_capital(id) ? id - n_words_ : id; }
int TokenGrammar::to_capital(int id) const { return is_word(id) ? id + n_words_ : id; }

int TokenGrammar::word_index(int id) const {
  if (is_word(id)) return id;
  if (is_capital(id)) return id - n_words_;
  throw ContractError("grammar: token " + std::to_string(id) + " is not a word");
}

int TokenGrammar::timestamp_index(int id) const {
  if (!is_timestamp(id)) throw ContractError("grammar: token " + std::to_string(id) + " is not a timestamp");
  return id - (2 * n_words_ + 9);
}

std::string TokenGrammar::name(int id) const {
  switch (classify(id)) {
    case TokenClass::word: return "w" + std::to_string(id);
    case TokenClass::capital: return "W" + std::to_string(id - n_words_);
    case TokenClass::punct: return std::string(kPunct[static_cast<std::size_t>(id - 2 * n_words_)]);
    case TokenClass::special: return std::string(kSpecial[static_cast<std::size_t>(id - 2 * n_words_ - 3)]);
    case TokenClass::timestamp: return "<|t_" + std::to_string(timestamp_index(id)) + "|>";
  }
  return {};
}

std::string TokenGrammar::render(const std::vector<int>& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += name(tokens[i]);
  }
  return out;
}

std::vector<int> TokenGrammar::parse(std::string_view text) const {
  std::vector<int> out;
  while (!text.empty()) {
    const auto start = text.find_first_not_of(" \t\n");
    if (start == std::string_view::npos) break;
    text.remove_prefix(start);
    const auto end = text.find_first_of(" \t\n");
    const std::string tok(text.substr(0, end));
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end);
    int id = -1;
    for (std::size_t i = 0; i < kPunct.size(); ++i)
      if (tok == kPunct[i]) id = 2 * n_words_ + static_cast<int>(i);
    for (std::size_t i = 0; i < kSpecial.size(); ++i)
      if (tok == kSpecial[i]) id = 2 * n_words_ + 3 + static_cast<int>(i);
    if (id < 0 && tok.size() > 1 && (tok[0] == 'w' || tok[0] == 'W')) {
      const int k = std::stoi(tok.substr(1));
      id = tok[0] == 'w' ? word(k) : capital(k);
    }
    if (id < 0 && tok.rfind("<|t_", 0) == 0) id = timestamp(std::stoi(tok.substr(4)));
    if (id < 0) throw ContractError("grammar: unknown token '" + tok + "'");
    out.push_back(id);
  }
  return out;
}

}  // namespace tsasr
