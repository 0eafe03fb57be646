#include "tsasr/miniwhisper/transcript.hpp"

#include "tsasr/errors.hpp"

namespace tsasr {

namespace {

void require_words(const TokenGrammar& g, const std::vector<int>& words) {
  if (g.n_words() < kMinWordsForFormatting) throw ConfigError("grammar too small for formatting rules");
  for (int w : words)
    if (!g.is_word(w)) throw ContractError("transcript: token " + std::to_string(w) + " is not a plain word");
}

// Formatted rendering of word i, with its trailing punctuation.
void append_formatted_word(const TokenGrammar& g, const std::vector<int>& words, std::size_t i,
                           std::vector<int>& out) {
  const int w = words[i];
  const bool capital = i == 0 || w < kProperNounCount;
  out.push_back(capital ? g.to_capital(w) : w);
  const bool last = i + 1 == words.size();
  if (!last && w >= kCommaWordsBegin && w < kCommaWordsEnd) out.push_back(g.comma());
  if (last) {
    const bool question = words.front() >= kQuestionWordsBegin && words.front() < kQuestionWordsEnd;
    out.push_back(question ? g.question() : g.period());
  }
}

}  // namespace

std::vector<int> make_task_prefix(const TokenGrammar& g, bool timestamps, const std::optional<std::vector<int>>& prev) {
  std::vector<int> out;
  if (prev) {
    for (int t : *prev)
      if (!g.is_text(t)) throw ContractError("task prefix: prev-text holds non-text token " + std::to_string(t));
    out.push_back(g.prev());
    out.insert(out.end(), prev->begin(), prev->end());
  }
  out.push_back(g.sot());
  out.push_back(g.lang_en());
  out.push_back(g.transcribe());
  if (!timestamps) out.push_back(g.no_timestamps());
  return out;
}

std::vector<int> plain_style_cue(const TokenGrammar& g) { return {g.word(10), g.word(11), g.word(12)}; }

std::vector<int> plain_transcript(const TokenGrammar& g, const std::vector<int>& words) {
  require_words(g, words);
  return words;
}

std::vector<int> formatted_transcript(const TokenGrammar& g, const std::vector<int>& words) {
  require_words(g, words);
  std::vector<int> out;
  for (std::size_t i = 0; i < words.size(); ++i) append_formatted_word(g, words, i, out);
  return out;
}

std::vector<int> segment_sizes(int n_words) {
  if (n_words <= 0) return {};
  const int segments = (n_words + kMaxSegmentWords - 1) / kMaxSegmentWords;
  std::vector<int> sizes(static_cast<std::size_t>(segments), n_words / segments);
  for (int i = 0; i < n_words % segments; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

std::vector<int> timestamped_transcript(const TokenGrammar& g, const std::vector<int>& words, bool formatted,
                                        int frames_per_token) {
  require_words(g, words);
  if (frames_per_token <= 0) throw ContractError("timestamps: frames_per_token must be positive");
  std::vector<int> out;
  std::size_t at = 0;
  for (int size : segment_sizes(static_cast<int>(words.size()))) {
    const auto first = at;
    const auto end = at + static_cast<std::size_t>(size);
    out.push_back(g.timestamp(static_cast<int>(first) * frames_per_token / 2));
    for (; at < end; ++at) {
      if (formatted)
        append_formatted_word(g, words, at, out);
      else
        out.push_back(words[at]);
    }
    out.push_back(g.timestamp(static_cast<int>(end) * frames_per_token / 2));
  }
  return out;
}

bool has_formatting(const TokenGrammar& g, const std::vector<int>& tokens) {
  for (int t : tokens)
    if (g.is_capital(t) || g.is_punct(t)) return true;
  return false;
}

bool valid_timestamps(const TokenGrammar& g, const std::vector<int>& tokens, int max_index) {
  int count = 0;
  int last = -1;
  for (int t : tokens) {
    if (!g.is_timestamp(t)) continue;
    const int k = g.timestamp_index(t);
    if (k < last || k > max_index) return false;
    last = k;
    ++count;
  }
  return count >= 2;
}

}  // namespace tsasr
