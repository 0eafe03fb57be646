#pragma once

#include "tsasr/miniwhisper/grammar.hpp"

#include <optional>
#include <vector>

namespace tsasr {

// Toy inverse-text-normalization rules. Formatting is a deterministic function
// of the word sequence so a decoder can learn it:
//   - words 0..3 are proper nouns and always capitalized;
//   - the first word of an utterance is capitalized;
//   - words 4..6 are followed by a comma unless they end the utterance;
//   - an utterance opening with words 7..9 ends in "?", otherwise in ".".
inline constexpr int kProperNounCount = 4;
inline constexpr int kCommaWordsBegin = 4;
inline constexpr int kCommaWordsEnd = 7;
inline constexpr int kQuestionWordsBegin = 7;
inline constexpr int kQuestionWordsEnd = 10;
inline constexpr int kMinWordsForFormatting = 13;

/// Words per timestamp segment (segments are balanced, at most this long).
inline constexpr int kMaxSegmentWords = 4;

/// Multitask prefix:
///   [<|prev|>, prev-text..., <|startoftranscript|>, <|en|>, <|transcribe|>, <|notimestamps|>]
/// The prev segment is omitted when `prev` is nullopt; <|notimestamps|> is
/// omitted when `timestamps` is true. Throws ContractError if prev holds a
/// non-text token.
std::vector<int> make_task_prefix(const TokenGrammar& g, bool timestamps,
                                  const std::optional<std::vector<int>>& prev = std::nullopt);

/// Prev-text that steers the pretrained decoder toward plain (unformatted) output.
std::vector<int> plain_style_cue(const TokenGrammar& g);

/// `words` are plain word tokens. Returns them unchanged after validation.
std::vector<int> plain_transcript(const TokenGrammar& g, const std::vector<int>& words);
std::vector<int> formatted_transcript(const TokenGrammar& g, const std::vector<int>& words);

/// Segments of at most kMaxSegmentWords words, each wrapped as
/// <|t_start|> text <|t_end|>, where times are downsampled frame offsets
/// floor(word_index * frames_per_token / 2).
std::vector<int> timestamped_transcript(const TokenGrammar& g, const std::vector<int>& words, bool formatted,
                                        int frames_per_token);

/// Balanced segment sizes used by timestamped_transcript.
std::vector<int> segment_sizes(int n_words);

/// True when the sequence holds at least one capitalized or punctuation token.
bool has_formatting(const TokenGrammar& g, const std::vector<int>& tokens);

/// Timestamp tokens are present (at least a start/end pair), non-decreasing and
/// within [0, max_index].
bool valid_timestamps(const TokenGrammar& g, const std::vector<int>& tokens, int max_index);

}  // namespace tsasr
