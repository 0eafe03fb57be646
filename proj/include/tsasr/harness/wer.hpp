#pragma once

#include "tsasr/miniwhisper/grammar.hpp"

#include <cstddef>
#include <vector>

namespace tsasr {

/// Capitalized words become plain, punctuation and timestamps are dropped.
/// Throws ContractError on any other special token.
std::vector<int> normalize_text(const std::vector<int>& tokens, const TokenGrammar& g);

/// Levenshtein distance with unit substitution, insertion and deletion costs.
std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

/// edit_distance / |ref|. Throws ContractError for an empty reference.
double wer(const std::vector<int>& hyp, const std::vector<int>& ref);

}  // namespace tsasr
