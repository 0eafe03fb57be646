#include "tsasr/harness/wer.hpp"

#include "tsasr/errors.hpp"

#include <algorithm>
#include <numeric>

namespace tsasr {

std::vector<int> normalize_text(const std::vector<int>& tokens, const TokenGrammar& g) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    switch (g.classify(t)) {
      case TokenClass::word: out.push_back(t); break;
      case TokenClass::capital: out.push_back(g.to_plain(t)); break;
      case TokenClass::punct:
      case TokenClass::timestamp: break;
      case TokenClass::special: throw ContractError("normalize: special token " + g.name(t) + " in transcript");
    }
  }
  return out;
}

std::size_t edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  std::vector<std::size_t> row(ref.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[ref.size()];
}

double wer(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty()) throw ContractError("wer: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace tsasr
