#include "tsasr/mixer/auto_label.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/miniwhisper/pretrain.hpp"

namespace tsasr {

template <typename S>
AutoLabel auto_label(const Backbone<S>& bb, const Matrix<double>& clean_feats, bool formatted) {
  if (!bb.frozen()) throw ContractError("auto_label: backbone must be pretrained and frozen");
  const auto r = transcribe_clean(bb, clean_feats, TaskMode{formatted, false});
  return {r.tokens, r.truncated};
}

template <typename S>
std::vector<AutoLabel> auto_label_targets(const Backbone<S>& bb, const std::vector<MixtureExample>& examples,
                                          bool formatted) {
  std::vector<AutoLabel> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(auto_label(bb, ex.target_feats, formatted));
  return out;
}

template AutoLabel auto_label(const Backbone<float>&, const Matrix<double>&, bool);
template AutoLabel auto_label(const Backbone<double>&, const Matrix<double>&, bool);
template std::vector<AutoLabel> auto_label_targets(const Backbone<float>&, const std::vector<MixtureExample>&, bool);
template std::vector<AutoLabel> auto_label_targets(const Backbone<double>&, const std::vector<MixtureExample>&, bool);

}  // namespace tsasr
