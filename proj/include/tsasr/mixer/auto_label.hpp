#pragma once

#include "tsasr/miniwhisper/backbone.hpp"
#include "tsasr/mixer/mixer.hpp"

#include <vector>

namespace tsasr {

struct AutoLabel {
  std::vector<int> tokens;
  bool truncated = false;  // excluded from supervision
};

/// Greedy transcript of single-talker features by the frozen backbone in the
/// formatted or plain task mode. Throws ContractError for a trainable backbone.
template <typename Scalar>
AutoLabel auto_label(const Backbone<Scalar>& bb, const Matrix<double>& clean_feats, bool formatted);

/// Labels for the clean target component of every example.
template <typename Scalar>
std::vector<AutoLabel> auto_label_targets(const Backbone<Scalar>& bb, const std::vector<MixtureExample>& examples,
                                          bool formatted);

}  // namespace tsasr
