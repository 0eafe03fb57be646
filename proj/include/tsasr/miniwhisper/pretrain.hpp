#pragma once

#include "tsasr/errors.hpp"
#include "tsasr/kv_record.hpp"
#include "tsasr/miniwhisper/backbone.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace tsasr {

/// One single-talker utterance: plain word tokens and their rendered features.
struct CleanUtterance {
  int speaker = 0;
  std::vector<int> words;
  Matrix<double> feats;
  int frames_per_token = 4;
  std::uint64_t seed = 0;
};

/// Output style and timestamp switch of one decoding task.
struct TaskMode {
  bool formatted = true;
  bool timestamps = false;
};

inline constexpr TaskMode kTaskModes[] = {{false, false}, {true, false}, {false, true}, {true, true}};

/// Reference transcript of `u` under `mode`.
std::vector<int> reference_tokens(const TokenGrammar& g, const CleanUtterance& u, TaskMode mode);

/// Canonical task prefix for the bare backbone: formatted output is the
/// default (no prev segment); plain output is requested with plain_style_cue.
std::vector<int> backbone_prefix(const TokenGrammar& g, TaskMode mode);

/// Pretraining prefix with a randomized prev segment: any plain-word prev
/// requests plain output; an absent or formatted prev requests formatted output.
std::vector<int> sampled_prefix(const TokenGrammar& g, TaskMode mode, Rng& rng);

struct PretrainSpec {
  int max_epochs = 60;
  int batch_size = 16;
  double lr = 3e-3;
  double lr_late = 1e-3;
  int lr_switch_epoch = 30;
  double weight_decay = 0.01;
  double target_accuracy = 0.98;
  int min_epochs = 1;
  int context_rows = 4;             // speaker context rows when an augmenter supplies a reference
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending "pretrain.<field>".
  void validate() const;
  KvRecord to_record() const;
  static PretrainSpec from_record(const KvRecord& rec);
};

struct PretrainEpoch {
  int epoch = 0;
  double train_loss = 0.0;          // mean cross-entropy per supervised token
  double heldout_accuracy = 0.0;    // teacher-forced token accuracy, all four modes
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<PretrainEpoch> curve)
      : Error(what), curve_(std::move(curve)) {}
  const std::vector<PretrainEpoch>& curve() const { return curve_; }

 private:
  std::vector<PretrainEpoch> curve_;
};

/// Teacher-forced token accuracy of the bare backbone over every utterance in
/// all four task modes.
template <typename Scalar>
double token_accuracy(const Backbone<Scalar>& bb, const std::vector<CleanUtterance>& data);

/// Training input derived from one utterance: possibly corrupted features and
/// an optional reference utterance of the labeled speaker (empty = none).
struct AugmentedInput {
  Matrix<double> feats;
  Matrix<double> context;
};

/// Optional per-example augmentation applied to training inputs only.
using FeatureAugmenter = std::function<AugmentedInput(const CleanUtterance&, Rng&)>;

/// Trains every entry of `bb` on `train` until held-out accuracy reaches the
/// target, then freezes it. Throws NonConvergenceError (with the learning
/// curve) when the epoch budget runs out first.
template <typename Scalar>
std::vector<PretrainEpoch> pretrain_backbone(Backbone<Scalar>& bb, const std::vector<CleanUtterance>& train,
                                             const std::vector<CleanUtterance>& heldout, const PretrainSpec& spec,
                                             const FeatureAugmenter& augment = {});

/// Greedy transcript of a clean utterance by the bare backbone.
template <typename Scalar>
DecodeResult transcribe_clean(const Backbone<Scalar>& bb, const Matrix<double>& feats, TaskMode mode);

/// Checkpoint plus `<path>.cfg` sidecar holding the model config and grammar inventory.
template <typename Scalar>
void save_backbone(const std::filesystem::path& path, const Backbone<Scalar>& bb);
template <typename Scalar>
Backbone<Scalar> load_backbone(const std::filesystem::path& path);

}  // namespace tsasr
