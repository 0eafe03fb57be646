#pragma once

#include "tsasr/kv_record.hpp"
#include "tsasr/mixer/auto_label.hpp"
#include "tsasr/mixer/mixer.hpp"
#include "tsasr/tsprompt/task_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tsasr {

enum class Supervision { manual, auto_labeled };
enum class EvalMode { plain, formatted, timestamps };

std::string_view to_string(Supervision s);
Supervision parse_supervision(std::string_view text);
std::string_view to_string(EvalMode m);
EvalMode parse_eval_mode(std::string_view text);
TaskMode task_mode(EvalMode m);

/// Optimization schedule: epochs_clean passes over the clean mixtures, then
/// epochs_both over the noisy ones; lr drops after lr_switch_epoch.
struct TrainSpec {
  int epochs_clean = 10;
  int epochs_both = 1;
  double lr_initial = 1e-4;
  double lr_late = 1e-5;
  int lr_switch_epoch = 5;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  Supervision supervision = Supervision::manual;
  Precision precision = Precision::f32;

  /// Schedule used for the toy model; the defaults above are the full-scale ones.
  static TrainSpec toy();

  /// Throws ConfigError naming the offending "train.<field>".
  void validate() const;
  KvRecord to_record() const;
  static TrainSpec from_record(const KvRecord& rec);
};

struct CurvePoint {
  int epoch = 0;
  std::string split;  // "clean" or "both"
  double lr = 0.0;
  double loss = 0.0;  // mean cross-entropy per supervised token
};

struct TuneResult {
  std::vector<CurvePoint> curve;
  double initial_loss = 0.0;  // over the clean training mixtures, before the first step
  double final_loss = 0.0;    // same set, after the last step
  std::size_t excluded = 0;   // examples without usable supervision
};

/// Supervision target of every training example: the manual plain reference,
/// or the auto label of its clean target component.
std::vector<std::vector<int>> supervision_targets(const std::vector<MixtureExample>& examples, Supervision source,
                                                  const std::vector<AutoLabel>* labels);

struct TeacherForced {
  double loss = 0.0;      // mean cross-entropy per supervised token
  double accuracy = 0.0;  // fraction of supervised tokens predicted exactly
};

/// Teacher-forced statistics of `model` over examples with non-empty targets.
template <typename Scalar>
TeacherForced teacher_forced(const TaskModel<Scalar>& model, const std::vector<MixtureExample>& examples,
                             const std::vector<std::vector<int>>& targets, TaskMode mode);

/// Mean teacher-forced loss of `model` over examples with non-empty targets.
template <typename Scalar>
double mean_loss(const TaskModel<Scalar>& model, const std::vector<MixtureExample>& examples,
                 const std::vector<std::vector<int>>& targets, TaskMode mode);

/// AdamW over model.trainable() only. Throws NumericError naming the batch on
/// a non-finite loss.
template <typename Scalar>
TuneResult prompt_tune(TaskModel<Scalar>& model, const Corpus& corpus, const TrainSpec& spec,
                       const std::vector<AutoLabel>* labels = nullptr);

struct EvalResult {
  EvalMode mode = EvalMode::plain;
  std::size_t examples = 0;
  std::size_t errors = 0;
  std::size_t ref_words = 0;
  double wer = 0.0;                 // corpus level: errors / ref_words
  double timestamp_validity = 0.0;  // timestamps mode only
  double formatted_rate = 0.0;      // outputs holding a capitalized or punctuation token
  std::size_t truncated = 0;
};

template <typename Scalar>
EvalResult evaluate(const TaskModel<Scalar>& model, const std::vector<MixtureExample>& examples, EvalMode mode);

/// Bare-backbone evaluation on single-talker utterances.
template <typename Scalar>
EvalResult evaluate_clean(const Backbone<Scalar>& bb, const std::vector<CleanUtterance>& data, EvalMode mode);

}  // namespace tsasr
