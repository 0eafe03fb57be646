#pragma once

#include "tsasr/tsprompt/prompt.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tsasr {

/// LoRA baseline configuration. Targets name attention projections by role:
/// "enc.self.{q,k,v,o}", "dec.self.{q,k,v,o}", "cross.{q,k,v,o}"; each expands
/// to that projection in every block.
struct AdapterConfig {
  int rank = 8;
  std::vector<std::string> targets = {"enc.self.q", "enc.self.v", "dec.self.q", "dec.self.v", "cross.q", "cross.v"};
  double alpha = 16.0;
  bool include_speaker_projection = true;

  /// Throws ConfigError naming the offending "adapter.<field>".
  void validate(const ModelConfig& model) const;
  /// Backbone weight entries adapted by this config.
  std::vector<std::string> target_weights(const ModelConfig& model) const;

  KvRecord to_record() const;
  static AdapterConfig from_record(const KvRecord& rec);
};

/// rank * (d_in + d_out) per targeted matrix, plus d_m * d_e for the speaker
/// projection when included. Identical for both phases.
std::uint64_t count_task_params(const AdapterConfig& cfg, const ModelConfig& model, Phase phase);

/// Full fine-tuning: every backbone entry plus the speaker projection.
std::uint64_t count_finetune_params(const ModelConfig& model);

/// A backbone plus the task machinery that conditions it on a target speaker.
template <typename Scalar>
class TaskModel : public ForwardHooks<Scalar> {
 public:
  virtual std::string_view kind() const = 0;
  /// Weights used by the forward pass.
  virtual const Backbone<Scalar>& backbone() const = 0;
  /// Entries updated by the optimizer.
  virtual ParamStore<Scalar>& trainable() = 0;
  virtual const ParamStore<Scalar>& trainable() const = 0;
  virtual std::uint64_t task_param_count(Phase phase) const = 0;

  virtual Var<Scalar> encode(Graph<Scalar>& g, const Matrix<Scalar>& feats, const RowVector<Scalar>& embedding) const = 0;
  virtual DecoderSetup<Scalar> decoder(Graph<Scalar>& g, const TokenGrammar& grammar, TaskMode mode) const = 0;
};

/// Frozen backbone with no task parameters and no speaker slot.
template <typename Scalar>
class ZeroShotModel final : public TaskModel<Scalar> {
 public:
  explicit ZeroShotModel(const Backbone<Scalar>& bb) : bb_(bb) {}
  std::string_view kind() const override { return "zero-shot"; }
  const Backbone<Scalar>& backbone() const override { return bb_; }
  ParamStore<Scalar>& trainable() override { return empty_; }
  const ParamStore<Scalar>& trainable() const override { return empty_; }
  std::uint64_t task_param_count(Phase) const override { return 0; }
  Var<Scalar> encode(Graph<Scalar>& g, const Matrix<Scalar>& feats, const RowVector<Scalar>& embedding) const override;
  DecoderSetup<Scalar> decoder(Graph<Scalar>& g, const TokenGrammar& grammar, TaskMode mode) const override;

 private:
  const Backbone<Scalar>& bb_;
  ParamStore<Scalar> empty_;
};

/// Frozen backbone with speaker slot, soft prompts and deep prompts.
template <typename Scalar>
class PromptTunedModel final : public TaskModel<Scalar> {
 public:
  PromptTunedModel(const Backbone<Scalar>& bb, SoftPromptSet<Scalar> sps);
  std::string_view kind() const override { return "prompt"; }
  const Backbone<Scalar>& backbone() const override { return bb_; }
  ParamStore<Scalar>& trainable() override { return sps_.params; }
  const ParamStore<Scalar>& trainable() const override { return sps_.params; }
  std::uint64_t task_param_count(Phase phase) const override;
  Var<Scalar> encode(Graph<Scalar>& g, const Matrix<Scalar>& feats, const RowVector<Scalar>& embedding) const override;
  DecoderSetup<Scalar> decoder(Graph<Scalar>& g, const TokenGrammar& grammar, TaskMode mode) const override;
  Var<Scalar> before_block(Graph<Scalar>& g, Side side, int index, Var<Scalar> hidden) const override;

  SoftPromptSet<Scalar>& prompts() { return sps_; }
  const SoftPromptSet<Scalar>& prompts() const { return sps_; }

 private:
  const Backbone<Scalar>& bb_;
  SoftPromptSet<Scalar> sps_;
};

/// Frozen backbone whose targeted weights become W + (alpha / rank) A B.
template <typename Scalar>
class LoraModel final : public TaskModel<Scalar> {
 public:
  LoraModel(const Backbone<Scalar>& bb, AdapterConfig cfg, ParamStore<Scalar> params);
  std::string_view kind() const override { return "lora"; }
  const Backbone<Scalar>& backbone() const override { return bb_; }
  ParamStore<Scalar>& trainable() override { return params_; }
  const ParamStore<Scalar>& trainable() const override { return params_; }
  std::uint64_t task_param_count(Phase phase) const override { return count_task_params(cfg_, bb_.config, phase); }
  Var<Scalar> encode(Graph<Scalar>& g, const Matrix<Scalar>& feats, const RowVector<Scalar>& embedding) const override;
  DecoderSetup<Scalar> decoder(Graph<Scalar>& g, const TokenGrammar& grammar, TaskMode mode) const override;
  Var<Scalar> weight(Graph<Scalar>& g, const ParamStore<Scalar>& store, const std::string& name) const override;

  const AdapterConfig& config() const { return cfg_; }

 private:
  const Backbone<Scalar>& bb_;
  AdapterConfig cfg_;
  ParamStore<Scalar> params_;
};

/// Trainable copy of the backbone plus the speaker projection.
template <typename Scalar>
class FineTuneModel final : public TaskModel<Scalar> {
 public:
  explicit FineTuneModel(Backbone<Scalar> bb) : bb_(std::move(bb)) {}
  std::string_view kind() const override { return "finetune"; }
  const Backbone<Scalar>& backbone() const override { return bb_; }
  ParamStore<Scalar>& trainable() override { return bb_.params; }
  const ParamStore<Scalar>& trainable() const override { return bb_.params; }
  std::uint64_t task_param_count(Phase) const override { return bb_.params.parameter_count(true); }
  Var<Scalar> encode(Graph<Scalar>& g, const Matrix<Scalar>& feats, const RowVector<Scalar>& embedding) const override;
  DecoderSetup<Scalar> decoder(Graph<Scalar>& g, const TokenGrammar& grammar, TaskMode mode) const override;

 private:
  Backbone<Scalar> bb_;
};

/// Adapter entries "task.lora.<weight>.A" (d_in x rank, uniform) and ".B"
/// (rank x d_out, zero), plus the speaker projection when configured.
template <typename Scalar>
LoraModel<Scalar> apply_lora(const Backbone<Scalar>& bb, const AdapterConfig& cfg, std::uint64_t seed);

/// Copy of `bb` with every entry trainable and a fresh speaker projection.
template <typename Scalar>
FineTuneModel<Scalar> set_finetune_mode(const Backbone<Scalar>& bb, std::uint64_t seed);

/// Speaker slot W e as a 1 x d_m row.
template <typename Scalar>
Var<Scalar> speaker_slot(Graph<Scalar>& g, const ParamStore<Scalar>& store, const RowVector<Scalar>& embedding);

}  // namespace tsasr
