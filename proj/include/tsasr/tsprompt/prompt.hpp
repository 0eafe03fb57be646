#pragma once

#include "tsasr/gradcore/graph.hpp"
#include "tsasr/gradcore/param_store.hpp"
#include "tsasr/kv_record.hpp"
#include "tsasr/miniwhisper/backbone.hpp"
#include "tsasr/miniwhisper/model_config.hpp"
#include "tsasr/miniwhisper/pretrain.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tsasr {

enum class Reparam { none, shared, separate };

std::string_view to_string(Reparam r);
Reparam parse_reparam(std::string_view text);

enum class Phase { train, infer };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view text);

/// Placement of the task parameters.
///
/// Block 0 of each side takes the input prompts (encoder rows after the
/// speaker slot, decoder rows after <|prev|>). With `deep`, every block listed
/// in deep_enc / deep_dec (all later blocks when the list is empty) replaces
/// the same rows of its input with its own fresh prompts.
struct PromptConfig {
  int L_e = 4;
  int L_d = 4;
  bool deep = true;
  std::vector<int> deep_enc;
  std::vector<int> deep_dec;
  Reparam reparam = Reparam::separate;
  int mlp_hidden = 0;  // 0 selects d_m / 2
  bool speaker_in_encoder = true;

  /// Throws ConfigError naming the offending "prompt.<field>".
  void validate(const ModelConfig& model) const;
  int resolved_hidden(const ModelConfig& model) const { return mlp_hidden > 0 ? mlp_hidden : model.d_m / 2; }
  int length(Side side) const { return side == Side::encoder ? L_e : L_d; }
  /// Blocks of `side` owning a prompt matrix, ascending; empty when that side's length is 0.
  std::vector<int> prompt_blocks(Side side, const ModelConfig& model) const;

  KvRecord to_record() const;
  static PromptConfig from_record(const KvRecord& rec);
  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

/// Entry names inside a SoftPromptSet.
std::string speaker_projection_name();
std::string prompt_name(Side side, int block);
/// Prefix of the reparameterization net serving a prompt (".fc1.w" etc. follow).
std::string reparam_net_name(Reparam mode, Side side, int block);

/// Trainable task parameters of a prompt-tuned model.
template <typename Scalar>
struct SoftPromptSet {
  PromptConfig config;
  ModelConfig model;
  ParamStore<Scalar> params;
  bool baked = false;

  template <typename Other>
  SoftPromptSet<Other> cast() const {
    return {config, model, params.template cast<Other>(), baked};
  }
};

/// Prompts and W drawn uniform(-0.5, 0.5) * d_m^-1/2; reparameterization nets
/// with the same first layer scheme and a zero final layer.
template <typename Scalar>
SoftPromptSet<Scalar> init_task_params(const PromptConfig& cfg, const ModelConfig& model, std::uint64_t seed);

/// Prompt matrix of (side, block) after reparameterization (raw when baked or
/// reparam = none). Memoized per graph.
template <typename Scalar>
Var<Scalar> effective_prompt(Graph<Scalar>& g, const SoftPromptSet<Scalar>& sps, Side side, int block);

/// [W e; P_e'] as (1 + L_e) x d_m rows for the encoder prefix.
template <typename Scalar>
Var<Scalar> compose_encoder_input(Graph<Scalar>& g, const SoftPromptSet<Scalar>& sps, const RowVector<Scalar>& e);

template <typename Scalar>
struct DecoderSetup {
  std::vector<int> prefix;
  std::optional<DecoderPrompt<Scalar>> prompt;
};

/// Task prefix with L_d prompt slots after <|prev|>. With L_d = 0 the plain
/// task prefix in the formatted default style is returned.
template <typename Scalar>
DecoderSetup<Scalar> compose_decoder_prefix(Graph<Scalar>& g, const SoftPromptSet<Scalar>& sps,
                                            const TokenGrammar& grammar, bool timestamps);

/// Replaces rows [1, 1 + L) of the input of `block` with that block's prompts
/// when the block owns deep prompts; identity otherwise.
template <typename Scalar>
Var<Scalar> apply_deep_prompts(Graph<Scalar>& g, const SoftPromptSet<Scalar>& sps, Var<Scalar> block_input, Side side,
                               int block);

/// Materializes reparameterized prompts and deletes the nets. Returns false
/// (and leaves `sps` untouched) when there is nothing to bake.
template <typename Scalar>
bool reparameterize_and_bake(SoftPromptSet<Scalar>& sps);

/// Closed-form task-parameter count.
std::uint64_t count_task_params(const PromptConfig& cfg, const ModelConfig& model, Phase phase);

/// Task checkpoint (task entries only) plus `<path>.cfg` sidecar.
template <typename Scalar>
void save_task_params(const std::filesystem::path& path, const SoftPromptSet<Scalar>& sps);
template <typename Scalar>
SoftPromptSet<Scalar> load_task_params(const std::filesystem::path& path);

}  // namespace tsasr
