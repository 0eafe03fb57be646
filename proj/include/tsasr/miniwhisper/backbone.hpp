#pragma once

#include "tsasr/gradcore/graph.hpp"
#include "tsasr/gradcore/param_store.hpp"
#include "tsasr/miniwhisper/model_config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tsasr {

enum class Side { encoder, decoder };

std::string_view to_string(Side side);

/// Extension points used by task adapters. The default implementation is the
/// plain frozen backbone.
template <typename Scalar>
class ForwardHooks {
 public:
  virtual ~ForwardHooks() = default;

  /// Effective value of a backbone weight (LoRA adds its low-rank delta here).
  virtual Var<Scalar> weight(Graph<Scalar>& g, const ParamStore<Scalar>& store, const std::string& name) const {
    return g.param(store, name);
  }

  /// Input sequence of block `index` on `side`; deep prompting rewrites rows here.
  virtual Var<Scalar> before_block(Graph<Scalar>& g, Side side, int index, Var<Scalar> hidden) const {
    (void)g, (void)side, (void)index;
    return hidden;
  }
};

/// Encoder-decoder parameters plus their architecture.
///
/// Entry names:
///   enc.conv1.{w,b} enc.conv2.{w,b}
///   enc.{i}.attn_ln.{g,b} enc.{i}.attn.{q,k,v,o}.{w,b} enc.{i}.mlp_ln.{g,b} enc.{i}.mlp.{fc1,fc2}.{w,b}
///   enc.ln.{g,b}
///   dec.tok_emb dec.pos_emb
///   dec.{i}.attn_ln / attn / cross_ln / cross / mlp_ln / mlp (as above)
///   dec.ln.{g,b}
template <typename Scalar>
struct Backbone {
  ModelConfig config;
  ParamStore<Scalar> params;

  static Backbone build(const ModelConfig& cfg, std::uint64_t seed);

  void freeze() { params.set_all_trainable(false); }
  bool frozen() const { return params.trainable_names().empty(); }
  std::uint64_t parameter_count() const { return params.parameter_count(); }

  template <typename Other>
  Backbone<Other> cast() const {
    return {config, params.template cast<Other>()};
  }
};

/// Name and shape of every backbone entry, in construction order.
std::vector<std::pair<std::string, Shape>> backbone_layout(const ModelConfig& cfg);

/// Downsampled length of T input frames.
inline Index encoder_frames(Index frames) { return (frames + 1) / 2; }

/// Strided conv front end: ceil(T/2) x d_m, no positions.
template <typename Scalar>
Var<Scalar> front_end(Graph<Scalar>& g, const Backbone<Scalar>& bb, const Matrix<Scalar>& feats,
                      const ForwardHooks<Scalar>* hooks = nullptr);

/// Speaker context rows: the front-end output of a reference utterance,
/// mean-pooled over `rows` consecutive chunks. Used as position-free encoder
/// prefix rows during pretraining.
template <typename Scalar>
Var<Scalar> speaker_context(Graph<Scalar>& g, const Backbone<Scalar>& bb, const Matrix<Scalar>& feats, int rows);

/// Runs the conv front end on `feats`, adds sinusoidal positions, prepends the
/// position-free `prefix` rows and applies the encoder blocks.
/// Output: (prefix rows + ceil(T/2)) x d_m. Throws CapacityError when T > max_src.
template <typename Scalar>
Var<Scalar> encode(Graph<Scalar>& g, const Backbone<Scalar>& bb, const Matrix<Scalar>& feats,
                   std::optional<Var<Scalar>> prefix = std::nullopt, const ForwardHooks<Scalar>* hooks = nullptr);

/// Soft rows spliced into the decoder input after token `insert_at - 1`.
template <typename Scalar>
struct DecoderPrompt {
  Var<Scalar> rows;
  Index insert_at = 1;
};

template <typename Scalar>
struct DecoderOutput {
  Var<Scalar> hidden;  // after the final layer norm
  Var<Scalar> logits;  // hidden * tok_emb^T; one row per token plus one per prompt row
};

/// Decoder over `tokens` with learned positions for token rows only.
/// Throws CapacityError when tokens exceed max_tgt.
template <typename Scalar>
DecoderOutput<Scalar> decode(Graph<Scalar>& g, const Backbone<Scalar>& bb, Var<Scalar> enc_out,
                             const std::vector<int>& tokens, std::optional<DecoderPrompt<Scalar>> prompt = std::nullopt,
                             const ForwardHooks<Scalar>* hooks = nullptr);

struct DecodeResult {
  std::vector<int> tokens;  // generated tokens, without prefix and <|endoftext|>
  bool truncated = false;   // stopped by max_len or position capacity
};

template <typename Scalar>
DecodeResult greedy_decode(Graph<Scalar>& g, const Backbone<Scalar>& bb, Var<Scalar> enc_out,
                           const std::vector<int>& prefix, std::optional<DecoderPrompt<Scalar>> prompt, int max_len,
                           const ForwardHooks<Scalar>* hooks = nullptr);

/// Decoder input and per-row target for teacher forcing: the inputs are
/// prefix + transcript, the target of row r is token r + 1 of
/// prefix + transcript + <|endoftext|>, and prefix rows are masked (-1).
struct TeacherForcing {
  std::vector<int> inputs;
  std::vector<int> targets;
};
TeacherForcing teacher_forcing(const std::vector<int>& prefix, const std::vector<int>& transcript, int eot);

/// Inserts `count` masked targets at `at` to line up with spliced prompt rows.
std::vector<int> with_prompt_mask(const std::vector<int>& targets, Index at, Index count);

template <typename Scalar>
struct SequenceLoss {
  Var<Scalar> loss;   // summed cross-entropy over supervised rows
  int supervised = 0;
  int correct = 0;    // argmax hits among supervised rows
};

template <typename Scalar>
SequenceLoss<Scalar> sequence_loss(Graph<Scalar>& g, const Backbone<Scalar>& bb, Var<Scalar> enc_out,
                                   const std::vector<int>& prefix, const std::vector<int>& transcript,
                                   std::optional<DecoderPrompt<Scalar>> prompt = std::nullopt,
                                   const ForwardHooks<Scalar>* hooks = nullptr, Scalar scale = Scalar(1));

}  // namespace tsasr
