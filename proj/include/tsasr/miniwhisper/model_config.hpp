#pragma once

#include "tsasr/kv_record.hpp"
#include "tsasr/miniwhisper/grammar.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace tsasr {

/// Architecture of the encoder-decoder backbone.
struct ModelConfig {
  int d_m = 32;        // model width
  int n_heads = 4;
  int n_enc = 2;       // encoder blocks
  int n_dec = 2;       // decoder blocks
  int d_ff = 64;       // feed-forward width
  int n_feat = 8;      // input feature bands
  int n_words = 40;    // plain word inventory V
  int vocab = 0;       // full token inventory; 0 means "derive from grammar"
  int max_src = 64;    // input frames
  int max_tgt = 48;    // decoder token positions
  int d_e = 16;        // speaker embedding width

  /// Timestamp tokens cover every downsampled frame index 0 .. ceil(max_src/2).
  int n_timestamps() const { return (max_src + 1) / 2 + 1; }
  TokenGrammar grammar() const { return TokenGrammar(n_words, n_timestamps()); }
  int resolved_vocab() const { return vocab > 0 ? vocab : grammar().size(); }

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  static ModelConfig toy();
  /// Real Whisper dimensions (width, block counts, d_e = 512 x-vectors); used
  /// for parameter accounting only. Accepts "whisper-small", "whisper-medium",
  /// "whisper-large" and "toy".
  static ModelConfig preset(const std::string& name);

  KvRecord to_record() const;
  static ModelConfig from_record(const KvRecord& rec);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace tsasr
