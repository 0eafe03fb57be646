#pragma once

#include "tsasr/gradcore/matrix.hpp"
#include "tsasr/kv_record.hpp"
#include "tsasr/miniwhisper/grammar.hpp"
#include "tsasr/miniwhisper/pretrain.hpp"

#include <cstdint>
#include <vector>

namespace tsasr {

/// Parameters of the synthetic two-speaker corpus.
struct CorpusSpec {
  int n_speakers = 8;
  int clean_per_speaker = 200;         // single-talker pretraining utterances
  int clean_heldout_per_speaker = 25;
  int mixtures_train = 200;
  int mixtures_dev = 200;
  int mixtures_test = 200;
  int min_words = 4;
  int max_words = 10;
  int frames_per_token = 4;
  int n_feat = 8;
  int n_words = 40;
  int d_e = 16;
  double render_noise = 0.1;           // sigma_r
  double voice_sharing = 0.0;          // weight of the speaker-independent word template
  int voice_channels = 0;              // active channels per speaker (0 = all); disjoint across speakers when they fit
  double snr_mean = 0.0;
  double snr_std = 4.1;
  double noise_snr_mean = 5.0;         // "both" variant background noise
  double noise_snr_std = 2.0;
  std::uint64_t seed = 7;

  /// Throws ConfigError naming the offending "corpus.<field>".
  void validate() const;
  KvRecord to_record() const;
  static CorpusSpec from_record(const KvRecord& rec);
  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

/// Smallest grammar covering every token the corpus can emit. Token ids agree
/// with any model grammar of the same word count.
TokenGrammar corpus_grammar(const CorpusSpec& spec);

struct SpeakerVoice {
  int id = 0;
  std::vector<Matrix<double>> templates;  // one F x n_feat template per word
  std::vector<int> channels;              // active feature channels, ascending
  RowVector<double> embedding;            // unit norm, width d_e
  double render_noise = 0.0;
};

/// Voices are deterministic in (spec.seed, speaker id). Throws
/// DegenerateInputError if two embeddings coincide.
std::vector<SpeakerVoice> make_voices(const CorpusSpec& spec);

/// Concatenated word templates plus N(0, sigma_r^2) noise; (len * F) x n_feat.
Matrix<double> render_utterance(const SpeakerVoice& voice, const TokenGrammar& g, const std::vector<int>& tokens,
                                std::uint64_t seed);

/// Mean squared value over all entries.
double mean_power(const Matrix<double>& m);

struct MixResult {
  Matrix<double> mixture;
  double alpha = 0.0;  // interferer gain
};

/// mixture = target + alpha * interferer, the shorter signal zero-padded at the
/// tail, with alpha = sqrt(P_t / (P_i * 10^(snr_db / 10))).
MixResult mix_at_snr(const Matrix<double>& target, const Matrix<double>& interferer, double snr_db);

/// 10 log10(gain^2 P_t / (alpha^2 P_i)) from the stored components.
double realized_snr_db(const Matrix<double>& target, const Matrix<double>& interferer, double alpha,
                       double target_gain = 1.0);

struct MixtureExample {
  std::uint64_t mixture_id = 0;
  std::uint64_t seed = 0;
  int target = 0;
  int interferer = 0;
  RowVector<double> embedding;        // target speaker embedding
  std::vector<int> plain;             // target words
  std::vector<int> formatted;
  std::vector<int> timestamped;       // formatted, with segment timestamps
  double snr_db = 0.0;
  double target_gain = 1.0;           // mixed = target_gain * target + alpha * interferer (+ noise)
  double alpha = 0.0;
  double noise_snr_db = 0.0;          // only meaningful when noise is non-empty
  Matrix<double> target_feats;        // unscaled clean target component
  Matrix<double> interferer_feats;    // unscaled interferer component
  Matrix<double> noise;               // background noise ("both" variant) or empty
  Matrix<double> mixed;
  int frames_per_token = 4;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<CleanUtterance> clean_train;
  std::vector<CleanUtterance> clean_heldout;
  std::vector<MixtureExample> train;
  std::vector<MixtureExample> train_both;  // train mixtures with background noise
  std::vector<MixtureExample> dev;
  std::vector<MixtureExample> test;
};

/// Each mixture of two distinct speakers yields two examples, one per target.
/// Throws ConfigError when n_speakers < 2.
Corpus build_corpus(const CorpusSpec& spec);

/// Clean rendering of a mixture's target component as an utterance record.
CleanUtterance target_utterance(const MixtureExample& ex);

/// SNR draws N(mean, std^2) as used by build_corpus for a given mixture seed.
double sample_snr_db(const CorpusSpec& spec, std::uint64_t mixture_seed);

/// Pretraining augmentation. A reference utterance of the labeled speaker is
/// attached with probability context_prob; another speaker is overlaid with
/// probability overlap_prob. Without a reference the labeled speaker stays
/// dominant; with one, any level balance in the context range is allowed.
struct PretrainAugment {
  double context_prob = 0.5;
  double overlap_prob = 0.7;
  double dominant_snr_min = 1.0;
  double dominant_snr_max = 12.0;
  double context_snr_min = -10.0;
  double context_snr_max = 10.0;

  /// Throws ConfigError naming the offending "augment.<field>".
  void validate() const;
  KvRecord to_record() const;
  static PretrainAugment from_record(const KvRecord& rec);
};

/// Draws overlays and references from `pool`, which must outlive the result.
FeatureAugmenter pretrain_augmenter(const std::vector<CleanUtterance>& pool, const PretrainAugment& cfg);

}  // namespace tsasr
