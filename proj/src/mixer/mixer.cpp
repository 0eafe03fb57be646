#include "tsasr/mixer/mixer.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>

namespace tsasr {

namespace {

enum SeedTag : std::uint64_t {
  kVoiceTag = 1,
  kEmbeddingTag = 2,
  kCleanTrainTag = 10,
  kCleanHeldoutTag = 11,
  kTrainTag = 20,
  kDevTag = 21,
  kTestTag = 22,
};

std::vector<int> sample_words(const CorpusSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> length(spec.min_words, spec.max_words);
  std::uniform_int_distribution<int> word(0, spec.n_words - 1);
  std::vector<int> words(static_cast<std::size_t>(length(rng)));
  for (int& w : words) w = word(rng);
  return words;
}

CleanUtterance clean_utterance(const CorpusSpec& spec, const TokenGrammar& g, const SpeakerVoice& voice,
                               std::uint64_t seed) {
  Rng rng(seed);
  CleanUtterance u;
  u.speaker = voice.id;
  u.words = sample_words(spec, rng);
  u.feats = render_utterance(voice, g, u.words, derive_seed(seed, 1));
  u.frames_per_token = spec.frames_per_token;
  u.seed = seed;
  return u;
}

Matrix<double> padded(const Matrix<double>& m, Index rows) {
  Matrix<double> out = Matrix<double>::Zero(rows, m.cols());
  out.topRows(m.rows()) = m;
  return out;
}

void mix_pair(const CorpusSpec& spec, const TokenGrammar& g, const std::vector<SpeakerVoice>& voices,
              std::uint64_t mixture_id, std::uint64_t seed, bool with_noise, std::vector<MixtureExample>& out) {
  Rng rng(seed);
  const int a = std::uniform_int_distribution<int>(0, spec.n_speakers - 1)(rng);
  int b = std::uniform_int_distribution<int>(0, spec.n_speakers - 2)(rng);
  if (b >= a) ++b;
  const auto words_a = sample_words(spec, rng);
  const auto words_b = sample_words(spec, rng);
  const auto feats_a = render_utterance(voices[static_cast<std::size_t>(a)], g, words_a, derive_seed(seed, 1));
  const auto feats_b = render_utterance(voices[static_cast<std::size_t>(b)], g, words_b, derive_seed(seed, 2));
  const double snr = sample_snr_db(spec, seed);
  auto mix = mix_at_snr(feats_a, feats_b, snr);

  Matrix<double> noise;
  double noise_snr = 0.0;
  if (with_noise) {
    Rng noise_rng(derive_seed(seed, 3));
    noise_snr = std::normal_distribution<double>(spec.noise_snr_mean, spec.noise_snr_std)(noise_rng);
    noise = normal_matrix<double>(mix.mixture.rows(), mix.mixture.cols(), 1.0, noise_rng);
    noise *= std::sqrt(mean_power(mix.mixture) / (mean_power(noise) * std::pow(10.0, noise_snr / 10.0)));
    mix.mixture += noise;
  }

  auto example = [&](int target, int interferer, const std::vector<int>& words, const Matrix<double>& tf,
                     const Matrix<double>& inf, double snr_db, double target_gain, double alpha) {
    MixtureExample ex;
    ex.mixture_id = mixture_id;
    ex.seed = seed;
    ex.target = target;
    ex.interferer = interferer;
    ex.embedding = voices[static_cast<std::size_t>(target)].embedding;
    ex.plain = plain_transcript(g, words);
    ex.formatted = formatted_transcript(g, words);
    ex.timestamped = timestamped_transcript(g, words, true, spec.frames_per_token);
    ex.snr_db = snr_db;
    ex.target_gain = target_gain;
    ex.alpha = alpha;
    ex.noise_snr_db = noise_snr;
    ex.target_feats = tf;
    ex.interferer_feats = inf;
    ex.noise = noise;
    ex.mixed = mix.mixture;
    ex.frames_per_token = spec.frames_per_token;
    out.push_back(std::move(ex));
  };
  example(a, b, words_a, feats_a, feats_b, snr, 1.0, mix.alpha);
  example(b, a, words_b, feats_b, feats_a, -snr, mix.alpha, 1.0);
}

}  // namespace

TokenGrammar corpus_grammar(const CorpusSpec& spec) {
  return TokenGrammar(spec.n_words, (spec.max_words * spec.frames_per_token + 1) / 2 + 1);
}

void CorpusSpec::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("corpus.") + key + ": " + what);
  };
  require(n_speakers >= 2, "n_speakers", "at least two speakers are needed for mixtures");
  require(clean_per_speaker > 0, "clean_per_speaker", "must be positive");
  require(clean_heldout_per_speaker > 0, "clean_heldout_per_speaker", "must be positive");
  require(mixtures_train >= 0 && mixtures_dev >= 0 && mixtures_test >= 0, "mixtures_train", "must be non-negative");
  require(min_words >= 1 && min_words <= max_words, "min_words", "must satisfy 1 <= min_words <= max_words");
  require(frames_per_token >= 1, "frames_per_token", "must be positive");
  require(n_feat >= 1, "n_feat", "must be positive");
  require(n_words >= kMinWordsForFormatting, "n_words", "formatting rules need at least " + std::to_string(kMinWordsForFormatting));
  require(d_e >= 1, "d_e", "must be positive");
  require(render_noise >= 0.0, "render_noise", "must be non-negative");
  require(voice_sharing >= 0.0 && voice_sharing <= 1.0, "voice_sharing", "must lie in [0, 1]");
  require(voice_channels >= 0 && voice_channels <= n_feat, "voice_channels", "must lie in [0, n_feat]");
  require(snr_std >= 0.0, "snr_std", "must be non-negative");
  require(noise_snr_std >= 0.0, "noise_snr_std", "must be non-negative");
}

KvRecord CorpusSpec::to_record() const {
  KvRecord r;
  r.set("n_speakers", n_speakers);
  r.set("clean_per_speaker", clean_per_speaker);
  r.set("clean_heldout_per_speaker", clean_heldout_per_speaker);
  r.set("mixtures_train", mixtures_train);
  r.set("mixtures_dev", mixtures_dev);
  r.set("mixtures_test", mixtures_test);
  r.set("min_words", min_words);
  r.set("max_words", max_words);
  r.set("frames_per_token", frames_per_token);
  r.set("n_feat", n_feat);
  r.set("n_words", n_words);
  r.set("d_e", d_e);
  r.set("render_noise", render_noise);
  r.set("voice_sharing", voice_sharing);
  r.set("voice_channels", voice_channels);
  r.set("snr_mean", snr_mean);
  r.set("snr_std", snr_std);
  r.set("noise_snr_mean", noise_snr_mean);
  r.set("noise_snr_std", noise_snr_std);
  r.set("seed", seed);
  return r;
}

CorpusSpec CorpusSpec::from_record(const KvRecord& r) {
  CorpusSpec s;
  auto integer = [&](const char* key, int& out) {
    if (r.has(key)) out = static_cast<int>(r.get_int(key));
  };
  auto real = [&](const char* key, double& out) {
    if (r.has(key)) out = r.get_double(key);
  };
  integer("n_speakers", s.n_speakers);
  integer("clean_per_speaker", s.clean_per_speaker);
  integer("clean_heldout_per_speaker", s.clean_heldout_per_speaker);
  integer("mixtures_train", s.mixtures_train);
  integer("mixtures_dev", s.mixtures_dev);
  integer("mixtures_test", s.mixtures_test);
  integer("min_words", s.min_words);
  integer("max_words", s.max_words);
  integer("frames_per_token", s.frames_per_token);
  integer("n_feat", s.n_feat);
  integer("n_words", s.n_words);
  integer("d_e", s.d_e);
  real("render_noise", s.render_noise);
  real("voice_sharing", s.voice_sharing);
  integer("voice_channels", s.voice_channels);
  real("snr_mean", s.snr_mean);
  real("snr_std", s.snr_std);
  real("noise_snr_mean", s.noise_snr_mean);
  real("noise_snr_std", s.noise_snr_std);
  if (r.has("seed")) s.seed = r.get_uint("seed");
  return s;
}

std::vector<SpeakerVoice> make_voices(const CorpusSpec& spec) {
  spec.validate();
  Rng shared_rng(derive_seed(spec.seed, kVoiceTag, 0xffff));
  std::vector<Matrix<double>> shared;
  for (int w = 0; w < spec.n_words; ++w)
    shared.push_back(normal_matrix<double>(spec.frames_per_token, spec.n_feat, 1.0, shared_rng));
  // Disjoint speaker bands whenever they fit.
  std::vector<int> band_order(static_cast<std::size_t>(spec.n_feat));
  std::iota(band_order.begin(), band_order.end(), 0);
  std::shuffle(band_order.begin(), band_order.end(), shared_rng);
  const double ws = std::sqrt(spec.voice_sharing);
  const double wo = std::sqrt(1.0 - spec.voice_sharing);

  std::vector<SpeakerVoice> voices;
  for (int s = 0; s < spec.n_speakers; ++s) {
    SpeakerVoice v;
    v.id = s;
    v.render_noise = spec.render_noise;
    Rng rng(derive_seed(spec.seed, kVoiceTag, static_cast<std::uint64_t>(s)));
    const int active = spec.voice_channels == 0 ? spec.n_feat : spec.voice_channels;
    if (active * spec.n_speakers <= spec.n_feat) {
      v.channels.assign(band_order.begin() + s * active, band_order.begin() + (s + 1) * active);
    } else {
      std::vector<int> all(static_cast<std::size_t>(spec.n_feat));
      std::iota(all.begin(), all.end(), 0);
      if (active < spec.n_feat) std::shuffle(all.begin(), all.end(), rng);
      v.channels.assign(all.begin(), all.begin() + active);
    }
    std::sort(v.channels.begin(), v.channels.end());
    RowVector<double> mask = RowVector<double>::Zero(spec.n_feat);
    for (int ch : v.channels) mask(ch) = std::sqrt(static_cast<double>(spec.n_feat) / active);
    for (int w = 0; w < spec.n_words; ++w) {
      Matrix<double> t = ws * shared[static_cast<std::size_t>(w)] +
                         wo * normal_matrix<double>(spec.frames_per_token, spec.n_feat, 1.0, rng);
      v.templates.push_back(t.array().rowwise() * mask.array());
    }
    Rng erng(derive_seed(spec.seed, kEmbeddingTag, static_cast<std::uint64_t>(s)));
    v.embedding = normal_matrix<double>(1, spec.d_e, 1.0, erng);
    v.embedding /= v.embedding.norm();
    voices.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < voices.size(); ++i)
    for (std::size_t j = i + 1; j < voices.size(); ++j)
      if ((voices[i].embedding - voices[j].embedding).norm() <= 0.0)
        throw DegenerateInputError("voices: speakers " + std::to_string(i) + " and " + std::to_string(j) +
                                   " share an embedding");
  return voices;
}

Matrix<double> render_utterance(const SpeakerVoice& voice, const TokenGrammar& g, const std::vector<int>& tokens,
                                std::uint64_t seed) {
  if (voice.templates.empty()) throw ContractError("render: voice has no templates");
  const Index f = voice.templates.front().rows();
  const Index n_feat = voice.templates.front().cols();
  Matrix<double> out(static_cast<Index>(tokens.size()) * f, n_feat);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (!g.is_word(t) || t >= static_cast<int>(voice.templates.size()))
      throw ContractError("render: token " + std::to_string(t) + " is not a word token");
    out.middleRows(static_cast<Index>(i) * f, f) = voice.templates[static_cast<std::size_t>(t)];
  }
  if (voice.render_noise > 0.0) {
    Rng rng(seed);
    out += normal_matrix<double>(out.rows(), out.cols(), voice.render_noise, rng);
  }
  return out;
}

double mean_power(const Matrix<double>& m) { return m.size() ? m.squaredNorm() / static_cast<double>(m.size()) : 0.0; }

MixResult mix_at_snr(const Matrix<double>& target, const Matrix<double>& interferer, double snr_db) {
  if (target.rows() == 0 || interferer.rows() == 0) throw ContractError("mix: empty source signal");
  if (target.cols() != interferer.cols()) throw ShapeError("mix: feature widths differ");
  const double pt = mean_power(target);
  const double pi = mean_power(interferer);
  if (pt <= 0.0) throw DegenerateInputError("mix: target has zero power");
  if (pi <= 0.0) throw DegenerateInputError("mix: interferer has zero power");
  const Index rows = std::max(target.rows(), interferer.rows());
  MixResult r;
  r.alpha = std::sqrt(pt / (pi * std::pow(10.0, snr_db / 10.0)));
  r.mixture = padded(target, rows) + r.alpha * padded(interferer, rows);
  return r;
}

double realized_snr_db(const Matrix<double>& target, const Matrix<double>& interferer, double alpha,
                       double target_gain) {
  return 10.0 * std::log10(target_gain * target_gain * mean_power(target) / (alpha * alpha * mean_power(interferer)));
}

double sample_snr_db(const CorpusSpec& spec, std::uint64_t mixture_seed) {
  Rng rng(derive_seed(mixture_seed, 4));
  return std::normal_distribution<double>(spec.snr_mean, spec.snr_std)(rng);
}

Corpus build_corpus(const CorpusSpec& spec) {
  spec.validate();
  const TokenGrammar g = corpus_grammar(spec);
  const auto voices = make_voices(spec);
  Corpus c;
  c.spec = spec;
  for (int s = 0; s < spec.n_speakers; ++s) {
    const auto& v = voices[static_cast<std::size_t>(s)];
    for (int i = 0; i < spec.clean_per_speaker; ++i)
      c.clean_train.push_back(
          clean_utterance(spec, g, v, derive_seed(spec.seed, kCleanTrainTag, static_cast<std::uint64_t>(s) << 32 | i)));
    for (int i = 0; i < spec.clean_heldout_per_speaker; ++i)
      c.clean_heldout.push_back(
          clean_utterance(spec, g, v, derive_seed(spec.seed, kCleanHeldoutTag, static_cast<std::uint64_t>(s) << 32 | i)));
  }
  auto split = [&](std::uint64_t tag, int count, bool noise, std::vector<MixtureExample>& out) {
    for (int m = 0; m < count; ++m) {
      const auto id = static_cast<std::uint64_t>(m);
      mix_pair(spec, g, voices, id, derive_seed(spec.seed, tag, id), noise, out);
    }
  };
  split(kTrainTag, spec.mixtures_train, false, c.train);
  split(kTrainTag, spec.mixtures_train, true, c.train_both);
  split(kDevTag, spec.mixtures_dev, false, c.dev);
  split(kTestTag, spec.mixtures_test, false, c.test);
  return c;
}

CleanUtterance target_utterance(const MixtureExample& ex) {
  CleanUtterance u;
  u.speaker = ex.target;
  u.words = ex.plain;
  u.feats = ex.target_feats;
  u.frames_per_token = ex.frames_per_token;
  u.seed = ex.seed;
  return u;
}

void PretrainAugment::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("augment.") + key + ": " + what);
  };
  require(context_prob >= 0.0 && context_prob <= 1.0, "context_prob", "must lie in [0, 1]");
  require(overlap_prob >= 0.0 && overlap_prob <= 1.0, "overlap_prob", "must lie in [0, 1]");
  require(dominant_snr_min <= dominant_snr_max, "dominant_snr_min", "must not exceed dominant_snr_max");
  require(context_snr_min <= context_snr_max, "context_snr_min", "must not exceed context_snr_max");
}

KvRecord PretrainAugment::to_record() const {
  KvRecord r;
  r.set("context_prob", context_prob);
  r.set("overlap_prob", overlap_prob);
  r.set("dominant_snr_min", dominant_snr_min);
  r.set("dominant_snr_max", dominant_snr_max);
  r.set("context_snr_min", context_snr_min);
  r.set("context_snr_max", context_snr_max);
  return r;
}

PretrainAugment PretrainAugment::from_record(const KvRecord& r) {
  PretrainAugment a;
  a.context_prob = r.get_double("context_prob", a.context_prob);
  a.overlap_prob = r.get_double("overlap_prob", a.overlap_prob);
  a.dominant_snr_min = r.get_double("dominant_snr_min", a.dominant_snr_min);
  a.dominant_snr_max = r.get_double("dominant_snr_max", a.dominant_snr_max);
  a.context_snr_min = r.get_double("context_snr_min", a.context_snr_min);
  a.context_snr_max = r.get_double("context_snr_max", a.context_snr_max);
  return a;
}

FeatureAugmenter pretrain_augmenter(const std::vector<CleanUtterance>& pool, const PretrainAugment& cfg) {
  cfg.validate();
  if (pool.empty()) throw ConfigError("augment: empty utterance pool");
  auto by_speaker = std::make_shared<std::map<int, std::vector<std::size_t>>>();
  for (std::size_t i = 0; i < pool.size(); ++i) (*by_speaker)[pool[i].speaker].push_back(i);
  return [&pool, cfg, by_speaker](const CleanUtterance& u, Rng& rng) -> AugmentedInput {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AugmentedInput in{u.feats, {}};
    const auto own = by_speaker->find(u.speaker);
    if (unit(rng) < cfg.context_prob && own != by_speaker->end() && own->second.size() > 1) {
      const auto& ids = own->second;
      std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
      const CleanUtterance* ref = &pool[ids[pick(rng)]];
      while (ref->seed == u.seed) ref = &pool[ids[pick(rng)]];
      in.context = ref->feats;
    }
    if (unit(rng) >= cfg.overlap_prob || by_speaker->size() < 2) return in;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const CleanUtterance* other = &pool[pick(rng)];
    while (other->speaker == u.speaker) other = &pool[pick(rng)];
    const bool with_context = in.context.rows() > 0;
    const double snr = std::uniform_real_distribution<double>(with_context ? cfg.context_snr_min : cfg.dominant_snr_min,
                                                              with_context ? cfg.context_snr_max : cfg.dominant_snr_max)(rng);
    in.feats = mix_at_snr(u.feats, other->feats, snr).mixture;
    return in;
  };
}

}  // namespace tsasr
