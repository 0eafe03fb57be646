#include "doctest.h"

#include "tsasr/errors.hpp"
#include "tsasr/mixer/corpus_io.hpp"
#include "tsasr/mixer/mixer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace tsasr;

namespace {

CorpusSpec small_spec() {
  CorpusSpec s;
  s.clean_per_speaker = 6;
  s.clean_heldout_per_speaker = 2;
  s.mixtures_train = 10;
  s.mixtures_dev = 8;
  s.mixtures_test = 8;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("interferer gain closed forms") {
  const Matrix<double> a = Matrix<double>::Constant(4, 3, 1.0);
  CHECK(mix_at_snr(a, a, 0.0).alpha == doctest::Approx(1.0).epsilon(1e-15));
  const Matrix<double> loud = Matrix<double>::Constant(4, 3, 2.0);
  CHECK(mix_at_snr(loud, a, 0.0).alpha == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(mix_at_snr(a, a, 20.0).alpha == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("max mode pads the shorter signal at the tail") {
  Rng rng(1);
  const auto target = uniform_matrix<double>(6, 2, -1.0, 1.0, rng);
  const auto interferer = uniform_matrix<double>(4, 2, -1.0, 1.0, rng);
  const auto r = mix_at_snr(target, interferer, 3.0);
  REQUIRE(r.mixture.rows() == 6);
  CHECK(r.mixture.bottomRows(2) == target.bottomRows(2));
  CHECK((r.mixture.topRows(4) - (target.topRows(4) + r.alpha * interferer)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(mix_at_snr(interferer, target, 0.0).mixture.rows() == 6);
  CHECK(std::abs(realized_snr_db(target, interferer, r.alpha) - 3.0) < 1e-9);
}

TEST_CASE("zero-power signals are rejected") {
  const Matrix<double> a = Matrix<double>::Constant(4, 3, 1.0);
  const Matrix<double> silent = Matrix<double>::Zero(4, 3);
  CHECK_THROWS_AS(mix_at_snr(a, silent, 0.0), DegenerateInputError);
  CHECK_THROWS_AS(mix_at_snr(silent, a, 0.0), DegenerateInputError);
}

TEST_CASE("rendering is template concatenation plus seeded noise") {
  auto spec = small_spec();
  const auto g = corpus_grammar(spec);
  const std::vector<int> tokens{g.word(3), g.word(0), g.word(9)};
  auto voices = make_voices(spec);
  const auto noisy = render_utterance(voices[2], g, tokens, 5);
  CHECK(noisy.rows() == 12);
  CHECK(noisy.cols() == spec.n_feat);

  spec.render_noise = 0.0;
  const auto clean_voices = make_voices(spec);
  const auto exact = render_utterance(clean_voices[2], g, tokens, 5);
  for (int i = 0; i < 3; ++i) CHECK(exact.middleRows(4 * i, 4) == clean_voices[2].templates[g.word_index(tokens[i])]);
  CHECK(render_utterance(clean_voices[2], g, tokens, 6) == exact);
  CHECK(render_utterance(voices[2], g, tokens, 6) != noisy);
  CHECK_THROWS_AS(render_utterance(voices[2], g, {g.eot()}, 1), ContractError);
}

TEST_CASE("voices are deterministic with distinct unit embeddings") {
  const auto spec = small_spec();
  const auto a = make_voices(spec);
  const auto b = make_voices(spec);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].embedding == b[i].embedding);
    CHECK(a[i].embedding.norm() == doctest::Approx(1.0));
    for (std::size_t j = 0; j < i; ++j) CHECK((a[i].embedding - a[j].embedding).norm() > 0.0);
  }
}

TEST_CASE("voice channels are disjoint when they fit") {
  auto spec = small_spec();
  spec.n_feat = 16;
  spec.voice_channels = 2;
  const auto voices = make_voices(spec);
  std::set<int> used;
  for (const auto& v : voices) {
    CHECK(v.channels.size() == 2);
    for (int c : v.channels) CHECK(used.insert(c).second);
  }
  spec.voice_channels = 17;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("corpus structure") {
  auto spec = small_spec();
  spec.mixtures_train = 100;
  const auto c = build_corpus(spec);
  CHECK(c.train.size() == 200);
  CHECK(c.dev.size() == 16);
  CHECK(c.clean_train.size() == 48);
  CHECK(c.train_both.size() == c.train.size());
  const auto g = corpus_grammar(spec);
  std::set<std::uint64_t> seeds;
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (std::size_t i = 0; i < split->size(); ++i) {
      const auto& ex = (*split)[i];
      CHECK(ex.target != ex.interferer);
      CHECK(ex.mixed.rows() == std::max(ex.target_feats.rows(), ex.interferer_feats.rows()));
      CHECK(std::abs(realized_snr_db(ex.target_feats, ex.interferer_feats, ex.alpha, ex.target_gain) - ex.snr_db) < 0.1);
      std::vector<int> plain;
      for (int id : ex.formatted)
        if (!g.is_punct(id)) plain.push_back(g.to_plain(id));
      CHECK(plain == ex.plain);
      seeds.insert(ex.seed);
    }
    // The two examples of a mixture swap roles.
    for (std::size_t i = 0; i + 1 < split->size(); i += 2) {
      CHECK((*split)[i].mixture_id == (*split)[i + 1].mixture_id);
      CHECK((*split)[i].target == (*split)[i + 1].interferer);
    }
  }
  // One seed per mixture, never reused across splits.
  CHECK(seeds.size() == (c.train.size() + c.dev.size() + c.test.size()) / 2);
  for (const auto& ex : c.train_both) CHECK(ex.noise.rows() == ex.mixed.rows());

  spec.n_speakers = 1;
  CHECK_THROWS_AS(build_corpus(spec), ConfigError);
}

TEST_CASE("sampled SNR statistics over 10000 draws") {
  const CorpusSpec spec;
  double sum = 0.0, sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double s = sample_snr_db(spec, static_cast<std::uint64_t>(i));
    sum += s;
    sq += s * s;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 0.0) <= 0.15);
  CHECK(std::abs(stddev - 4.1) <= 0.15);
}

TEST_CASE("saved corpus is byte-identical across builds and loads back") {
  const auto spec = small_spec();
  const auto a = scratch_dir("tsasr_test_corpus_a");
  const auto b = scratch_dir("tsasr_test_corpus_b");
  save_corpus(a, build_corpus(spec));
  save_corpus(b, build_corpus(spec));
  for (const auto& entry : std::filesystem::directory_iterator(a))
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / entry.path().filename()), entry.path().filename().string());

  const auto loaded = load_corpus(a);
  CHECK(loaded.spec == spec);
  const auto again = scratch_dir("tsasr_test_corpus_c");
  save_corpus(again, loaded);
  for (const auto& entry : std::filesystem::directory_iterator(a))
    CHECK(slurp(entry.path()) == slurp(again / entry.path().filename()));

  std::ofstream(a / "dev.bin", std::ios::binary | std::ios::trunc) << "garbage!";
  CHECK_THROWS_AS(load_corpus(a), FormatError);
  CHECK_THROWS_AS(load_corpus(scratch_dir("tsasr_test_corpus_missing")), ConfigError);
  for (const auto& d : {a, b, again}) std::filesystem::remove_all(d);
}

TEST_CASE("pretraining augmenter keeps the labeled speaker") {
  const auto spec = small_spec();
  const auto c = build_corpus(spec);
  PretrainAugment cfg;
  cfg.context_prob = 1.0;
  cfg.overlap_prob = 0.0;
  const auto with_context = pretrain_augmenter(c.clean_train, cfg);
  Rng rng(3);
  const auto out = with_context(c.clean_train[0], rng);
  CHECK(out.feats == c.clean_train[0].feats);
  CHECK(out.context.rows() > 0);

  cfg.context_prob = 0.0;
  cfg.overlap_prob = 1.0;
  const auto overlay = pretrain_augmenter(c.clean_train, cfg);
  const auto mixed = overlay(c.clean_train[0], rng);
  CHECK(mixed.context.rows() == 0);
  CHECK(mixed.feats.rows() >= c.clean_train[0].feats.rows());
  CHECK(mixed.feats.topRows(c.clean_train[0].feats.rows()) != c.clean_train[0].feats);

  cfg.overlap_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
