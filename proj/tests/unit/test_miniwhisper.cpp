#include "doctest.h"

#include "tsasr/errors.hpp"
#include "tsasr/miniwhisper/backbone.hpp"
#include "tsasr/miniwhisper/pretrain.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <cmath>
#include <filesystem>

using namespace tsasr;

namespace {

Matrix<double> random_feats(Index frames, Index bands, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_matrix<double>(frames, bands, -1.0, 1.0, rng);
}

// Hand-derived parameter total of the architecture.
std::uint64_t closed_form_count(const ModelConfig& c) {
  const std::uint64_t d = c.d_m, ff = c.d_ff, f = c.n_feat, v = c.resolved_vocab(), t = c.max_tgt;
  const std::uint64_t ln = 2 * d;
  const std::uint64_t attn = ln + 4 * (d * d + d);
  const std::uint64_t mlp = ln + (d * ff + ff) + (ff * d + d);
  const std::uint64_t conv = (3 * f * d + d) + (3 * d * d + d);
  return conv + c.n_enc * (attn + mlp) + ln + v * d + t * d + c.n_dec * (2 * attn + mlp) + ln;
}

}  // namespace

TEST_CASE("toy backbone parameter count matches the closed form") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 3);
  CHECK(bb.parameter_count() == closed_form_count(cfg));
  std::uint64_t by_shape = 0;
  for (const auto& [name, shape] : backbone_layout(cfg)) by_shape += static_cast<std::uint64_t>(shape.size());
  CHECK(bb.parameter_count() == by_shape);
}

TEST_CASE("build is deterministic in the seed") {
  const auto cfg = ModelConfig::toy();
  const auto a = Backbone<float>::build(cfg, 11);
  const auto b = Backbone<float>::build(cfg, 11);
  const auto c = Backbone<float>::build(cfg, 12);
  CHECK(a.params.checksum() == b.params.checksum());
  CHECK(a.params.checksum() != c.params.checksum());
  for (const auto& name : a.params.names()) CHECK(a.params.value(name) == b.params.value(name));
}

TEST_CASE("width not divisible by the head count is rejected") {
  auto cfg = ModelConfig::toy();
  cfg.d_m = 30;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(Backbone<float>::build(cfg, 1), ConfigError);
}

TEST_CASE("encoder output length is prefix rows plus ceil(T/2)") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 5);
  for (Index k : {0, 1, 5}) {
    for (Index t = 1; t <= cfg.max_src; t += 5) {
      Graph<double> g(false);
      std::optional<Var<double>> prefix;
      if (k > 0) prefix = g.constant(Matrix<double>::Constant(k, cfg.d_m, 0.1));
      const auto out = encode<double>(g, bb, random_feats(t, cfg.n_feat, static_cast<std::uint64_t>(t)), prefix);
      CHECK(out.rows() == k + (t + 1) / 2);
      CHECK(out.cols() == cfg.d_m);
    }
  }
  Graph<double> g(false);
  CHECK(encode<double>(g, bb, random_feats(16, cfg.n_feat, 1)).rows() == 8);
  CHECK(encode<double>(g, bb, random_feats(16, cfg.n_feat, 1), g.constant(Matrix<double>::Zero(5, cfg.d_m))).rows() == 13);
  CHECK_THROWS_AS(encode<double>(g, bb, random_feats(cfg.max_src + 1, cfg.n_feat, 1)), CapacityError);
}

TEST_CASE("zero features and zero prefix give finite encoder output") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 5);
  Graph<double> g(false);
  const auto out = encode<double>(g, bb, Matrix<double>::Zero(16, cfg.n_feat), g.constant(Matrix<double>::Zero(5, cfg.d_m)));
  CHECK(out.value().allFinite());
}

TEST_CASE("decoder logits are causal") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 8);
  const auto gr = cfg.grammar();
  Graph<double> g(false);
  const auto enc = encode<double>(g, bb, random_feats(20, cfg.n_feat, 2));
  std::vector<int> tokens = make_task_prefix(gr, false);
  for (int w : {3, 7, 1, 9, 12}) tokens.push_back(gr.word(w));
  const auto base = decode<double>(g, bb, enc, tokens).logits.value();
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    auto changed = tokens;
    for (std::size_t u = t + 1; u < changed.size(); ++u) changed[u] = gr.word(static_cast<int>((u * 7) % 40));
    const auto other = decode<double>(g, bb, enc, changed).logits.value();
    const Index rows = static_cast<Index>(t) + 1;
    CHECK((base.topRows(rows) - other.topRows(rows)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("output logits use the tied token embedding") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 9);
  Graph<double> g(false);
  const auto enc = encode<double>(g, bb, random_feats(12, cfg.n_feat, 4));
  const auto out = decode<double>(g, bb, enc, make_task_prefix(cfg.grammar(), true));
  const Matrix<double> expected = out.hidden.value() * bb.params.value("dec.tok_emb").transpose();
  CHECK((out.logits.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("logits rigged toward end-of-text yield an empty transcription") {
  const auto cfg = ModelConfig::toy();
  auto bb = Backbone<double>::build(cfg, 10);
  const auto gr = cfg.grammar();
  bb.params.mutable_value("dec.ln.g").setZero();
  bb.params.mutable_value("dec.ln.b").setZero();
  bb.params.mutable_value("dec.ln.b")(0, 0) = 1.0;
  bb.params.mutable_value("dec.tok_emb").row(gr.eot()).setZero();
  bb.params.mutable_value("dec.tok_emb")(gr.eot(), 0) = 100.0;
  Graph<double> g(false);
  const auto enc = encode<double>(g, bb, random_feats(12, cfg.n_feat, 4));
  const auto r = greedy_decode<double>(g, bb, enc, make_task_prefix(gr, false), std::nullopt, 10);
  CHECK(r.tokens.empty());
  CHECK_FALSE(r.truncated);
}

TEST_CASE("greedy decoding is deterministic and flags truncation") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 12);
  Graph<double> g(false);
  const auto enc = encode<double>(g, bb, random_feats(20, cfg.n_feat, 6));
  const auto prefix = make_task_prefix(cfg.grammar(), false);
  const auto a = greedy_decode<double>(g, bb, enc, prefix, std::nullopt, 3);
  const auto b = greedy_decode<double>(g, bb, enc, prefix, std::nullopt, 3);
  CHECK(a.tokens == b.tokens);
  if (a.tokens.size() == 3) CHECK(a.truncated);
}

TEST_CASE("task prefix layout") {
  const TokenGrammar g(40, 33);
  CHECK(make_task_prefix(g, false) == std::vector<int>{g.sot(), g.lang_en(), g.transcribe(), g.no_timestamps()});
  CHECK(make_task_prefix(g, true) == std::vector<int>{g.sot(), g.lang_en(), g.transcribe()});
  CHECK(make_task_prefix(g, false, std::vector<int>{g.word(3)}) ==
        std::vector<int>{g.prev(), g.word(3), g.sot(), g.lang_en(), g.transcribe(), g.no_timestamps()});
  CHECK_THROWS_AS(make_task_prefix(g, false, std::vector<int>{g.eot()}), ContractError);
  CHECK_THROWS_AS(make_task_prefix(g, false, std::vector<int>{g.timestamp(0)}), ContractError);
}

TEST_CASE("grammar ids are unique and paired") {
  const TokenGrammar g(40, 33);
  for (int i = 0; i < g.n_words(); ++i) {
    CHECK(g.to_plain(g.capital(i)) == g.word(i));
    CHECK(g.to_capital(g.word(i)) == g.capital(i));
  }
  for (int k = 1; k < g.n_timestamps(); ++k) CHECK(g.timestamp(k) == g.timestamp(k - 1) + 1);
  for (int id = 0; id < g.size(); ++id) CHECK(g.parse(g.name(id)) == std::vector<int>{id});
}

TEST_CASE("timestamped transcript times are non-decreasing downsampled offsets") {
  const TokenGrammar g(40, 33);
  std::vector<int> words;
  for (int i = 0; i < 10; ++i) words.push_back(g.word((i * 3) % 40));
  const auto ts = timestamped_transcript(g, words, true, 4);
  CHECK(valid_timestamps(g, ts, 20));
  int last = -1;
  for (int id : ts)
    if (g.is_timestamp(id)) {
      CHECK(g.timestamp_index(id) >= last);
      last = g.timestamp_index(id);
    }
  CHECK(last == 10 * 4 / 2);
}

TEST_CASE("speaker context pools the front end into the requested rows") {
  const auto cfg = ModelConfig::toy();
  const auto bb = Backbone<double>::build(cfg, 2);
  Graph<double> g(false);
  const auto feats = random_feats(24, cfg.n_feat, 9);
  const auto ctx = speaker_context<double>(g, bb, feats, 4);
  CHECK(ctx.rows() == 4);
  CHECK(ctx.cols() == cfg.d_m);
  const auto front = front_end<double>(g, bb, feats);
  CHECK((ctx.value().row(0) - front.value().topRows(3).colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(speaker_context<double>(g, bb, random_feats(4, cfg.n_feat, 1), 4), ShapeError);
}

TEST_CASE("backbone checkpoint round trip keeps config and values") {
  const auto cfg = ModelConfig::toy();
  auto bb = Backbone<float>::build(cfg, 21);
  bb.freeze();
  const auto path = std::filesystem::temp_directory_path() / "tsasr_test_backbone.ckpt";
  save_backbone(path, bb);
  const auto back = load_backbone<float>(path);
  CHECK(back.config == cfg);
  CHECK(back.frozen());
  CHECK(back.params.checksum() == bb.params.checksum());
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".cfg");
  CHECK_THROWS_AS(load_backbone<float>(path), ConfigError);
}
