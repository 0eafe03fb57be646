// Soft prompts, deep prompting, baking, parameter accounting and baselines.

#include "doctest.h"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/adamw.hpp"
#include "tsasr/gradcore/gradients.hpp"
#include "tsasr/gradcore/ops.hpp"
#include "tsasr/miniwhisper/transcript.hpp"
#include "tsasr/tsprompt/prompt.hpp"
#include "tsasr/tsprompt/task_model.hpp"

#include <filesystem>

using namespace tsasr;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_m = 8;
  c.n_heads = 2;
  c.n_enc = 1;
  c.n_dec = 1;
  c.d_ff = 16;
  c.n_feat = 3;
  c.n_words = kMinWordsForFormatting;
  c.max_src = 8;
  c.max_tgt = 16;
  c.d_e = 4;
  c.vocab = c.grammar().size();
  return c;
}

RowVector<double> random_embedding(int width, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_matrix<double>(1, width, -1.0, 1.0, rng);
}

Matrix<double> random_feats(Index frames, Index bands, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_matrix<double>(frames, bands, -1.0, 1.0, rng);
}

// Re-draws every task entry so that reparameterization nets are not the identity.
void scramble(ParamStore<double>& store, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& name : store.names()) {
    auto& v = store.mutable_value(name);
    v = uniform_matrix<double>(v.rows(), v.cols(), -0.3, 0.3, rng);
  }
}

Var<double> model_loss(Graph<double>& g, const TaskModel<double>& model, const Matrix<double>& feats,
                       const RowVector<double>& e, const std::vector<int>& transcript) {
  const auto enc = model.encode(g, feats, e);
  const auto setup = model.decoder(g, model.backbone().config.grammar(), TaskMode{false, false});
  return sequence_loss<double>(g, model.backbone(), enc, setup.prefix, transcript, setup.prompt, &model).loss;
}

Matrix<double> model_logits(const TaskModel<double>& model, const Matrix<double>& feats, const RowVector<double>& e,
                            const std::vector<int>& tokens, TaskMode mode) {
  Graph<double> g(false);
  const auto enc = model.encode(g, feats, e);
  auto setup = model.decoder(g, model.backbone().config.grammar(), mode);
  auto input = setup.prefix;
  input.insert(input.end(), tokens.begin(), tokens.end());
  return decode<double>(g, model.backbone(), enc, input, setup.prompt, &model).logits.value();
}

}  // namespace

TEST_CASE("entry inventory of deep separate prompts on the toy model") {
  PromptConfig p;
  const auto sps = init_task_params<double>(p, ModelConfig::toy(), 1);
  int prompts = 0, nets = 0;
  for (const auto& name : sps.params.names()) {
    if (name.rfind("task.prompt.", 0) == 0) ++prompts;
    if (name.rfind("task.mlp.", 0) == 0 && name.ends_with(".fc1.w")) ++nets;
    CHECK(sps.params.trainable(name));
  }
  CHECK(sps.params.contains(speaker_projection_name()));
  CHECK(prompts == 4);
  CHECK(nets == 4);
  CHECK_FALSE(sps.baked);
}

TEST_CASE("initialization is seeded and starts at the identity reparameterization") {
  PromptConfig p;
  const auto model = ModelConfig::toy();
  const auto a = init_task_params<double>(p, model, 4);
  const auto b = init_task_params<double>(p, model, 4);
  CHECK(a.params.checksum() == b.params.checksum());
  const double bound = 0.5 / std::sqrt(static_cast<double>(model.d_m));
  CHECK(a.params.value(prompt_name(Side::encoder, 0)).cwiseAbs().maxCoeff() <= bound);
  Graph<double> g(false);
  for (Side side : {Side::encoder, Side::decoder})
    for (int block : {0, 1})
      CHECK(effective_prompt(g, a, side, block).value() == a.params.value(prompt_name(side, block)));
}

TEST_CASE("encoder input rows") {
  const auto model = ModelConfig::toy();
  PromptConfig p;
  auto sps = init_task_params<double>(p, model, 2);
  Graph<double> g(false);
  const auto zero = compose_encoder_input(g, sps, RowVector<double>(RowVector<double>::Zero(model.d_e)));
  CHECK(zero.rows() == 1 + p.L_e);
  CHECK(zero.value().row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.value().bottomRows(p.L_e) == effective_prompt(g, sps, Side::encoder, 0).value());

  auto& w = sps.params.mutable_value(speaker_projection_name());
  w.setZero();
  for (int i = 0; i < model.d_e; ++i) w(i, i) = 1.0;
  for (int k = 0; k < model.d_e; ++k) {
    RowVector<double> e = RowVector<double>::Zero(model.d_e);
    e(k) = 1.0;
    CHECK(compose_encoder_input(g, sps, e).value().row(0) == w.col(k).transpose());
  }
  CHECK_THROWS_AS(compose_encoder_input(g, sps, RowVector<double>(RowVector<double>::Zero(model.d_e + 1))), ShapeError);

  PromptConfig none = p;
  none.L_e = 0;
  const auto speaker_only = init_task_params<double>(none, model, 2);
  CHECK(compose_encoder_input(g, speaker_only, RowVector<double>(RowVector<double>::Ones(model.d_e))).rows() == 1);
}

TEST_CASE("decoder prefix reserves prompt slots after prev") {
  const auto model = ModelConfig::toy();
  const auto gr = model.grammar();
  PromptConfig p;
  const auto sps = init_task_params<double>(p, model, 3);
  Graph<double> g(false);
  const auto setup = compose_decoder_prefix(g, sps, gr, false);
  CHECK(setup.prefix == std::vector<int>{gr.prev(), gr.sot(), gr.lang_en(), gr.transcribe(), gr.no_timestamps()});
  REQUIRE(setup.prompt.has_value());
  CHECK(setup.prompt->insert_at == 1);
  CHECK(setup.prompt->rows.rows() == 4);
  CHECK(compose_decoder_prefix(g, sps, gr, true).prefix ==
        std::vector<int>{gr.prev(), gr.sot(), gr.lang_en(), gr.transcribe()});

  PromptConfig enc_only = p;
  enc_only.L_d = 0;
  const auto plain = compose_decoder_prefix(g, init_task_params<double>(enc_only, model, 3), gr, false);
  CHECK(plain.prefix == make_task_prefix(gr, false));
  CHECK_FALSE(plain.prompt.has_value());
  // Generated rows start after 1 + L_d extra decoder positions.
  CHECK(static_cast<Index>(setup.prefix.size()) + setup.prompt->rows.rows() ==
        static_cast<Index>(plain.prefix.size()) + 1 + p.L_d);
}

TEST_CASE("deep prompts replace the prompt window only") {
  const auto model = ModelConfig::toy();
  PromptConfig p;
  p.reparam = Reparam::none;
  auto sps = init_task_params<double>(p, model, 5);
  Graph<double> g;
  const auto input = g.variable(random_feats(12, model.d_m, 1));
  const auto out = apply_deep_prompts(g, sps, input, Side::encoder, 1);
  const auto& prompt = sps.params.value(prompt_name(Side::encoder, 1));
  CHECK(out.value().middleRows(1, p.L_e) == prompt);
  CHECK(out.value().row(0) == input.value().row(0));
  CHECK(out.value().bottomRows(12 - 1 - p.L_e) == input.value().bottomRows(12 - 1 - p.L_e));
  CHECK(apply_deep_prompts(g, sps, input, Side::encoder, 0).value() == input.value());

  Rng rng(2);
  const auto loss = sum(mul(out, g.constant(uniform_matrix<double>(12, model.d_m, -1.0, 1.0, rng))));
  g.backward(loss);
  const auto& gin = g.grad(input.id);
  CHECK(gin.middleRows(1, p.L_e).cwiseAbs().maxCoeff() == 0.0);
  CHECK(gin.row(0).cwiseAbs().maxCoeff() > 0.0);
  const auto* gp = g.param_grad(sps.params, prompt_name(Side::encoder, 1));
  REQUIRE(gp != nullptr);
  CHECK(gp->cwiseAbs().maxCoeff() > 0.0);

  Graph<double> small(false);
  CHECK_THROWS_AS(apply_deep_prompts(small, sps, small.constant(Matrix<double>::Zero(3, model.d_m)), Side::encoder, 1),
                  ShapeError);
}

TEST_CASE("gradient check over the full tiny prompted model") {
  const auto model = tiny_model();
  auto bb = Backbone<double>::build(model, 7);
  PromptConfig p;
  p.L_e = p.L_d = 2;
  p.deep = true;
  p.reparam = Reparam::separate;
  PromptTunedModel<double> pt(bb, init_task_params<double>(p, model, 8));
  scramble(pt.prompts().params, 9);
  const auto feats = random_feats(6, model.n_feat, 3);
  const auto e = random_embedding(model.d_e, 4);
  const auto gr = model.grammar();
  const std::vector<int> transcript{gr.word(1), gr.word(3), gr.word(0)};
  const LossFn f = [&](Graph<double>& g) { return model_loss(g, pt, feats, e, transcript); };

  const auto task = grad_check(f, pt.prompts().params, 1e-5);
  CHECK(task.checked == pt.prompts().params.parameter_count());
  CHECK(task.max_rel_err <= 1e-4);
  const auto backbone = grad_check(f, bb.params, 1e-5);
  CHECK(backbone.checked == bb.params.parameter_count());
  CHECK(backbone.max_rel_err <= 1e-4);
}

TEST_CASE("baked and unbaked logits agree over 100 random inputs") {
  const auto model = ModelConfig::toy();
  const auto bb = Backbone<double>::build(model, 13);
  PromptConfig p;
  PromptTunedModel<double> unbaked(bb, init_task_params<double>(p, model, 14));
  scramble(unbaked.prompts().params, 15);
  PromptTunedModel<double> baked = unbaked;
  CHECK(reparameterize_and_bake(baked.prompts()));
  CHECK(baked.prompts().baked);
  for (const auto& name : baked.prompts().params.names()) CHECK(name.find(".mlp.") == std::string::npos);
  CHECK(baked.task_param_count(Phase::train) == count_task_params(p, model, Phase::infer));

  const auto gr = model.grammar();
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng rng(100 + i);
    const auto frames = std::uniform_int_distribution<int>(4, model.max_src)(rng);
    const auto feats = random_feats(frames, model.n_feat, 200 + i);
    const auto e = random_embedding(model.d_e, 300 + i);
    std::vector<int> tokens;
    for (int k = 0; k < 5; ++k) tokens.push_back(gr.word(std::uniform_int_distribution<int>(0, model.n_words - 1)(rng)));
    const TaskMode mode = kTaskModes[i % 4];
    const auto a = model_logits(unbaked, feats, e, tokens, mode);
    const auto b = model_logits(baked, feats, e, tokens, mode);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("baking zero nets keeps raw prompts; nothing to bake without nets") {
  const auto model = ModelConfig::toy();
  PromptConfig p;
  auto sps = init_task_params<double>(p, model, 16);
  const auto raw = sps.params.value(prompt_name(Side::decoder, 1));
  CHECK(reparameterize_and_bake(sps));
  CHECK(sps.params.value(prompt_name(Side::decoder, 1)) == raw);
  CHECK_FALSE(reparameterize_and_bake(sps));
  PromptConfig none = p;
  none.reparam = Reparam::none;
  auto plain = init_task_params<double>(none, model, 16);
  CHECK_FALSE(reparameterize_and_bake(plain));
}

TEST_CASE("task parameter counts for the real Whisper dimensions") {
  PromptConfig p;
  p.L_e = p.L_d = 16;
  CHECK(count_task_params(p, ModelConfig::preset("whisper-small"), Phase::infer) == 688128);
  CHECK(count_task_params(p, ModelConfig::preset("whisper-medium"), Phase::infer) == 1310720);
  CHECK(count_task_params(p, ModelConfig::preset("whisper-large"), Phase::infer) == 1966080);
  // Closed form: (n_enc + n_dec) L d_m + d_m d_e.
  CHECK(count_task_params(p, ModelConfig::preset("whisper-large"), Phase::infer) == 64u * 16 * 1280 + 1280u * 512);

  AdapterConfig lora;
  lora.rank = 8;
  lora.targets = {"enc.self.q", "enc.self.v", "dec.self.q", "dec.self.v", "cross.q", "cross.v"};
  lora.include_speaker_projection = false;
  const auto small = ModelConfig::preset("whisper-small");
  CHECK(lora.target_weights(small).size() == 72);
  CHECK(count_task_params(lora, small, Phase::infer) == 884736);
  lora.include_speaker_projection = true;
  CHECK(count_task_params(lora, small, Phase::infer) == 884736 + 768u * 512);
}

TEST_CASE("parameter count laws") {
  auto model = ModelConfig::preset("whisper-small");
  PromptConfig p;
  p.L_e = p.L_d = 16;
  std::uint64_t infer = 0;
  std::map<Reparam, std::uint64_t> train;
  for (Reparam r : {Reparam::none, Reparam::shared, Reparam::separate}) {
    p.reparam = r;
    train[r] = count_task_params(p, model, Phase::train);
    const auto i = count_task_params(p, model, Phase::infer);
    if (infer) CHECK(i == infer);
    infer = i;
  }
  CHECK(train[Reparam::separate] > train[Reparam::shared]);
  CHECK(train[Reparam::shared] > train[Reparam::none]);
  CHECK(train[Reparam::none] == infer);

  std::uint64_t last = 0;
  for (int len : {1, 2, 4, 8, 16, 32, 64}) {
    p.L_e = p.L_d = len;
    const auto c = count_task_params(p, model, Phase::infer);
    CHECK(c > last);
    last = c;
  }

  PromptConfig enc_only;
  enc_only.L_e = 32;
  enc_only.L_d = 0;
  PromptConfig dual;
  dual.L_e = dual.L_d = 16;
  CHECK(count_task_params(enc_only, model, Phase::infer) == count_task_params(dual, model, Phase::infer));

  PromptConfig empty;
  empty.L_e = empty.L_d = 0;
  empty.reparam = Reparam::none;
  model.d_e = 0;
  CHECK(count_task_params(empty, model, Phase::infer) == 0);
}

TEST_CASE("LoRA starts at the frozen backbone") {
  const auto model = ModelConfig::toy();
  auto bb = Backbone<double>::build(model, 20);
  bb.freeze();
  AdapterConfig cfg;
  cfg.include_speaker_projection = false;
  const auto lora = apply_lora(bb, cfg, 21);
  const ZeroShotModel<double> zero(bb);
  const auto feats = random_feats(20, model.n_feat, 22);
  const auto e = random_embedding(model.d_e, 23);
  const auto gr = model.grammar();
  const std::vector<int> tokens{gr.word(2), gr.word(5)};
  CHECK((model_logits(lora, feats, e, tokens, {}) - model_logits(zero, feats, e, tokens, {})).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(bb.frozen());
  CHECK(lora.trainable().parameter_count(true) == count_task_params(cfg, model, Phase::train));

  AdapterConfig bad = cfg;
  bad.rank = 0;
  CHECK_THROWS_AS(apply_lora(bb, bad, 1), ConfigError);
  bad = cfg;
  bad.targets = {"enc.self.x"};
  CHECK_THROWS_AS(apply_lora(bb, bad, 1), ConfigError);
}

TEST_CASE("fine-tune mode trains every backbone entry") {
  const auto model = ModelConfig::toy();
  auto bb = Backbone<double>::build(model, 30);
  bb.freeze();
  auto ft = set_finetune_mode(bb, 31);
  CHECK(ft.task_param_count(Phase::train) == bb.parameter_count() + static_cast<std::uint64_t>(model.d_m * model.d_e));
  CHECK(count_finetune_params(model) == ft.task_param_count(Phase::train));

  PromptConfig p;
  PromptTunedModel<double> pt(bb, init_task_params<double>(p, model, 31));
  const auto feats = random_feats(16, model.n_feat, 32);
  const auto e = random_embedding(model.d_e, 33);
  const auto gr = model.grammar();
  const std::vector<int> transcript{gr.word(4), gr.word(1)};
  auto one_step = [&](TaskModel<double>& m) {
    Graph<double> g;
    const auto loss = model_loss(g, m, feats, e, transcript);
    AdamW<double> opt(AdamWOptions{1e-2});
    opt.step(m.trainable(), grad_all(loss, m.trainable()));
  };
  const auto frozen_sum = bb.params.checksum();
  one_step(pt);
  CHECK(bb.params.checksum() == frozen_sum);
  const auto before = ft.backbone().params.value("enc.0.attn.q.w");
  one_step(ft);
  CHECK(ft.backbone().params.value("enc.0.attn.q.w") != before);
  const std::vector<int> probe{gr.word(0)};
  CHECK((model_logits(pt, feats, e, probe, {}) - model_logits(ft, feats, e, probe, {})).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("task checkpoint holds task entries only") {
  const auto model = ModelConfig::toy();
  PromptConfig p;
  auto sps = init_task_params<float>(p, model, 40);
  reparameterize_and_bake(sps);
  const auto path = std::filesystem::temp_directory_path() / "tsasr_test_task.ckpt";
  save_task_params(path, sps);
  const auto back = load_task_params<float>(path);
  CHECK(back.baked);
  CHECK(back.config == p);
  CHECK(back.params.checksum() == sps.params.checksum());
  for (const auto& name : back.params.names()) {
    CHECK(name.rfind("task.", 0) == 0);
    CHECK(name.find(".mlp.") == std::string::npos);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".cfg");
}
