// Acceptance suite: one PASS/FAIL line per criterion, then a summary. Exits
// nonzero when any criterion fails.

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/gradients.hpp"
#include "tsasr/gradcore/ops.hpp"
#include "tsasr/harness/experiment.hpp"
#include "tsasr/harness/wer.hpp"
#include "tsasr/miniwhisper/transcript.hpp"
#include "tsasr/mixer/corpus_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>

using namespace tsasr;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Shared fixtures: the default toy corpus and the backbone pretrained on it.
struct World {
  Corpus corpus;
  Backbone<float> backbone;
  double pretrain_seconds = 0.0;
  int pretrain_epochs = 0;
  double pretrain_accuracy = 0.0;
};

World& world() {
  static World w = [] {
    World out;
    const auto start = Clock::now();
    out.corpus = build_corpus(CorpusSpec{});
    auto model = ModelConfig::toy();
    model.n_feat = out.corpus.spec.n_feat;
    model.n_words = out.corpus.spec.n_words;
    model.d_e = out.corpus.spec.d_e;
    out.backbone = Backbone<float>::build(model, PretrainSpec{}.seed);
    const auto curve = pretrain_backbone(out.backbone, out.corpus.clean_train, out.corpus.clean_heldout, PretrainSpec{});
    out.pretrain_epochs = static_cast<int>(curve.size());
    out.pretrain_accuracy = curve.back().heldout_accuracy;
    out.pretrain_seconds = seconds_since(start);
    return out;
  }();
  return w;
}

ExperimentConfig prompt_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.method = Method::prompt;
  cfg.prompt.L_e = cfg.prompt.L_d = 4;
  cfg.prompt.deep = true;
  cfg.prompt.reparam = Reparam::separate;
  cfg.train = TrainSpec::toy();
  return cfg;
}

// Default prompt-tuned run, shared by the learning, freeze and timestamp criteria.
struct TunedRun {
  RunMetrics metrics;
  std::uint64_t checksum_before = 0;
  std::uint64_t checksum_after = 0;
  bool checkpoint_bytes_equal = false;
};

TunedRun& tuned_run() {
  static TunedRun r = [] {
    TunedRun out;
    auto& w = world();
    const auto dir = std::filesystem::temp_directory_path() / "tsasr_acceptance";
    std::filesystem::create_directories(dir);
    save_backbone(dir / "before.ckpt", w.backbone);
    out.checksum_before = w.backbone.params.checksum();
    auto cfg = prompt_config("pt_dp_sep_L4");
    cfg.eval_modes = {EvalMode::plain, EvalMode::timestamps};
    out.metrics = run_experiment(w.backbone, w.corpus, cfg);
    out.checksum_after = w.backbone.params.checksum();
    save_backbone(dir / "after.ckpt", w.backbone);
    out.checkpoint_bytes_equal = slurp(dir / "before.ckpt") == slurp(dir / "after.ckpt");
    std::filesystem::remove_all(dir);
    return out;
  }();
  return r;
}

// ---------------------------------------------------------------------------

Verdict parameter_accounting() {
  const auto start = Clock::now();
  PromptConfig p;
  p.L_e = p.L_d = 16;
  const std::uint64_t small = count_task_params(p, ModelConfig::preset("whisper-small"), Phase::infer);
  const std::uint64_t medium = count_task_params(p, ModelConfig::preset("whisper-medium"), Phase::infer);
  const std::uint64_t large = count_task_params(p, ModelConfig::preset("whisper-large"), Phase::infer);
  const double secs = seconds_since(start);
  const bool ok = small == 688128 && medium == 1310720 && large == 1966080 && secs < 1.0;
  return {ok, "small=" + std::to_string(small) + " medium=" + std::to_string(medium) + " large=" +
                  std::to_string(large) + " in " + fmt(secs) + " s"};
}

Var<double> probe(Graph<double>& g, Var<double> out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, g.constant(uniform_matrix<double>(out.rows(), out.cols(), -1.0, 1.0, rng))));
}

Verdict gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  auto record = [&](const std::string& name, const LossFn& f, ParamStore<double>& store) {
    const auto r = grad_check(f, store, 1e-5);
    if (worst_case.empty() || r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_case = name;
    }
  };

  Rng rng(77);
  ParamStore<double> s;
  s.add("a", normal_matrix<double>(3, 4, 1.0, rng), true);
  s.add("b", normal_matrix<double>(4, 2, 1.0, rng), true);
  s.add("same", normal_matrix<double>(3, 4, 1.0, rng), true);
  s.add("row", normal_matrix<double>(1, 4, 1.0, rng), true);
  s.add("gain", normal_matrix<double>(1, 4, 1.0, rng), true);
  s.add("table", normal_matrix<double>(6, 4, 1.0, rng), true);
  const std::vector<int> ids{3, 0, 3, 5};
  const std::vector<std::pair<std::string, std::function<Var<double>(Graph<double>&)>>> unary = {
      {"matmul", [&](Graph<double>& g) { return matmul(g.param(s, "a"), g.param(s, "b")); }},
      {"matmul_nt", [&](Graph<double>& g) { return matmul_nt(g.param(s, "a"), g.param(s, "same")); }},
      {"add", [&](Graph<double>& g) { return add(g.param(s, "a"), g.param(s, "same")); }},
      {"add_row", [&](Graph<double>& g) { return add_row(g.param(s, "a"), g.param(s, "row")); }},
      {"scale", [&](Graph<double>& g) { return scale(g.param(s, "a"), 0.7); }},
      {"mul", [&](Graph<double>& g) { return mul(g.param(s, "a"), g.param(s, "same")); }},
      {"gelu", [&](Graph<double>& g) { return gelu(g.param(s, "a")); }},
      {"layer_norm", [&](Graph<double>& g) { return layer_norm(g.param(s, "a"), g.param(s, "gain"), g.param(s, "row")); }},
      {"embedding", [&](Graph<double>& g) { return embedding(g.param(s, "table"), ids); }},
      {"concat_rows", [&](Graph<double>& g) { return concat_rows({g.param(s, "a"), g.param(s, "row")}); }},
      {"replace_rows", [&](Graph<double>& g) { return replace_rows(g.param(s, "a"), 1, g.param(s, "row")); }},
      {"slice_rows", [&](Graph<double>& g) { return slice_rows(g.param(s, "table"), 2, 3); }},
  };
  for (const auto& [name, body] : unary) {
    const auto& fn = body;
    record(name, [&](Graph<double>& g) { return probe(g, fn(g), 5); }, s);
  }
  for (int stride : {1, 2}) {
    ParamStore<double> cs;
    cs.add("x", normal_matrix<double>(7, 3, 1.0, rng), true);
    cs.add("w", normal_matrix<double>(9, 4, 0.5, rng), true);
    cs.add("b", normal_matrix<double>(1, 4, 0.5, rng), true);
    record("conv1d", [&](Graph<double>& g) {
      return probe(g, conv1d(g.param(cs, "x"), g.param(cs, "w"), g.param(cs, "b"), 3, stride, 1), 6);
    }, cs);
  }
  {
    ParamStore<double> ls;
    ls.add("z", normal_matrix<double>(4, 5, 2.0, rng), true);
    const std::vector<int> targets{-1, 2, 0, 4};
    record("softmax_cross_entropy", [&](Graph<double>& g) { return softmax_cross_entropy(g.param(ls, "z"), targets, 0.3); },
           ls);
  }
  for (bool causal : {false, true}) {
    ParamStore<double> as;
    as.add("q", normal_matrix<double>(4, 4, 1.0, rng), true);
    as.add("k", normal_matrix<double>(causal ? 4 : 6, 4, 1.0, rng), true);
    as.add("v", normal_matrix<double>(causal ? 4 : 6, 4, 1.0, rng), true);
    record("attention", [&](Graph<double>& g) {
      return probe(g, attention(g.param(as, "q"), g.param(as, "k"), g.param(as, "v"), 2, causal), 7);
    }, as);
  }

  ModelConfig m;
  m.d_m = 8;
  m.n_heads = 2;
  m.n_enc = m.n_dec = 1;
  m.d_ff = 16;
  m.n_feat = 3;
  m.n_words = kMinWordsForFormatting;
  m.max_src = 8;
  m.max_tgt = 16;
  m.d_e = 4;
  m.vocab = m.grammar().size();
  auto bb = Backbone<double>::build(m, 1);
  PromptConfig p;
  p.L_e = p.L_d = 2;
  p.deep = true;
  p.reparam = Reparam::separate;
  PromptTunedModel<double> model(bb, init_task_params<double>(p, m, 2));
  for (const auto& name : model.prompts().params.names()) {
    auto& v = model.prompts().params.mutable_value(name);
    v = uniform_matrix<double>(v.rows(), v.cols(), -0.3, 0.3, rng);
  }
  const auto feats = uniform_matrix<double>(6, m.n_feat, -1.0, 1.0, rng);
  const RowVector<double> e = uniform_matrix<double>(1, m.d_e, -1.0, 1.0, rng);
  const auto gr = m.grammar();
  const std::vector<int> transcript{gr.word(1), gr.word(3), gr.word(0)};
  const LossFn full = [&](Graph<double>& g) {
    const auto enc = model.encode(g, feats, e);
    const auto setup = model.decoder(g, gr, TaskMode{false, false});
    return sequence_loss<double>(g, bb, enc, setup.prefix, transcript, setup.prompt, &model).loss;
  };
  record("full model (task entries)", full, model.prompts().params);
  record("full model (backbone entries)", full, bb.params);

  const double secs = seconds_since(start);
  return {worst <= 1e-4 && secs < 120.0,
          "max rel err " + fmt(worst, 3) + " (" + worst_case + "), " + fmt(secs) + " s"};
}

Verdict frozen_invariance() {
  const auto& r = tuned_run();
  const bool ok = r.checksum_before == r.checksum_after && r.checkpoint_bytes_equal;
  return {ok, "checksum " + std::to_string(r.checksum_before) + " -> " + std::to_string(r.checksum_after) +
                  (r.checkpoint_bytes_equal ? ", checkpoint bytes equal" : ", checkpoint bytes differ")};
}

Verdict bake_equivalence() {
  const auto model = ModelConfig::toy();
  const auto bb = world().backbone.cast<double>();
  PromptConfig p;
  PromptTunedModel<double> unbaked(bb, init_task_params<double>(p, model, 3));
  Rng rng(4);
  for (const auto& name : unbaked.prompts().params.names()) {
    auto& v = unbaked.prompts().params.mutable_value(name);
    v = uniform_matrix<double>(v.rows(), v.cols(), -0.3, 0.3, rng);
  }
  PromptTunedModel<double> baked = unbaked;
  reparameterize_and_bake(baked.prompts());
  const auto gr = model.grammar();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int frames = std::uniform_int_distribution<int>(4, model.max_src)(rng);
    const auto feats = uniform_matrix<double>(frames, model.n_feat, -1.0, 1.0, rng);
    const RowVector<double> e = uniform_matrix<double>(1, model.d_e, -1.0, 1.0, rng);
    std::vector<int> tokens;
    for (int k = 0; k < 6; ++k) tokens.push_back(gr.word(std::uniform_int_distribution<int>(0, model.n_words - 1)(rng)));
    const TaskMode mode = kTaskModes[i % 4];
    auto logits = [&](const PromptTunedModel<double>& m) {
      Graph<double> g(false);
      const auto enc = m.encode(g, feats, e);
      auto setup = m.decoder(g, gr, mode);
      auto input = setup.prefix;
      input.insert(input.end(), tokens.begin(), tokens.end());
      return Matrix<double>(decode<double>(g, bb, enc, input, setup.prompt, &m).logits.value());
    };
    worst = std::max(worst, (logits(unbaked) - logits(baked)).cwiseAbs().maxCoeff());
  }
  const auto before = unbaked.prompts().params.size();
  const auto after = baked.prompts().params.size();
  return {worst <= 1e-6 && baked.prompts().baked && after < before,
          "max |logit diff| " + fmt(worst, 3) + " over 100 inputs, task entries " + std::to_string(before) + " -> " +
              std::to_string(after)};
}

Verdict end_to_end() {
  const auto start = Clock::now();
  auto& w = world();
  ExperimentConfig zs;
  zs.name = "zero_shot";
  zs.method = Method::zero_shot;
  const auto zero = run_experiment(w.backbone, w.corpus, zs);
  const auto& tuned = tuned_run().metrics;
  const double zs_wer = zero.find("dev", EvalMode::plain)->eval.wer;
  const double pt_wer = tuned.find("dev", EvalMode::plain)->eval.wer;
  const double secs = seconds_since(start) + w.pretrain_seconds + tuned.wall_seconds;
  const bool ok = zs_wer >= 0.50 && pt_wer <= 0.20 && secs < 1800.0;
  return {ok, "zero-shot dev WER " + fmt(zs_wer) + " (need >= 0.50), PT+DP+sepMLP L=4 dev WER " + fmt(pt_wer) +
                  " (need <= 0.20); pretrain " + std::to_string(w.pretrain_epochs) + " epochs, total " + fmt(secs) +
                  " s"};
}

Verdict ablation_trends() {
  auto& w = world();
  const auto cells = select_cells(default_ablation_grid(TrainSpec::toy()),
                                  {"zero_shot", "PT", "PT+DP", "enc_only_L32", "dec_only_L32"});
  const auto report = run_ablation(w.backbone, w.corpus, cells, {1, 2, 3, 4, 5});
  const int pt_vs_zs = report.count_seeds("PT", "zero_shot", [](double a, double b) { return a < b; });
  const int dp_vs_pt = report.count_seeds("PT+DP", "PT", [](double a, double b) { return a <= b; });
  const int enc_vs_dec = report.count_seeds("enc_only_L32", "dec_only_L32", [](double a, double b) { return a < b; });
  std::cout << report.table();
  const bool ok = pt_vs_zs >= 4 && dp_vs_pt >= 4 && enc_vs_dec >= 4;
  return {ok, "PT < zero-shot on " + std::to_string(pt_vs_zs) + "/5, PT+DP <= PT on " + std::to_string(dp_vs_pt) +
                  "/5, enc-only L32 < dec-only L32 on " + std::to_string(enc_vs_dec) + "/5 (need >= 4 each)"};
}

std::size_t exhaustive_edits(const std::vector<int>& h, std::size_t i, const std::vector<int>& r, std::size_t j) {
  if (i == h.size()) return r.size() - j;
  if (j == r.size()) return h.size() - i;
  return std::min({exhaustive_edits(h, i + 1, r, j + 1) + (h[i] == r[j] ? 0u : 1u),
                   exhaustive_edits(h, i + 1, r, j) + 1, exhaustive_edits(h, i, r, j + 1) + 1});
}

Verdict wer_oracle() {
  Rng rng(99);
  int agree = 0;
  for (int t = 0; t < 1000; ++t) {
    auto draw = [&](int min_len) {
      std::vector<int> s(static_cast<std::size_t>(std::uniform_int_distribution<int>(min_len, 6)(rng)));
      for (auto& x : s) x = std::uniform_int_distribution<int>(0, 2)(rng);
      return s;
    };
    const auto hyp = draw(0);
    const auto ref = draw(1);
    const auto expected = exhaustive_edits(hyp, 0, ref, 0);
    if (edit_distance(hyp, ref) == expected &&
        wer(hyp, ref) == static_cast<double>(expected) / static_cast<double>(ref.size()))
      ++agree;
  }
  return {agree == 1000, std::to_string(agree) + "/1000 pairs agree"};
}

Verdict mixing_accuracy() {
  CorpusSpec spec;
  spec.clean_per_speaker = 1;
  spec.clean_heldout_per_speaker = 1;
  spec.mixtures_train = 10000;
  spec.mixtures_dev = 1;
  spec.mixtures_test = 1;
  const auto corpus = build_corpus(spec);
  double worst = 0.0, sum = 0.0, sq = 0.0;
  int mixtures = 0;
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    const auto& ex = corpus.train[i];
    worst = std::max(worst, std::abs(realized_snr_db(ex.target_feats, ex.interferer_feats, ex.alpha, ex.target_gain) -
                                     ex.snr_db));
    if (i % 2 == 0) {
      sum += ex.snr_db;
      sq += ex.snr_db * ex.snr_db;
      ++mixtures;
    }
  }
  const double mean = sum / mixtures;
  const double stddev = std::sqrt(sq / mixtures - mean * mean);
  const bool ok = worst <= 0.1 && std::abs(mean) <= 0.15 && std::abs(stddev - 4.1) <= 0.15;
  return {ok, std::to_string(mixtures) + " mixtures: max |realized - recorded| " + fmt(worst, 3) + " dB, mean " +
                  fmt(mean) + ", std " + fmt(stddev)};
}

Verdict itn_retention() {
  auto& w = world();
  auto manual = prompt_config("itn_manual");
  manual.eval_modes = {EvalMode::formatted};
  auto automatic = manual;
  automatic.name = "itn_auto";
  automatic.train.supervision = Supervision::auto_labeled;
  const auto labels = auto_label_targets(w.backbone, w.corpus.train, true);
  const auto a = run_experiment(w.backbone, w.corpus, manual);
  const auto b = run_experiment(w.backbone, w.corpus, automatic, &labels);
  const double a_rate = a.find("dev", EvalMode::formatted)->eval.formatted_rate;
  const double b_rate = b.find("dev", EvalMode::formatted)->eval.formatted_rate;
  return {b_rate >= 0.90 && a_rate <= 0.05, "auto-labeled run formatted on " + fmt(b_rate) +
                                                " of dev outputs (need >= 0.90), manual run on " + fmt(a_rate) +
                                                " (need <= 0.05); dev WER " +
                                                fmt(b.find("dev", EvalMode::formatted)->eval.wer) + " / " +
                                                fmt(a.find("dev", EvalMode::formatted)->eval.wer)};
}

Verdict timestamp_retention() {
  auto& w = world();
  const double clean = evaluate_clean(w.backbone, w.corpus.clean_heldout, EvalMode::timestamps).timestamp_validity;
  const double tuned = tuned_run().metrics.find("dev", EvalMode::timestamps)->eval.timestamp_validity;
  return {tuned >= 0.9 * clean, "tuned dev validity " + fmt(tuned) + " vs pretrained clean validity " + fmt(clean) +
                                    " (need >= " + fmt(0.9 * clean) + ")"};
}

Verdict determinism() {
  auto& w = world();
  const auto root = std::filesystem::temp_directory_path() / "tsasr_acceptance_det";
  std::filesystem::remove_all(root);
  const auto cfg = prompt_config("determinism");
  for (const char* run : {"a", "b"}) write_run_metrics(root / run, run_experiment(w.backbone, w.corpus, cfg));
  CorpusSpec spec;
  spec.clean_per_speaker = 5;
  spec.mixtures_train = spec.mixtures_dev = spec.mixtures_test = 20;
  for (const char* run : {"a", "b"}) save_corpus(root / run / "corpus", build_corpus(spec));
  int compared = 0, equal = 0;
  for (const auto& name : {"determinism.json", "determinism.curve.tsv", "corpus/manifest.txt", "corpus/train.bin",
                           "corpus/dev.bin", "corpus/clean_train.bin"}) {
    ++compared;
    const auto x = slurp(root / "a" / name);
    if (!x.empty() && x == slurp(root / "b" / name)) ++equal;
  }
  std::filesystem::remove_all(root);
  return {equal == compared, std::to_string(equal) + "/" + std::to_string(compared) + " artifacts byte-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"parameter accounting", parameter_accounting},
      {"gradient suite", gradient_suite},
      {"frozen-backbone invariance", frozen_invariance},
      {"bake equivalence", bake_equivalence},
      {"end-to-end learning", end_to_end},
      {"ablation trends", ablation_trends},
      {"WER oracle", wer_oracle},
      {"mixing accuracy", mixing_accuracy},
      {"ITN retention", itn_retention},
      {"timestamp retention", timestamp_retention},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %2zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
