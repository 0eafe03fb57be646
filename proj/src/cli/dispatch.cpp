#include "tsasr/cli/dispatch.hpp"

#include "tsasr/cli/run_config.hpp"
#include "tsasr/errors.hpp"
#include "tsasr/harness/experiment.hpp"
#include "tsasr/mixer/corpus_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace tsasr {

namespace {

using Json = nlohmann::ordered_json;

struct Invocation {
  std::string config_file;
  std::vector<std::string> sets;
  KvRecord flags;  // flag-derived keys, highest precedence
};

KvRecord parse_assignments(const std::vector<std::string>& sets) {
  KvRecord r;
  for (const auto& item : sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + item + ": expected key=value");
    r.set(item.substr(0, eq), item.substr(eq + 1));
  }
  return r;
}

KvRecord layered_record(const Invocation& inv) {
  KvRecord user;
  if (!inv.config_file.empty()) {
    if (!std::filesystem::exists(inv.config_file)) throw ConfigError("--config: missing file " + inv.config_file);
    user.merge(KvRecord::load(inv.config_file));
  }
  user.merge(parse_assignments(inv.sets));
  if (const char* dir = std::getenv("TSASR_METRICS_DIR"); dir && *dir) user.set("paths.metrics", std::string(dir));
  user.merge(inv.flags);
  return user;
}

// Adds an option whose value is stored under `key` in the flag layer.
void key_option(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(flag, [&inv, key](const std::string& v) { inv.flags.set(key, v); }, help + " [" + key + "]");
}

void key_switch(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key, const std::string& value,
                const std::string& help) {
  app->add_flag_callback(flag, [&inv, key, value] { inv.flags.set(key, value); }, help + " [" + key + "]");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("paths.metrics: cannot write " + path.string());
  os << text;
}

Json config_json(const KvRecord& r) {
  Json j = Json::object();
  for (const auto& [k, v] : r.entries()) j[k] = v;
  return j;
}

Json eval_json(const EvalResult& e) {
  Json j;
  j["mode"] = std::string(to_string(e.mode));
  j["examples"] = e.examples;
  j["wer"] = e.wer;
  j["timestamp_validity"] = e.timestamp_validity;
  j["formatted_rate"] = e.formatted_rate;
  j["truncated"] = e.truncated;
  return j;
}

Corpus load_required_corpus(const RunConfig& rc) {
  if (!std::filesystem::exists(rc.corpus_dir / "manifest.txt"))
    throw ConfigError("paths.corpus: missing corpus " + (rc.corpus_dir / "manifest.txt").string());
  return load_corpus(rc.corpus_dir);
}

Backbone<float> load_required_backbone(const RunConfig& rc) {
  if (!std::filesystem::exists(rc.backbone_path))
    throw ConfigError("paths.backbone: missing pretrained checkpoint " + rc.backbone_path.string());
  auto bb = load_backbone<float>(rc.backbone_path);
  if (!bb.frozen()) throw ConfigError("paths.backbone: " + rc.backbone_path.string() + " is not a frozen backbone");
  return bb;
}

std::vector<AutoLabel> labels_for(const Backbone<float>& bb, const Corpus& corpus, const ExperimentConfig& cfg) {
  if (cfg.train.supervision != Supervision::auto_labeled) return {};
  return auto_label_targets(bb, corpus.train, true);
}

int run_gen_data(const RunConfig& rc, std::ostream& out) {
  const Corpus corpus = build_corpus(rc.corpus);
  save_corpus(rc.corpus_dir, corpus);
  Json j;
  j["command"] = "gen-data";
  j["config"] = config_json(rc.to_record());
  j["splits"] = {{"clean_train", corpus.clean_train.size()}, {"clean_heldout", corpus.clean_heldout.size()},
                 {"train", corpus.train.size()},             {"train_both", corpus.train_both.size()},
                 {"dev", corpus.dev.size()},                 {"test", corpus.test.size()}};
  write_text(rc.metrics_dir / "gen-data.json", j.dump(2) + "\n");
  out << "corpus written to " << rc.corpus_dir.string() << " (" << corpus.train.size() << " train, "
      << corpus.dev.size() << " dev, " << corpus.test.size() << " test examples)\n";
  return kExitOk;
}

std::string pretrain_curve_tsv(const std::vector<PretrainEpoch>& curve) {
  std::ostringstream os;
  os << "epoch\ttrain_loss\theldout_accuracy\n";
  for (const auto& e : curve)
    os << e.epoch << '\t' << format_double(e.train_loss) << '\t' << format_double(e.heldout_accuracy) << '\n';
  return os.str();
}

int run_pretrain(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Corpus corpus = load_required_corpus(rc);
  if (rc.model.n_feat != corpus.spec.n_feat || rc.model.n_words != corpus.spec.n_words || rc.model.d_e != corpus.spec.d_e)
    throw ConfigError("model.n_feat: model config does not match the corpus at " + rc.corpus_dir.string());
  auto bb = Backbone<float>::build(rc.model, rc.pretrain.seed);
  FeatureAugmenter augment;
  if (rc.augment_enabled) augment = pretrain_augmenter(corpus.clean_train, rc.augment);

  std::vector<PretrainEpoch> curve;
  try {
    curve = pretrain_backbone(bb, corpus.clean_train, corpus.clean_heldout, rc.pretrain, augment);
  } catch (const NonConvergenceError& e) {
    write_text(rc.metrics_dir / "pretrain.curve.tsv", pretrain_curve_tsv(e.curve()));
    err << "tsasr: pretrain.target_accuracy: " << e.what() << "\n";
    return kExitNonConvergence;
  }
  save_backbone(rc.backbone_path, bb);

  Json j;
  j["command"] = "pretrain";
  j["config"] = config_json(rc.to_record());
  j["epochs"] = curve.size();
  j["final_heldout_accuracy"] = curve.back().heldout_accuracy;
  j["backbone_checksum"] = bb.params.checksum();
  Json clean = Json::array();
  for (EvalMode mode : {EvalMode::plain, EvalMode::formatted, EvalMode::timestamps})
    clean.push_back(eval_json(evaluate_clean(bb, corpus.clean_heldout, mode)));
  j["clean_heldout"] = clean;
  write_text(rc.metrics_dir / "pretrain.json", j.dump(2) + "\n");
  write_text(rc.metrics_dir / "pretrain.curve.tsv", pretrain_curve_tsv(curve));
  out << "pretrained in " << curve.size() << " epochs, held-out accuracy "
      << format_double(curve.back().heldout_accuracy) << ", saved " << rc.backbone_path.string() << "\n";
  return kExitOk;
}

void print_summary(std::ostream& out, const RunMetrics& m) {
  for (const auto& s : m.results)
    out << m.name << '\t' << s.split << '\t' << to_string(s.eval.mode) << "\twer=" << format_double(s.eval.wer)
        << "\ttimestamp_validity=" << format_double(s.eval.timestamp_validity)
        << "\tformatted_rate=" << format_double(s.eval.formatted_rate) << '\n';
}

int checksum_gate(const Backbone<float>& bb, std::uint64_t before, std::ostream& err) {
  if (bb.params.checksum() == before) return kExitOk;
  err << "tsasr: paths.backbone: backbone parameters changed during the run\n";
  return kExitGate;
}

int run_tune(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto bb = load_required_backbone(rc);
  const Corpus corpus = load_required_corpus(rc);
  const auto before = bb.params.checksum();
  const auto labels = labels_for(bb, corpus, rc.experiment);
  RunMetrics m = run_experiment(bb, corpus, rc.experiment, labels.empty() ? nullptr : &labels,
                                [&](const TaskModel<float>& model) { save_task_model(rc.task_path, model, rc.experiment); });
  m.config = rc.to_record();
  write_run_metrics(rc.metrics_dir, m);
  print_summary(out, m);
  return checksum_gate(bb, before, err);
}

int run_eval(const RunConfig& rc, bool zero_shot, std::ostream& out, std::ostream& err) {
  const auto bb = load_required_backbone(rc);
  const Corpus corpus = load_required_corpus(rc);
  const auto before = bb.params.checksum();
  ExperimentConfig cfg = rc.experiment;
  std::unique_ptr<TaskModel<float>> model;
  if (zero_shot) {
    cfg.method = Method::zero_shot;
    model = make_task_model(bb, cfg);
  } else {
    auto loaded = load_task_model(bb, rc.task_path);
    cfg.method = loaded.config.method;
    cfg.prompt = loaded.config.prompt;
    cfg.adapter = loaded.config.adapter;
    cfg.train = loaded.config.train;
    model = std::move(loaded.model);
  }
  cfg.name += ".eval";
  RunMetrics m = start_metrics(bb, corpus, cfg);
  m.task_params_train = model->task_param_count(Phase::train);
  evaluate_task_model(*model, corpus, cfg, m);
  m.config = rc.to_record();
  m.config.merge(cfg.to_record(), "experiment.");
  write_run_metrics(rc.metrics_dir, m);
  print_summary(out, m);
  return checksum_gate(bb, before, err);
}

int run_ablate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto bb = load_required_backbone(rc);
  const Corpus corpus = load_required_corpus(rc);
  const auto before = bb.params.checksum();
  auto cells = default_ablation_grid(rc.experiment.train, rc.ablate_baselines);
  if (!rc.ablate_cells.empty()) cells = select_cells(cells, rc.ablate_cells);
  for (auto& cell : cells) {
    cell.config.eval_modes = rc.experiment.eval_modes;
    cell.config.evaluate_test = rc.experiment.evaluate_test;
  }
  const auto labels = labels_for(bb, corpus, rc.experiment);
  const auto dir = rc.metrics_dir / "ablation";
  int failures = 0;
  const auto report = run_ablation(bb, corpus, cells, rc.ablate_seeds, labels.empty() ? nullptr : &labels,
                                   [&](const CellRun& run) {
                                     if (run.metrics) {
                                       RunMetrics m = *run.metrics;
                                       m.config.merge(rc.to_record().section("ablate."), "ablate.");
                                       write_run_metrics(dir, m);
                                       out << run.cell << "\tseed " << run.seed << "\tdev wer "
                                           << format_double(m.results.front().eval.wer) << '\n';
                                     } else {
                                       ++failures;
                                       err << "tsasr: ablate.cells: " << run.cell << " seed " << run.seed
                                           << " failed: " << run.error << '\n';
                                     }
                                   });
  KvRecord echo = rc.to_record();
  std::string header;
  for (const auto& [k, v] : echo.entries()) header += "# " + k + " = " + v + "\n";
  write_text(rc.metrics_dir / "ablation.tsv", header + report.table());
  out << report.table();
  const int gate = checksum_gate(bb, before, err);
  if (gate != kExitOk) return gate;
  return failures ? kExitFailure : kExitOk;
}

struct CountArgs {
  std::string preset;
  std::optional<int> prompt_len, enc_len, dec_len, rank;
  std::string phase = "infer";
  std::string method = "prompt";
  bool no_deep = false;
  std::string reparam;
};

int run_count_params(const KvRecord& user, const RunConfig& rc, const CountArgs& a, std::ostream& out) {
  ModelConfig model = rc.model;
  if (!a.preset.empty()) {
    KvRecord rec = ModelConfig::preset(a.preset).to_record();
    rec.merge(user.section("model."));
    model = ModelConfig::from_record(rec);
  }
  const Phase phase = parse_phase(a.phase);
  const Method method = parse_method(a.method);
  std::uint64_t count = 0;
  switch (method) {
    case Method::zero_shot:
      break;
    case Method::prompt: {
      PromptConfig p = rc.experiment.prompt;
      if (a.prompt_len) p.L_e = p.L_d = *a.prompt_len;
      if (a.enc_len) p.L_e = *a.enc_len;
      if (a.dec_len) p.L_d = *a.dec_len;
      if (a.no_deep) p.deep = false;
      if (!a.reparam.empty()) p.reparam = parse_reparam(a.reparam);
      count = count_task_params(p, model, phase);
      break;
    }
    case Method::lora: {
      AdapterConfig c = rc.experiment.adapter;
      if (a.rank) c.rank = *a.rank;
      count = count_task_params(c, model, phase);
      break;
    }
    case Method::finetune:
      count = count_finetune_params(model);
      break;
  }
  out << count << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target-speaker ASR prompt tuning on a toy Whisper-shaped backbone", "tsasr"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Invocation inv;
  app.add_option("--config", inv.config_file, "Config file of `key = value` lines");
  app.add_option("--set", inv.sets, "Override one key (key=value); repeatable");
  key_option(&app, inv, "--metrics-dir", "paths.metrics", "Directory for metrics files");
  key_option(&app, inv, "--seed", "seed", "Seed for pretraining and prompt tuning");

  auto* gen = app.add_subcommand("gen-data", "Generate the mixture corpus");
  key_option(gen, inv, "--out", "paths.corpus", "Corpus directory");
  key_option(gen, inv, "--corpus-seed", "corpus.seed", "Corpus seed");

  auto* pre = app.add_subcommand("pretrain", "Pretrain and freeze the backbone on clean speech");
  key_option(pre, inv, "--corpus", "paths.corpus", "Corpus directory");
  key_option(pre, inv, "--out", "paths.backbone", "Backbone checkpoint to write");
  key_option(pre, inv, "--max-epochs", "pretrain.max_epochs", "Epoch budget");
  key_switch(pre, inv, "--augment", "augment.enabled", "true", "Train with overlap and speaker-context augmentation");

  auto* tune = app.add_subcommand("tune", "Train task parameters on a frozen backbone");
  auto* eval = app.add_subcommand("eval", "Evaluate a saved task model");
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid over several seeds");
  for (auto* sub : {tune, eval, ablate}) {
    key_option(sub, inv, "--corpus", "paths.corpus", "Corpus directory");
    key_option(sub, inv, "--backbone", "paths.backbone", "Pretrained backbone checkpoint");
    key_option(sub, inv, "--modes", "experiment.eval_modes", "Evaluation modes (plain,formatted,timestamps)");
    key_switch(sub, inv, "--test", "experiment.evaluate_test", "true", "Also evaluate the test split");
  }
  for (auto* sub : {tune, eval}) {
    key_option(sub, inv, "--task", "paths.task", "Task checkpoint");
    key_option(sub, inv, "--name", "experiment.name", "Run name used for metrics files");
  }
  key_option(tune, inv, "--method", "experiment.method", "zero_shot | prompt | lora | finetune");
  key_option(tune, inv, "--enc-len", "experiment.prompt.L_e", "Encoder prompt length");
  key_option(tune, inv, "--dec-len", "experiment.prompt.L_d", "Decoder prompt length");
  key_option(tune, inv, "--reparam", "experiment.prompt.reparam", "none | shared | separate");
  key_option(tune, inv, "--supervision", "experiment.train.supervision", "manual | auto_labeled");
  bool eval_zero_shot = false;
  eval->add_flag("--zero-shot", eval_zero_shot, "Evaluate the bare backbone instead of a task checkpoint");
  key_option(ablate, inv, "--cells", "ablate.cells", "Comma-separated cell names (default: whole grid)");
  key_option(ablate, inv, "--seeds", "ablate.seeds", "Comma-separated seeds");
  key_switch(ablate, inv, "--baselines", "ablate.baselines", "true", "Include LoRA and fine-tune cells");

  CountArgs count;
  auto* cp = app.add_subcommand("count-params", "Print the task-parameter count of a configuration");
  cp->add_option("--preset", count.preset, "whisper-small | whisper-medium | whisper-large | toy");
  cp->add_option("--prompt-len", count.prompt_len, "Prompt length on both sides");
  cp->add_option("--enc-len", count.enc_len, "Encoder prompt length");
  cp->add_option("--dec-len", count.dec_len, "Decoder prompt length");
  cp->add_option("--phase", count.phase, "train | infer");
  cp->add_option("--method", count.method, "prompt | lora | finetune");
  cp->add_option("--rank", count.rank, "LoRA rank");
  cp->add_flag("--no-deep", count.no_deep, "Input-level prompts only");
  cp->add_option("--reparam", count.reparam, "none | shared | separate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ExtrasError& e) {
    err << "tsasr: unknown subcommand or argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    err << "tsasr: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const KvRecord user = layered_record(inv);
    const RunConfig rc = RunConfig::resolve(user);
    if (gen->parsed()) return run_gen_data(rc, out);
    if (pre->parsed()) return run_pretrain(rc, out, err);
    if (tune->parsed()) return run_tune(rc, out, err);
    if (eval->parsed()) return run_eval(rc, eval_zero_shot, out, err);
    if (ablate->parsed()) return run_ablate(rc, out, err);
    if (cp->parsed()) return run_count_params(user, rc, count, out);
    err << "tsasr: no subcommand given (gen-data, pretrain, tune, eval, ablate, count-params)\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "tsasr: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "tsasr: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace tsasr
