#include "tsasr/harness/experiment.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/checkpoint.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>

namespace tsasr {

namespace {

using Json = nlohmann::ordered_json;

std::string join_modes(const std::vector<EvalMode>& modes) {
  std::string out;
  for (std::size_t i = 0; i < modes.size(); ++i) out += (i ? "," : "") + std::string(to_string(modes[i]));
  return out;
}

Json eval_json(const SplitMetrics& s) {
  Json j;
  j["split"] = s.split;
  j["mode"] = std::string(to_string(s.eval.mode));
  j["examples"] = s.eval.examples;
  j["errors"] = s.eval.errors;
  j["ref_words"] = s.eval.ref_words;
  j["wer"] = s.eval.wer;
  j["token_accuracy"] = s.token_accuracy;
  j["timestamp_validity"] = s.eval.timestamp_validity;
  j["formatted_rate"] = s.eval.formatted_rate;
  j["truncated"] = s.eval.truncated;
  return j;
}

}  // namespace

std::unique_ptr<TaskModel<float>> make_task_model(const Backbone<float>& bb, const ExperimentConfig& cfg) {
  const auto seed = cfg.train.seed;
  switch (cfg.method) {
    case Method::zero_shot:
      return std::make_unique<ZeroShotModel<float>>(bb);
    case Method::prompt:
      return std::make_unique<PromptTunedModel<float>>(bb, init_task_params<float>(cfg.prompt, bb.config, seed));
    case Method::lora:
      return std::make_unique<LoraModel<float>>(apply_lora(bb, cfg.adapter, seed));
    case Method::finetune:
      return std::make_unique<FineTuneModel<float>>(set_finetune_mode(bb, seed));
  }
  throw ContractError("run: unknown method");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::zero_shot: return "zero_shot";
    case Method::prompt: return "prompt";
    case Method::lora: return "lora";
    case Method::finetune: return "finetune";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "zero_shot" || text == "zero-shot") return Method::zero_shot;
  if (text == "prompt") return Method::prompt;
  if (text == "lora") return Method::lora;
  if (text == "finetune") return Method::finetune;
  throw ConfigError("experiment.method: unknown method '" + std::string(text) + "'");
}

KvRecord ExperimentConfig::to_record() const {
  KvRecord r;
  r.set("name", name);
  r.set("method", std::string(to_string(method)));
  r.set("eval_modes", join_modes(eval_modes));
  r.set("evaluate_test", evaluate_test);
  r.merge(prompt.to_record(), "prompt.");
  r.merge(adapter.to_record(), "adapter.");
  r.merge(train.to_record(), "train.");
  return r;
}

ExperimentConfig ExperimentConfig::from_record(const KvRecord& r) {
  ExperimentConfig c;
  if (r.has("name")) c.name = r.get("name");
  if (r.has("method")) c.method = parse_method(r.get("method"));
  if (r.has("eval_modes")) {
    c.eval_modes.clear();
    std::stringstream ss(r.get("eval_modes"));
    for (std::string item; std::getline(ss, item, ',');) {
      if (item.empty()) continue;
      try {
        c.eval_modes.push_back(parse_eval_mode(item));
      } catch (const Error& e) {
        throw ConfigError(std::string("eval_modes: ") + e.what());
      }
    }
  }
  if (r.has("evaluate_test")) c.evaluate_test = r.get_bool("evaluate_test");
  auto sub = [&](const std::string& prefix, auto parse) {
    try {
      return parse(r.section(prefix));
    } catch (const ConfigError& e) {
      throw ConfigError(prefix + e.what());
    }
  };
  c.prompt = sub("prompt.", PromptConfig::from_record);
  c.adapter = sub("adapter.", AdapterConfig::from_record);
  c.train = sub("train.", TrainSpec::from_record);
  return c;
}

const SplitMetrics* RunMetrics::find(const std::string& split, EvalMode mode) const {
  for (const auto& s : results)
    if (s.split == split && s.eval.mode == mode) return &s;
  return nullptr;
}

std::string RunMetrics::to_json() const {
  Json j;
  j["name"] = name;
  j["seed"] = seed;
  Json params;
  params["train"] = task_params_train;
  params["infer"] = task_params_infer;
  j["task_params"] = params;
  if (tune) {
    Json t;
    t["initial_loss"] = tune->initial_loss;
    t["final_loss"] = tune->final_loss;
    t["excluded"] = tune->excluded;
    Json curve = Json::array();
    for (const auto& p : tune->curve) curve.push_back({{"epoch", p.epoch}, {"split", p.split}, {"lr", p.lr}, {"loss", p.loss}});
    t["curve"] = curve;
    j["tune"] = t;
  } else {
    j["tune"] = nullptr;
  }
  Json res = Json::array();
  for (const auto& s : results) res.push_back(eval_json(s));
  j["results"] = res;
  Json conf;
  for (const auto& [k, v] : config.entries()) conf[k] = v;
  j["config"] = conf;
  return j.dump(2) + "\n";
}

void save_task_model(const std::filesystem::path& path, const TaskModel<float>& model, const ExperimentConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, model.trainable());
  KvRecord side;
  side.set("kind", std::string(model.kind()));
  side.merge(cfg.to_record(), "experiment.");
  side.merge(model.backbone().config.to_record(), "model.");
  side.save(path.string() + ".cfg");
}

LoadedTask load_task_model(const Backbone<float>& bb, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("paths.task: missing task checkpoint " + path.string());
  const auto side_path = path.string() + ".cfg";
  if (!std::filesystem::exists(side_path)) throw ConfigError("paths.task: missing sidecar " + side_path);
  const auto side = KvRecord::load(side_path);
  if (!(ModelConfig::from_record(side.section("model.")) == bb.config))
    throw ConfigError("paths.task: " + path.string() + " was trained on a different model config");
  LoadedTask out{ExperimentConfig::from_record(side.section("experiment.")), nullptr};
  out.model = make_task_model(bb, out.config);
  const auto stored = load_checkpoint<float>(path);
  auto& params = out.model->trainable();
  if (stored.names() != params.names())
    throw FormatError("paths.task: entries of " + path.string() + " do not match a " +
                      std::string(to_string(out.config.method)) + " model");
  for (const auto& name : stored.names()) {
    if (stored.value(name).rows() != params.value(name).rows() || stored.value(name).cols() != params.value(name).cols())
      throw FormatError("paths.task: entry " + name + " has the wrong shape");
    params.mutable_value(name) = stored.value(name);
  }
  return out;
}

RunMetrics start_metrics(const Backbone<float>& bb, const Corpus& corpus, const ExperimentConfig& cfg) {
  RunMetrics m;
  m.name = cfg.name;
  m.seed = cfg.train.seed;
  m.config.merge(cfg.to_record(), "experiment.");
  m.config.merge(bb.config.to_record(), "model.");
  m.config.merge(corpus.spec.to_record(), "corpus.");
  return m;
}

void evaluate_task_model(TaskModel<float>& model, const Corpus& corpus, const ExperimentConfig& cfg, RunMetrics& m) {
  if (cfg.eval_modes.empty()) throw ConfigError("experiment.eval_modes: at least one mode is required");
  if (auto* pt = dynamic_cast<PromptTunedModel<float>*>(&model)) reparameterize_and_bake(pt->prompts());
  m.task_params_infer = model.task_param_count(Phase::infer);
  auto evaluate_split = [&](const std::string& name, const std::vector<MixtureExample>& data) {
    const auto targets = supervision_targets(data, Supervision::manual, nullptr);
    for (EvalMode mode : cfg.eval_modes) {
      SplitMetrics s;
      s.split = name;
      s.eval = evaluate(model, data, mode);
      s.token_accuracy = teacher_forced(model, data, targets, TaskMode{false, false}).accuracy;
      m.results.push_back(s);
    }
  };
  evaluate_split("dev", corpus.dev);
  if (cfg.evaluate_test) evaluate_split("test", corpus.test);
}

RunMetrics run_experiment(const Backbone<float>& bb, const Corpus& corpus, const ExperimentConfig& cfg,
                          const std::vector<AutoLabel>* labels,
                          const std::function<void(const TaskModel<float>&)>& trained) {
  const auto start = std::chrono::steady_clock::now();
  if (!bb.frozen()) throw ContractError("run: the backbone must be frozen");
  cfg.train.validate();
  if (cfg.method == Method::prompt) cfg.prompt.validate(bb.config);
  if (cfg.method == Method::lora) cfg.adapter.validate(bb.config);
  if (cfg.eval_modes.empty()) throw ConfigError("experiment.eval_modes: at least one mode is required");

  RunMetrics m = start_metrics(bb, corpus, cfg);
  auto model = make_task_model(bb, cfg);
  m.task_params_train = model->task_param_count(Phase::train);
  if (cfg.method != Method::zero_shot) m.tune = prompt_tune(*model, corpus, cfg.train, labels);
  if (trained) trained(*model);
  evaluate_task_model(*model, corpus, cfg, m);
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

void write_run_metrics(const std::filesystem::path& dir, const RunMetrics& m) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& file, const std::string& text) {
    std::ofstream os(dir / file, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("metrics: cannot write " + (dir / file).string());
    os << text;
  };
  write(m.name + ".json", m.to_json());
  std::ostringstream curve;
  curve << "epoch\tsplit\tlr\tloss\n";
  if (m.tune)
    for (const auto& p : m.tune->curve)
      curve << p.epoch << '\t' << p.split << '\t' << format_double(p.lr) << '\t' << format_double(p.loss) << '\n';
  write(m.name + ".curve.tsv", curve.str());
  Json timing;
  timing["name"] = m.name;
  timing["wall_seconds"] = m.wall_seconds;
  write(m.name + ".timing.json", timing.dump(2) + "\n");
}

std::vector<AblationCell> default_ablation_grid(const TrainSpec& train, bool baselines) {
  std::vector<AblationCell> cells;
  auto prompt_cell = [&](const std::string& name, int le, int ld, bool deep, Reparam reparam) {
    ExperimentConfig c;
    c.name = name;
    c.method = Method::prompt;
    c.prompt.L_e = le;
    c.prompt.L_d = ld;
    c.prompt.deep = deep;
    c.prompt.reparam = reparam;
    c.train = train;
    cells.push_back({name, c});
  };
  ExperimentConfig zs;
  zs.name = "zero_shot";
  zs.method = Method::zero_shot;
  zs.train = train;
  cells.push_back({zs.name, zs});
  prompt_cell("PT", 4, 4, false, Reparam::none);
  prompt_cell("PT+MLP", 4, 4, false, Reparam::separate);
  prompt_cell("PT+DP", 4, 4, true, Reparam::none);
  prompt_cell("PT+DP+MLP", 4, 4, true, Reparam::separate);
  prompt_cell("enc_only_L32", 32, 0, true, Reparam::separate);
  prompt_cell("dec_only_L32", 0, 32, true, Reparam::separate);
  prompt_cell("dual_L16", 16, 16, true, Reparam::separate);
  for (int len : {4, 8, 16, 32, 64}) prompt_cell("len_" + std::to_string(len), len, len, true, Reparam::separate);
  for (Reparam r : {Reparam::none, Reparam::shared, Reparam::separate})
    prompt_cell("reparam_" + std::string(to_string(r)), 4, 4, true, r);
  if (baselines) {
    ExperimentConfig lora;
    lora.name = "lora";
    lora.method = Method::lora;
    lora.train = train;
    cells.push_back({lora.name, lora});
    ExperimentConfig ft;
    ft.name = "finetune";
    ft.method = Method::finetune;
    ft.train = train;
    cells.push_back({ft.name, ft});
  }

  std::vector<AblationCell> unique;
  std::vector<std::string> seen;
  for (auto& cell : cells) {
    auto probe = cell.config;
    probe.name.clear();
    const auto key = probe.to_record().to_string();
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    unique.push_back(std::move(cell));
  }
  return unique;
}

std::vector<AblationCell> select_cells(const std::vector<AblationCell>& grid, const std::vector<std::string>& names) {
  std::vector<AblationCell> out;
  for (const auto& n : names) {
    auto it = std::find_if(grid.begin(), grid.end(), [&](const AblationCell& c) { return c.name == n; });
    if (it == grid.end()) throw ConfigError("ablate.cells: unknown cell '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

const CellRun* AblationReport::find(const std::string& cell, std::uint64_t seed) const {
  for (const auto& r : runs)
    if (r.cell == cell && r.seed == seed) return &r;
  return nullptr;
}

std::optional<double> AblationReport::dev_wer(const std::string& cell, std::uint64_t seed) const {
  const auto* r = find(cell, seed);
  if (!r || !r->metrics) return std::nullopt;
  for (const auto& s : r->metrics->results)
    if (s.split == "dev") return s.eval.wer;
  return std::nullopt;
}

int AblationReport::count_seeds(const std::string& a, const std::string& b,
                                const std::function<bool(double, double)>& pred) const {
  int n = 0;
  for (auto seed : seeds) {
    const auto wa = dev_wer(a, seed);
    const auto wb = dev_wer(b, seed);
    if (wa && wb && pred(*wa, *wb)) ++n;
  }
  return n;
}

std::string AblationReport::table() const {
  std::ostringstream os;
  os << "cell\tmethod\tL_e\tL_d\tdeep\treparam\ttrain_params\tinfer_params\tmean_dev_wer";
  for (auto seed : seeds) os << "\tseed_" << seed;
  os << '\n';
  for (const auto& cell : cells) {
    const auto& c = cell.config;
    const bool prompt = c.method == Method::prompt;
    os << cell.name << '\t' << to_string(c.method) << '\t' << (prompt ? c.prompt.L_e : 0) << '\t'
       << (prompt ? c.prompt.L_d : 0) << '\t' << (prompt && c.prompt.deep ? "yes" : "no") << '\t'
       << (prompt ? std::string(to_string(c.prompt.reparam)) : "-");
    std::uint64_t train_params = 0, infer_params = 0;
    double sum = 0.0;
    int ok = 0;
    std::ostringstream per_seed;
    for (auto seed : seeds) {
      const auto* r = find(cell.name, seed);
      if (r && r->metrics) {
        train_params = r->metrics->task_params_train;
        infer_params = r->metrics->task_params_infer;
      }
      const auto w = dev_wer(cell.name, seed);
      if (w) {
        sum += *w;
        ++ok;
        per_seed << '\t' << format_double(*w);
      } else {
        per_seed << "\tfail";
      }
    }
    os << '\t' << train_params << '\t' << infer_params << '\t' << (ok ? format_double(sum / ok) : "fail")
       << per_seed.str() << '\n';
  }
  return os.str();
}

AblationReport run_ablation(const Backbone<float>& bb, const Corpus& corpus, const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const std::vector<AutoLabel>* labels,
                            const std::function<void(const CellRun&)>& on_run) {
  if (cells.empty()) throw ConfigError("ablate: the grid has no cells");
  if (seeds.empty()) throw ConfigError("ablate.seeds: at least one seed is required");
  AblationReport report;
  report.cells = cells;
  report.seeds = seeds;
  for (const auto& cell : cells) {
    for (auto seed : seeds) {
      CellRun run;
      run.cell = cell.name;
      run.seed = seed;
      auto cfg = cell.config;
      cfg.train.seed = seed;
      cfg.name = cell.name + ".seed" + std::to_string(seed);
      try {
        run.metrics = run_experiment(bb, corpus, cfg, labels);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (on_run) on_run(run);
      report.runs.push_back(std::move(run));
    }
  }
  return report;
}

}  // namespace tsasr
