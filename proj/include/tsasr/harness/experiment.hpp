#pragma once

#include "tsasr/harness/train.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tsasr {

enum class Method { zero_shot, prompt, lora, finetune };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);

/// One training-and-evaluation run on a frozen backbone.
struct ExperimentConfig {
  std::string name = "run";
  Method method = Method::prompt;
  PromptConfig prompt;
  AdapterConfig adapter;
  TrainSpec train = TrainSpec::toy();
  std::vector<EvalMode> eval_modes = {EvalMode::plain};
  bool evaluate_test = false;

  KvRecord to_record() const;
  static ExperimentConfig from_record(const KvRecord& rec);
};

struct SplitMetrics {
  std::string split;  // "dev" or "test"
  EvalResult eval;
  double token_accuracy = 0.0;  // teacher-forced, against the plain reference
};

struct RunMetrics {
  std::string name;
  KvRecord config;  // experiment.*, model.*, corpus.* echo
  std::uint64_t seed = 0;
  std::uint64_t task_params_train = 0;
  std::uint64_t task_params_infer = 0;
  std::optional<TuneResult> tune;  // absent for zero-shot
  std::vector<SplitMetrics> results;
  double wall_seconds = 0.0;       // kept out of the metrics file

  const SplitMetrics* find(const std::string& split, EvalMode mode) const;
  /// Deterministic JSON rendering; wall time is excluded.
  std::string to_json() const;
};

/// Untrained task model of `cfg.method` seeded with cfg.train.seed.
std::unique_ptr<TaskModel<float>> make_task_model(const Backbone<float>& bb, const ExperimentConfig& cfg);

/// Trainable entries of `model` plus a `<path>.cfg` sidecar holding the
/// experiment and model configs.
void save_task_model(const std::filesystem::path& path, const TaskModel<float>& model, const ExperimentConfig& cfg);

struct LoadedTask {
  ExperimentConfig config;
  std::unique_ptr<TaskModel<float>> model;
};

/// Rebuilds a saved task model on `bb`. Throws ConfigError naming the path
/// when a file is missing or the model config differs from the backbone's.
LoadedTask load_task_model(const Backbone<float>& bb, const std::filesystem::path& path);

/// Metrics shell (name, seed, config echo) for a run of `cfg`.
RunMetrics start_metrics(const Backbone<float>& bb, const Corpus& corpus, const ExperimentConfig& cfg);

/// Bakes prompt models, then evaluates dev (and test when requested) in every
/// configured mode, filling task_params_infer and results of `m`.
void evaluate_task_model(TaskModel<float>& model, const Corpus& corpus, const ExperimentConfig& cfg, RunMetrics& m);

/// Trains (unless zero-shot) and evaluates one configuration. The backbone is
/// never modified. When `trained` is given it receives the tuned model before
/// baking.
RunMetrics run_experiment(const Backbone<float>& bb, const Corpus& corpus, const ExperimentConfig& cfg,
                          const std::vector<AutoLabel>* labels = nullptr,
                          const std::function<void(const TaskModel<float>&)>& trained = {});

/// Writes <name>.json (metrics), <name>.curve.tsv (learning curve) and
/// <name>.timing.json (wall time) into `dir`.
void write_run_metrics(const std::filesystem::path& dir, const RunMetrics& m);

struct AblationCell {
  std::string name;
  ExperimentConfig config;
};

/// Zero-shot, PT, PT+MLP, PT+DP, PT+DP+MLP, encoder-only and decoder-only at
/// L=32, the length sweep, the reparameterization sweep, and optionally the
/// LoRA and fine-tune baselines. Cells with identical configs are merged.
std::vector<AblationCell> default_ablation_grid(const TrainSpec& train, bool baselines = false);

/// Subset of the grid by cell name; throws ConfigError on an unknown name.
std::vector<AblationCell> select_cells(const std::vector<AblationCell>& grid, const std::vector<std::string>& names);

struct CellRun {
  std::string cell;
  std::uint64_t seed = 0;
  std::optional<RunMetrics> metrics;
  std::string error;  // set when the run failed
};

struct AblationReport {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
  std::vector<CellRun> runs;

  const CellRun* find(const std::string& cell, std::uint64_t seed) const;
  std::optional<double> dev_wer(const std::string& cell, std::uint64_t seed) const;
  /// Seeds on which both cells succeeded and pred(wer_a, wer_b) holds.
  int count_seeds(const std::string& a, const std::string& b, const std::function<bool(double, double)>& pred) const;
  /// Tab-separated table: one row per cell with infer counts, mean dev WER
  /// and the per-seed values ("fail" for failed runs).
  std::string table() const;
};

/// Runs every cell under every seed (train.seed replaced). Failures are
/// recorded per run and the remaining runs proceed.
AblationReport run_ablation(const Backbone<float>& bb, const Corpus& corpus, const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const std::vector<AutoLabel>* labels = nullptr,
                            const std::function<void(const CellRun&)>& on_run = {});

}  // namespace tsasr
