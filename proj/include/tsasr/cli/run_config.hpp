#pragma once

#include "tsasr/harness/experiment.hpp"
#include "tsasr/kv_record.hpp"
#include "tsasr/miniwhisper/model_config.hpp"
#include "tsasr/miniwhisper/pretrain.hpp"
#include "tsasr/mixer/mixer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tsasr {

/// Fully resolved settings of one CLI invocation. Keys (flat, dotted):
///   corpus.*, model.*, pretrain.*, augment.enabled, augment.*,
///   experiment.{name,method,eval_modes,evaluate_test}, experiment.prompt.*,
///   experiment.adapter.*, experiment.train.*, ablate.{seeds,cells,baselines},
///   paths.{corpus,backbone,task,metrics}, seed.
struct RunConfig {
  CorpusSpec corpus;
  ModelConfig model;
  PretrainSpec pretrain;
  bool augment_enabled = false;
  PretrainAugment augment;
  ExperimentConfig experiment;
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
  std::vector<std::string> ablate_cells;  // empty = whole grid
  bool ablate_baselines = false;
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path backbone_path = "backbone.ckpt";
  std::filesystem::path task_path = "task.ckpt";
  std::filesystem::path metrics_dir = "metrics";

  KvRecord to_record() const;

  /// Defaults overlaid with `user`. model.n_feat and model.n_words follow the
  /// corpus unless given; a top-level `seed` sets the pretraining and training
  /// seeds. Throws ConfigError naming the key on unknown keys or bad values.
  static RunConfig resolve(const KvRecord& user);
};

/// Every key accepted by RunConfig::resolve.
std::vector<std::string> known_config_keys();

}  // namespace tsasr
