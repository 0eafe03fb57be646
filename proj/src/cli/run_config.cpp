#include "tsasr/cli/run_config.hpp"

#include "tsasr/errors.hpp"

#include <algorithm>
#include <sstream>

namespace tsasr {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// Re-throws errors of a section parser with the section prefix on the key path.
template <typename F>
auto in_section(const std::string& prefix, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(prefix, 0) == 0) throw;
    throw ConfigError(prefix + what);
  }
}

}  // namespace

KvRecord RunConfig::to_record() const {
  KvRecord r;
  r.merge(corpus.to_record(), "corpus.");
  r.merge(model.to_record(), "model.");
  r.merge(pretrain.to_record(), "pretrain.");
  r.set("augment.enabled", augment_enabled);
  r.merge(augment.to_record(), "augment.");
  r.merge(experiment.to_record(), "experiment.");
  std::vector<std::string> seeds;
  for (auto s : ablate_seeds) seeds.push_back(std::to_string(s));
  r.set("ablate.seeds", join(seeds));
  r.set("ablate.cells", join(ablate_cells));
  r.set("ablate.baselines", ablate_baselines);
  r.set("paths.corpus", corpus_dir.string());
  r.set("paths.backbone", backbone_path.string());
  r.set("paths.task", task_path.string());
  r.set("paths.metrics", metrics_dir.string());
  return r;
}

std::vector<std::string> known_config_keys() {
  const KvRecord defaults = RunConfig{}.to_record();
  std::vector<std::string> keys;
  for (const auto& [k, v] : defaults.entries()) keys.push_back(k);
  keys.push_back("seed");
  return keys;
}

RunConfig RunConfig::resolve(const KvRecord& user) {
  const auto known = known_config_keys();
  for (const auto& [key, value] : user.entries())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(key + ": unknown configuration key");

  RunConfig c;
  c.corpus = in_section("corpus.", [&] { return CorpusSpec::from_record(user.section("corpus.")); });
  in_section("corpus.", [&] { c.corpus.validate(); });

  const auto model_rec = user.section("model.");
  c.model = in_section("model.", [&] { return ModelConfig::from_record(model_rec); });
  if (!model_rec.has("n_feat")) c.model.n_feat = c.corpus.n_feat;
  if (!model_rec.has("n_words")) c.model.n_words = c.corpus.n_words;
  if (!model_rec.has("d_e")) c.model.d_e = c.corpus.d_e;
  in_section("model.", [&] { c.model.validate(); });

  c.pretrain = in_section("pretrain.", [&] { return PretrainSpec::from_record(user.section("pretrain.")); });
  in_section("pretrain.", [&] { c.pretrain.validate(); });
  c.augment_enabled = user.get_bool("augment.enabled", false);
  c.augment = in_section("augment.", [&] { return PretrainAugment::from_record(user.section("augment.")); });
  in_section("augment.", [&] { c.augment.validate(); });

  const auto exp = user.section("experiment.");
  c.experiment = in_section("experiment.", [&] { return ExperimentConfig::from_record(exp); });
  if (!exp.has("train.lr_initial") && !exp.has("train.lr_late")) {
    const auto toy = TrainSpec::toy();
    c.experiment.train.lr_initial = toy.lr_initial;
    c.experiment.train.lr_late = toy.lr_late;
  }
  in_section("experiment.", [&] { c.experiment.train.validate(); });
  if (c.experiment.method == Method::prompt) in_section("experiment.", [&] { c.experiment.prompt.validate(c.model); });
  if (c.experiment.method == Method::lora) in_section("experiment.", [&] { c.experiment.adapter.validate(c.model); });

  if (user.has("ablate.seeds")) {
    c.ablate_seeds.clear();
    for (const auto& s : split_list(user.get("ablate.seeds"))) {
      try {
        c.ablate_seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw ConfigError("ablate.seeds: '" + s + "' is not an unsigned integer");
      }
    }
    if (c.ablate_seeds.empty()) throw ConfigError("ablate.seeds: at least one seed is required");
  }
  if (user.has("ablate.cells")) c.ablate_cells = split_list(user.get("ablate.cells"));
  c.ablate_baselines = user.get_bool("ablate.baselines", false);

  if (user.has("paths.corpus")) c.corpus_dir = user.get("paths.corpus");
  if (user.has("paths.backbone")) c.backbone_path = user.get("paths.backbone");
  if (user.has("paths.task")) c.task_path = user.get("paths.task");
  if (user.has("paths.metrics")) c.metrics_dir = user.get("paths.metrics");

  if (user.has("seed")) {
    const auto seed = user.get_uint("seed");
    c.pretrain.seed = seed;
    c.experiment.train.seed = seed;
  }
  return c;
}

}  // namespace tsasr
