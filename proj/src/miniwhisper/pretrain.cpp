#include "tsasr/miniwhisper/pretrain.hpp"

#include "tsasr/gradcore/adamw.hpp"
#include "tsasr/gradcore/checkpoint.hpp"
#include "tsasr/gradcore/gradients.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsasr {

std::vector<int> reference_tokens(const TokenGrammar& g, const CleanUtterance& u, TaskMode mode) {
  if (mode.timestamps) return timestamped_transcript(g, u.words, mode.formatted, u.frames_per_token);
  return mode.formatted ? formatted_transcript(g, u.words) : plain_transcript(g, u.words);
}

std::vector<int> backbone_prefix(const TokenGrammar& g, TaskMode mode) {
  if (mode.formatted) return make_task_prefix(g, mode.timestamps);
  return make_task_prefix(g, mode.timestamps, plain_style_cue(g));
}

std::vector<int> sampled_prefix(const TokenGrammar& g, TaskMode mode, Rng& rng) {
  std::uniform_int_distribution<int> word(0, g.n_words() - 1);
  std::uniform_int_distribution<int> length(1, 4);
  std::vector<int> prev(static_cast<std::size_t>(length(rng)));
  for (int& t : prev) t = word(rng);
  if (!mode.formatted) return make_task_prefix(g, mode.timestamps, prev);
  if (std::bernoulli_distribution(0.5)(rng)) return make_task_prefix(g, mode.timestamps);
  return make_task_prefix(g, mode.timestamps, formatted_transcript(g, prev));
}

void PretrainSpec::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("pretrain.") + key + ": " + what);
  };
  require(max_epochs >= 1, "max_epochs", "must be positive");
  require(batch_size >= 1, "batch_size", "must be positive");
  require(lr > 0.0, "lr", "must be positive");
  require(lr_late > 0.0, "lr_late", "must be positive");
  require(lr_switch_epoch >= 0, "lr_switch_epoch", "must be non-negative");
  require(weight_decay >= 0.0, "weight_decay", "must be non-negative");
  require(target_accuracy > 0.0, "target_accuracy", "must be positive");
  require(min_epochs >= 1 && min_epochs <= max_epochs, "min_epochs", "must lie in [1, max_epochs]");
  require(context_rows >= 1, "context_rows", "must be positive");
}

KvRecord PretrainSpec::to_record() const {
  KvRecord r;
  r.set("max_epochs", max_epochs);
  r.set("batch_size", batch_size);
  r.set("lr", lr);
  r.set("lr_late", lr_late);
  r.set("lr_switch_epoch", lr_switch_epoch);
  r.set("weight_decay", weight_decay);
  r.set("target_accuracy", target_accuracy);
  r.set("min_epochs", min_epochs);
  r.set("context_rows", context_rows);
  r.set("seed", seed);
  return r;
}

PretrainSpec PretrainSpec::from_record(const KvRecord& r) {
  PretrainSpec s;
  s.max_epochs = static_cast<int>(r.get_int("max_epochs", s.max_epochs));
  s.batch_size = static_cast<int>(r.get_int("batch_size", s.batch_size));
  s.lr = r.get_double("lr", s.lr);
  s.lr_late = r.get_double("lr_late", s.lr_late);
  s.lr_switch_epoch = static_cast<int>(r.get_int("lr_switch_epoch", s.lr_switch_epoch));
  s.weight_decay = r.get_double("weight_decay", s.weight_decay);
  s.target_accuracy = r.get_double("target_accuracy", s.target_accuracy);
  s.min_epochs = static_cast<int>(r.get_int("min_epochs", s.min_epochs));
  s.context_rows = static_cast<int>(r.get_int("context_rows", s.context_rows));
  if (r.has("seed")) s.seed = r.get_uint("seed");
  return s;
}

template <typename S>
double token_accuracy(const Backbone<S>& bb, const std::vector<CleanUtterance>& data) {
  const auto g = bb.config.grammar();
  long correct = 0;
  long total = 0;
  for (const auto& u : data) {
    Graph<S> graph(false);
    const auto enc = encode<S>(graph, bb, u.feats.cast<S>());
    for (const auto mode : kTaskModes) {
      const auto r = sequence_loss<S>(graph, bb, enc, backbone_prefix(g, mode), reference_tokens(g, u, mode));
      correct += r.correct;
      total += r.supervised;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

template <typename S>
std::vector<PretrainEpoch> pretrain_backbone(Backbone<S>& bb, const std::vector<CleanUtterance>& train,
                                             const std::vector<CleanUtterance>& heldout, const PretrainSpec& spec,
                                             const FeatureAugmenter& augment) {
  spec.validate();
  if (train.empty() || heldout.empty()) throw ContractError("pretrain: empty training or held-out set");
  const auto g = bb.config.grammar();
  bb.params.set_all_trainable(true);
  AdamW<S> opt({spec.lr, 0.9, 0.999, 1e-8, spec.weight_decay});
  std::vector<PretrainEpoch> curve;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = epoch > spec.lr_switch_epoch ? spec.lr_late : spec.lr;
    double loss_sum = 0.0;
    long tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      struct Job {
        Matrix<S> feats;
        Matrix<S> context;
        std::vector<int> prefix;
        std::vector<int> target;
      };
      std::vector<Job> jobs;
      long batch_tokens = 0;
      for (auto i = start; i < stop; ++i) {
        const auto& u = train[order[i]];
        const TaskMode mode = kTaskModes[std::uniform_int_distribution<int>(0, 3)(rng)];
        AugmentedInput in = augment ? augment(u, rng) : AugmentedInput{u.feats, {}};
        Job job{in.feats.template cast<S>(), in.context.template cast<S>(), sampled_prefix(g, mode, rng),
                reference_tokens(g, u, mode)};
        batch_tokens += static_cast<long>(job.target.size()) + 1;
        jobs.push_back(std::move(job));
      }
      GradMap<S> grads;
      for (const auto& job : jobs) {
        Graph<S> graph;
        std::optional<Var<S>> ctx;
        if (job.context.rows() > 0) ctx = speaker_context<S>(graph, bb, job.context, spec.context_rows);
        const auto enc = encode<S>(graph, bb, job.feats, ctx);
        const auto r = sequence_loss<S>(graph, bb, enc, job.prefix, job.target, std::nullopt, nullptr,
                                     S(1) / static_cast<S>(batch_tokens));
        const double value = static_cast<double>(r.loss.value()(0, 0));
        if (!std::isfinite(value)) throw NumericError("pretrain: non-finite loss in epoch " + std::to_string(epoch));
        loss_sum += value * static_cast<double>(batch_tokens);
        accumulate(grads, grad_all(r.loss, bb.params));
      }
      tokens += batch_tokens;
      opt.step(bb.params, grads, lr);
    }
    curve.push_back({epoch, loss_sum / static_cast<double>(tokens), token_accuracy(bb, heldout)});
    if (epoch >= spec.min_epochs && curve.back().heldout_accuracy >= spec.target_accuracy) {
      bb.freeze();
      return curve;
    }
  }
  bb.freeze();
  throw NonConvergenceError("pretrain: held-out token accuracy " + format_double(curve.back().heldout_accuracy) +
                                " below target " + format_double(spec.target_accuracy) + " after " +
                                std::to_string(spec.max_epochs) + " epochs",
                            curve);
}

template <typename S>
DecodeResult transcribe_clean(const Backbone<S>& bb, const Matrix<double>& feats, TaskMode mode) {
  Graph<S> graph(false);
  const auto enc = encode<S>(graph, bb, feats.cast<S>());
  return greedy_decode<S>(graph, bb, enc, backbone_prefix(bb.config.grammar(), mode), std::nullopt, bb.config.max_tgt);
}

template <typename S>
void save_backbone(const std::filesystem::path& path, const Backbone<S>& bb) {
  save_checkpoint(path, bb.params);
  KvRecord side;
  side.merge(bb.config.to_record(), "model.");
  const auto g = bb.config.grammar();
  side.set("grammar.words", g.n_words());
  side.set("grammar.timestamps", g.n_timestamps());
  side.set("grammar.size", g.size());
  side.set("precision", std::string(to_string(precision_of<S>())));
  side.save(path.string() + ".cfg");
}

template <typename S>
Backbone<S> load_backbone(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("backbone: missing checkpoint " + path.string());
  const auto side = KvRecord::load(path.string() + ".cfg");
  Backbone<S> bb;
  bb.config = ModelConfig::from_record(side.section("model."));
  bb.config.validate();
  bb.params = load_checkpoint<S>(path);
  for (const auto& [name, shape] : backbone_layout(bb.config)) {
    if (!bb.params.contains(name)) throw FormatError("backbone: checkpoint lacks entry " + name);
    if (shape_of(bb.params.value(name)) != shape) throw FormatError("backbone: entry " + name + " has wrong shape");
  }
  return bb;
}

#define TSASR_INSTANTIATE(S)                                                                                   \
  template double token_accuracy(const Backbone<S>&, const std::vector<CleanUtterance>&);                      \
  template std::vector<PretrainEpoch> pretrain_backbone(Backbone<S>&, const std::vector<CleanUtterance>&,      \
                                                        const std::vector<CleanUtterance>&, const PretrainSpec&, \
                                                        const FeatureAugmenter&);                                    \
  template DecodeResult transcribe_clean(const Backbone<S>&, const Matrix<double>&, TaskMode);                \
  template void save_backbone(const std::filesystem::path&, const Backbone<S>&);                              \
  template Backbone<S> load_backbone(const std::filesystem::path&);

TSASR_INSTANTIATE(float)
TSASR_INSTANTIATE(double)

}  // namespace tsasr
