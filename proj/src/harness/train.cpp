#include "tsasr/harness/train.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/adamw.hpp"
#include "tsasr/gradcore/gradients.hpp"
#include "tsasr/harness/wer.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsasr {

std::string_view to_string(Supervision s) { return s == Supervision::manual ? "manual" : "auto_labeled"; }

Supervision parse_supervision(std::string_view text) {
  if (text == "manual") return Supervision::manual;
  if (text == "auto_labeled" || text == "auto") return Supervision::auto_labeled;
  throw ConfigError("train.supervision: expected manual or auto_labeled, got '" + std::string(text) + "'");
}

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::plain: return "plain";
    case EvalMode::formatted: return "formatted";
    case EvalMode::timestamps: return "timestamps";
  }
  return "plain";
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "plain") return EvalMode::plain;
  if (text == "formatted") return EvalMode::formatted;
  if (text == "timestamps") return EvalMode::timestamps;
  throw ConfigError("eval.mode: expected plain, formatted or timestamps, got '" + std::string(text) + "'");
}

TaskMode task_mode(EvalMode m) { return {m != EvalMode::plain, m == EvalMode::timestamps}; }

TrainSpec TrainSpec::toy() {
  TrainSpec s;
  s.epochs_clean = 10;
  s.epochs_both = 1;
  s.lr_initial = 1e-2;
  s.lr_late = 1e-3;
  s.lr_switch_epoch = 5;
  return s;
}

void TrainSpec::validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(std::string("train.") + key + ": " + what);
  };
  require(epochs_clean >= 0 && epochs_both >= 0 && epochs_clean + epochs_both > 0, "epochs_clean",
          "need a positive total epoch count");
  require(lr_initial > 0.0, "lr_initial", "must be positive");
  require(lr_late > 0.0, "lr_late", "must be positive");
  require(lr_switch_epoch >= 0 && lr_switch_epoch <= epochs_clean + epochs_both, "lr_switch_epoch",
          "must lie within the epoch budget");
  require(batch_size > 0, "batch_size", "must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  require(eps > 0.0, "eps", "must be positive");
  require(weight_decay >= 0.0, "weight_decay", "must be non-negative");
}

KvRecord TrainSpec::to_record() const {
  KvRecord r;
  r.set("epochs_clean", epochs_clean);
  r.set("epochs_both", epochs_both);
  r.set("lr_initial", lr_initial);
  r.set("lr_late", lr_late);
  r.set("lr_switch_epoch", lr_switch_epoch);
  r.set("batch_size", batch_size);
  r.set("seed", seed);
  r.set("beta1", beta1);
  r.set("beta2", beta2);
  r.set("eps", eps);
  r.set("weight_decay", weight_decay);
  r.set("supervision", std::string(to_string(supervision)));
  r.set("precision", std::string(to_string(precision)));
  return r;
}

TrainSpec TrainSpec::from_record(const KvRecord& r) {
  TrainSpec s = toy();
  if (r.has("epochs_clean")) s.epochs_clean = static_cast<int>(r.get_int("epochs_clean"));
  if (r.has("epochs_both")) s.epochs_both = static_cast<int>(r.get_int("epochs_both"));
  if (r.has("lr_initial")) s.lr_initial = r.get_double("lr_initial");
  if (r.has("lr_late")) s.lr_late = r.get_double("lr_late");
  if (r.has("lr_switch_epoch")) s.lr_switch_epoch = static_cast<int>(r.get_int("lr_switch_epoch"));
  if (r.has("batch_size")) s.batch_size = static_cast<int>(r.get_int("batch_size"));
  if (r.has("seed")) s.seed = r.get_uint("seed");
  if (r.has("beta1")) s.beta1 = r.get_double("beta1");
  if (r.has("beta2")) s.beta2 = r.get_double("beta2");
  if (r.has("eps")) s.eps = r.get_double("eps");
  if (r.has("weight_decay")) s.weight_decay = r.get_double("weight_decay");
  if (r.has("supervision")) s.supervision = parse_supervision(r.get("supervision"));
  if (r.has("precision")) {
    try {
      s.precision = parse_precision(r.get("precision"));
    } catch (const Error& e) {
      throw ConfigError(std::string("train.precision: ") + e.what());
    }
  }
  return s;
}

std::vector<std::vector<int>> supervision_targets(const std::vector<MixtureExample>& examples, Supervision source,
                                                  const std::vector<AutoLabel>* labels) {
  std::vector<std::vector<int>> out;
  out.reserve(examples.size());
  if (source == Supervision::manual) {
    for (const auto& ex : examples) out.push_back(ex.plain);
    return out;
  }
  if (!labels || labels->size() != examples.size())
    throw ContractError("supervision: auto-labeled training needs one label per training example");
  for (const auto& label : *labels) out.push_back(label.truncated ? std::vector<int>{} : label.tokens);
  return out;
}

namespace {

template <typename S>
SequenceLoss<S> example_loss(Graph<S>& g, const TaskModel<S>& model, const MixtureExample& ex,
                             const std::vector<int>& target, TaskMode mode, S scale) {
  const auto enc = model.encode(g, ex.mixed.cast<S>(), ex.embedding.cast<S>());
  const auto setup = model.decoder(g, model.backbone().config.grammar(), mode);
  return sequence_loss<S>(g, model.backbone(), enc, setup.prefix, target, setup.prompt, &model, scale);
}

}  // namespace

template <typename S>
TeacherForced teacher_forced(const TaskModel<S>& model, const std::vector<MixtureExample>& examples,
                             const std::vector<std::vector<int>>& targets, TaskMode mode) {
  if (targets.size() != examples.size()) throw ContractError("teacher_forced: one target per example is required");
  double total = 0.0;
  long tokens = 0;
  long correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (targets[i].empty()) continue;
    Graph<S> g(false);
    const auto r = example_loss<S>(g, model, examples[i], targets[i], mode, S(1));
    total += static_cast<double>(r.loss.value()(0, 0));
    tokens += r.supervised;
    correct += r.correct;
  }
  if (tokens == 0) return {};
  return {total / static_cast<double>(tokens), static_cast<double>(correct) / static_cast<double>(tokens)};
}

template <typename S>
double mean_loss(const TaskModel<S>& model, const std::vector<MixtureExample>& examples,
                 const std::vector<std::vector<int>>& targets, TaskMode mode) {
  return teacher_forced<S>(model, examples, targets, mode).loss;
}

template <typename S>
TuneResult prompt_tune(TaskModel<S>& model, const Corpus& corpus, const TrainSpec& spec,
                       const std::vector<AutoLabel>* labels) {
  spec.validate();
  const TaskMode mode{spec.supervision == Supervision::auto_labeled, false};
  const auto clean_targets = supervision_targets(corpus.train, spec.supervision, labels);
  // The noisy variant shares mixtures (and so targets) with the clean one.
  const auto& both_targets = clean_targets;

  TuneResult result;
  result.excluded = static_cast<std::size_t>(
      std::count_if(clean_targets.begin(), clean_targets.end(), [](const auto& t) { return t.empty(); }));
  result.initial_loss = mean_loss<S>(model, corpus.train, clean_targets, mode);

  AdamW<S> opt({spec.lr_initial, spec.beta1, spec.beta2, spec.eps, spec.weight_decay});
  const int total_epochs = spec.epochs_clean + spec.epochs_both;
  long batch_id = 0;
  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    const bool noisy = epoch > spec.epochs_clean;
    const auto& examples = noisy ? corpus.train_both : corpus.train;
    const auto& targets = noisy ? both_targets : clean_targets;
    if (examples.size() != targets.size()) throw ContractError("prompt_tune: noisy split does not match clean split");
    const double lr = epoch > spec.lr_switch_epoch ? spec.lr_late : spec.lr_initial;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (!targets[i].empty()) order.push_back(i);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    long token_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size), ++batch_id) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      long batch_tokens = 0;
      for (auto i = start; i < stop; ++i) batch_tokens += static_cast<long>(targets[order[i]].size()) + 1;
      GradMap<S> grads;
      for (auto i = start; i < stop; ++i) {
        Graph<S> g;
        const auto r = example_loss<S>(g, model, examples[order[i]], targets[order[i]], mode,
                                       S(1) / static_cast<S>(batch_tokens));
        const double value = static_cast<double>(r.loss.value()(0, 0));
        if (!std::isfinite(value)) {
          const auto where = g.first_non_finite();
          throw NumericError("prompt_tune: non-finite loss in batch " + std::to_string(batch_id) + " (epoch " +
                             std::to_string(epoch) + ", first op " + where.value_or("?") + ")");
        }
        loss_sum += value * static_cast<double>(batch_tokens);
        accumulate(grads, grad_all(r.loss, model.trainable()));
      }
      token_sum += batch_tokens;
      opt.step(model.trainable(), grads, lr);
    }
    result.curve.push_back({epoch, noisy ? "both" : "clean", lr, token_sum ? loss_sum / static_cast<double>(token_sum) : 0.0});
  }
  result.final_loss = mean_loss<S>(model, corpus.train, clean_targets, mode);
  return result;
}

namespace {

struct Tally {
  EvalResult r;
  std::size_t valid = 0;
  std::size_t formatted = 0;

  void add(const TokenGrammar& g, const DecodeResult& out, const std::vector<int>& ref, Index frames) {
    ++r.examples;
    if (out.truncated) ++r.truncated;
    std::vector<int> text;
    for (int t : out.tokens)
      if (!g.is_special(t)) text.push_back(t);
    r.errors += edit_distance(normalize_text(text, g), ref);
    r.ref_words += ref.size();
    if (has_formatting(g, out.tokens)) ++formatted;
    if (r.mode == EvalMode::timestamps &&
        valid_timestamps(g, out.tokens, static_cast<int>(encoder_frames(frames))))
      ++valid;
  }

  EvalResult finish() {
    if (r.ref_words) r.wer = static_cast<double>(r.errors) / static_cast<double>(r.ref_words);
    if (r.examples) {
      r.formatted_rate = static_cast<double>(formatted) / static_cast<double>(r.examples);
      if (r.mode == EvalMode::timestamps) r.timestamp_validity = static_cast<double>(valid) / static_cast<double>(r.examples);
    }
    return r;
  }
};

}  // namespace

template <typename S>
EvalResult evaluate(const TaskModel<S>& model, const std::vector<MixtureExample>& examples, EvalMode mode) {
  const auto& bb = model.backbone();
  const auto g = bb.config.grammar();
  Tally tally;
  tally.r.mode = mode;
  for (const auto& ex : examples) {
    Graph<S> graph(false);
    const auto enc = model.encode(graph, ex.mixed.cast<S>(), ex.embedding.cast<S>());
    const auto setup = model.decoder(graph, g, task_mode(mode));
    const auto out = greedy_decode<S>(graph, bb, enc, setup.prefix, setup.prompt, bb.config.max_tgt, &model);
    tally.add(g, out, ex.plain, ex.mixed.rows());
  }
  return tally.finish();
}

template <typename S>
EvalResult evaluate_clean(const Backbone<S>& bb, const std::vector<CleanUtterance>& data, EvalMode mode) {
  const auto g = bb.config.grammar();
  Tally tally;
  tally.r.mode = mode;
  for (const auto& u : data) tally.add(g, transcribe_clean(bb, u.feats, task_mode(mode)), u.words, u.feats.rows());
  return tally.finish();
}

#define TSASR_INSTANTIATE(S)                                                                                       \
  template TeacherForced teacher_forced(const TaskModel<S>&, const std::vector<MixtureExample>&,                   \
                                        const std::vector<std::vector<int>>&, TaskMode);                           \
  template double mean_loss(const TaskModel<S>&, const std::vector<MixtureExample>&,                               \
                            const std::vector<std::vector<int>>&, TaskMode);                                       \
  template TuneResult prompt_tune(TaskModel<S>&, const Corpus&, const TrainSpec&, const std::vector<AutoLabel>*);  \
  template EvalResult evaluate(const TaskModel<S>&, const std::vector<MixtureExample>&, EvalMode);                 \
  template EvalResult evaluate_clean(const Backbone<S>&, const std::vector<CleanUtterance>&, EvalMode);

TSASR_INSTANTIATE(float)
TSASR_INSTANTIATE(double)

}  // namespace tsasr
