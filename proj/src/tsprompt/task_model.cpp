#include "tsasr/tsprompt/task_model.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/ops.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace tsasr {

namespace {

// Role name -> (side prefix, module) of an attention projection.
const std::map<std::string, std::pair<std::string, std::string>>& attention_roles() {
  static const std::map<std::string, std::pair<std::string, std::string>> roles = {
      {"enc.self", {"enc", "attn"}}, {"dec.self", {"dec", "attn"}}, {"cross", {"dec", "cross"}}};
  return roles;
}

std::string lora_name(const std::string& weight, const char* part) { return "task.lora." + weight + "." + part; }

template <typename S>
Matrix<S> speaker_projection_init(const ModelConfig& model, std::uint64_t seed) {
  Rng rng(derive_seed(seed, hash_string(speaker_projection_name())));
  return uniform_matrix<double>(model.d_m, model.d_e, -0.5, 0.5, rng).cast<S>() /
         static_cast<S>(std::sqrt(static_cast<double>(model.d_m)));
}

}  // namespace

void AdapterConfig::validate(const ModelConfig& model) const {
  if (rank < 1) throw ConfigError("adapter.rank: must be at least 1, got " + std::to_string(rank));
  if (targets.empty()) throw ConfigError("adapter.targets: at least one target matrix is required");
  (void)target_weights(model);
}

std::vector<std::string> AdapterConfig::target_weights(const ModelConfig& model) const {
  std::vector<std::string> out;
  for (const auto& t : targets) {
    const auto dot = t.rfind('.');
    const auto role = dot == std::string::npos ? t : t.substr(0, dot);
    const auto proj = dot == std::string::npos ? "" : t.substr(dot + 1);
    const auto it = attention_roles().find(role);
    if (it == attention_roles().end() || (proj != "q" && proj != "k" && proj != "v" && proj != "o"))
      throw ConfigError("adapter.targets: unknown target '" + t + "'");
    const int blocks = it->second.first == "enc" ? model.n_enc : model.n_dec;
    for (int b = 0; b < blocks; ++b)
      out.push_back(it->second.first + "." + std::to_string(b) + "." + it->second.second + "." + proj + ".w");
  }
  return out;
}

KvRecord AdapterConfig::to_record() const {
  KvRecord r;
  r.set("rank", rank);
  std::string joined;
  for (std::size_t i = 0; i < targets.size(); ++i) joined += (i ? "," : "") + targets[i];
  r.set("targets", joined);
  r.set("alpha", alpha);
  r.set("include_speaker_projection", include_speaker_projection);
  return r;
}

AdapterConfig AdapterConfig::from_record(const KvRecord& r) {
  AdapterConfig c;
  if (r.has("rank")) c.rank = static_cast<int>(r.get_int("rank"));
  if (r.has("targets")) {
    c.targets.clear();
    std::stringstream ss(r.get("targets"));
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) c.targets.push_back(item);
  }
  if (r.has("alpha")) c.alpha = r.get_double("alpha");
  if (r.has("include_speaker_projection")) c.include_speaker_projection = r.get_bool("include_speaker_projection");
  return c;
}

std::uint64_t count_task_params(const AdapterConfig& cfg, const ModelConfig& model, Phase) {
  cfg.validate(model);
  const auto d = static_cast<std::uint64_t>(model.d_m);
  std::uint64_t total = cfg.include_speaker_projection ? d * static_cast<std::uint64_t>(model.d_e) : 0;
  // Every attention projection is d_m x d_m.
  total += cfg.target_weights(model).size() * static_cast<std::uint64_t>(cfg.rank) * 2 * d;
  return total;
}

std::uint64_t count_finetune_params(const ModelConfig& model) {
  std::uint64_t total = static_cast<std::uint64_t>(model.d_m) * static_cast<std::uint64_t>(model.d_e);
  for (const auto& [name, shape] : backbone_layout(model)) total += static_cast<std::uint64_t>(shape.size());
  return total;
}

template <typename S>
Var<S> speaker_slot(Graph<S>& g, const ParamStore<S>& store, const RowVector<S>& embedding) {
  const auto& w = store.value(speaker_projection_name());
  if (embedding.cols() != w.cols())
    throw ShapeError("speaker embedding has width " + std::to_string(embedding.cols()) + ", expected " +
                     std::to_string(w.cols()));
  return matmul_nt(g.constant(Matrix<S>(embedding)), g.param(store, speaker_projection_name()));
}

template <typename S>
Var<S> ZeroShotModel<S>::encode(Graph<S>& g, const Matrix<S>& feats, const RowVector<S>&) const {
  return tsasr::encode<S>(g, bb_, feats);
}

template <typename S>
DecoderSetup<S> ZeroShotModel<S>::decoder(Graph<S>&, const TokenGrammar& grammar, TaskMode mode) const {
  return {backbone_prefix(grammar, mode), std::nullopt};
}

template <typename S>
PromptTunedModel<S>::PromptTunedModel(const Backbone<S>& bb, SoftPromptSet<S> sps) : bb_(bb), sps_(std::move(sps)) {
  if (!(sps_.model == bb.config)) throw ConfigError("prompt: task parameters were built for a different model config");
}

template <typename S>
std::uint64_t PromptTunedModel<S>::task_param_count(Phase phase) const {
  return count_task_params(sps_.config, bb_.config, sps_.baked ? Phase::infer : phase);
}

template <typename S>
Var<S> PromptTunedModel<S>::encode(Graph<S>& g, const Matrix<S>& feats, const RowVector<S>& embedding) const {
  return tsasr::encode<S>(g, bb_, feats, compose_encoder_input(g, sps_, embedding), this);
}

template <typename S>
DecoderSetup<S> PromptTunedModel<S>::decoder(Graph<S>& g, const TokenGrammar& grammar, TaskMode mode) const {
  return compose_decoder_prefix(g, sps_, grammar, mode.timestamps);
}

template <typename S>
Var<S> PromptTunedModel<S>::before_block(Graph<S>& g, Side side, int index, Var<S> hidden) const {
  return apply_deep_prompts(g, sps_, hidden, side, index);
}

template <typename S>
LoraModel<S>::LoraModel(const Backbone<S>& bb, AdapterConfig cfg, ParamStore<S> params)
    : bb_(bb), cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate(bb.config);
}

template <typename S>
Var<S> LoraModel<S>::encode(Graph<S>& g, const Matrix<S>& feats, const RowVector<S>& embedding) const {
  if (!cfg_.include_speaker_projection) return tsasr::encode<S>(g, bb_, feats, std::nullopt, this);
  return tsasr::encode<S>(g, bb_, feats, speaker_slot(g, params_, embedding), this);
}

template <typename S>
DecoderSetup<S> LoraModel<S>::decoder(Graph<S>&, const TokenGrammar& grammar, TaskMode mode) const {
  return {backbone_prefix(grammar, mode), std::nullopt};
}

template <typename S>
Var<S> LoraModel<S>::weight(Graph<S>& g, const ParamStore<S>& store, const std::string& name) const {
  if (!params_.contains(lora_name(name, "A"))) return g.param(store, name);
  const auto key = "lora:" + name;
  if (auto cached = g.recall(key)) return *cached;
  const Var<S> delta = matmul(g.param(params_, lora_name(name, "A")), g.param(params_, lora_name(name, "B")));
  const Var<S> w = add(g.param(store, name), scale(delta, static_cast<S>(cfg_.alpha / cfg_.rank)));
  g.remember(key, w);
  return w;
}

template <typename S>
Var<S> FineTuneModel<S>::encode(Graph<S>& g, const Matrix<S>& feats, const RowVector<S>& embedding) const {
  return tsasr::encode<S>(g, bb_, feats, speaker_slot(g, bb_.params, embedding));
}

template <typename S>
DecoderSetup<S> FineTuneModel<S>::decoder(Graph<S>&, const TokenGrammar& grammar, TaskMode mode) const {
  return {backbone_prefix(grammar, mode), std::nullopt};
}

template <typename S>
LoraModel<S> apply_lora(const Backbone<S>& bb, const AdapterConfig& cfg, std::uint64_t seed) {
  cfg.validate(bb.config);
  ParamStore<S> params;
  for (const auto& w : cfg.target_weights(bb.config)) {
    const auto& base = bb.params.value(w);
    Rng rng(derive_seed(seed, hash_string(w)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(base.rows()));
    params.add(lora_name(w, "A"), uniform_matrix<double>(base.rows(), cfg.rank, -bound, bound, rng).template cast<S>(), true);
    params.add(lora_name(w, "B"), Matrix<S>::Zero(cfg.rank, base.cols()), true);
  }
  if (cfg.include_speaker_projection)
    params.add(speaker_projection_name(), speaker_projection_init<S>(bb.config, seed), true);
  return LoraModel<S>(bb, cfg, std::move(params));
}

template <typename S>
FineTuneModel<S> set_finetune_mode(const Backbone<S>& bb, std::uint64_t seed) {
  Backbone<S> copy = bb;
  copy.params.add(speaker_projection_name(), speaker_projection_init<S>(bb.config, seed), true);
  copy.params.set_all_trainable(true);
  return FineTuneModel<S>(std::move(copy));
}

#define TSASR_INSTANTIATE(S)                                                                         \
  template class ZeroShotModel<S>;                                                                   \
  template class PromptTunedModel<S>;                                                                \
  template class LoraModel<S>;                                                                       \
  template class FineTuneModel<S>;                                                                   \
  template LoraModel<S> apply_lora(const Backbone<S>&, const AdapterConfig&, std::uint64_t);         \
  template FineTuneModel<S> set_finetune_mode(const Backbone<S>&, std::uint64_t);                    \
  template Var<S> speaker_slot(Graph<S>&, const ParamStore<S>&, const RowVector<S>&);

TSASR_INSTANTIATE(float)
TSASR_INSTANTIATE(double)

}  // namespace tsasr
