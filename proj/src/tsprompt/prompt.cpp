#include "tsasr/tsprompt/prompt.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/checkpoint.hpp"
#include "tsasr/gradcore/ops.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsasr {

std::string_view to_string(Reparam r) {
  switch (r) {
    case Reparam::none: return "none";
    case Reparam::shared: return "shared";
    case Reparam::separate: return "separate";
  }
  return "none";
}

Reparam parse_reparam(std::string_view text) {
  if (text == "none") return Reparam::none;
  if (text == "shared") return Reparam::shared;
  if (text == "separate") return Reparam::separate;
  throw ConfigError("prompt.reparam: expected none, shared or separate, got '" + std::string(text) + "'");
}

std::string_view to_string(Phase p) { return p == Phase::train ? "train" : "infer"; }

Phase parse_phase(std::string_view text) {
  if (text == "train") return Phase::train;
  if (text == "infer") return Phase::infer;
  throw ConfigError("phase: expected train or infer, got '" + std::string(text) + "'");
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

int block_count(Side side, const ModelConfig& model) { return side == Side::encoder ? model.n_enc : model.n_dec; }

}  // namespace

void PromptConfig::validate(const ModelConfig& model) const {
  if (L_e < 0) throw ConfigError("prompt.L_e: must be non-negative");
  if (L_d < 0) throw ConfigError("prompt.L_d: must be non-negative");
  if (!speaker_in_encoder) throw ConfigError("prompt.speaker_in_encoder: the speaker slot is always present");
  if (mlp_hidden < 0) throw ConfigError("prompt.mlp_hidden: must be non-negative");
  if (reparam != Reparam::none && resolved_hidden(model) <= 0)
    throw ConfigError("prompt.mlp_hidden: must be positive when reparam is enabled");
  auto check = [&](const std::vector<int>& blocks, Side side, const char* key) {
    for (int b : blocks)
      if (b < 0 || b >= block_count(side, model))
        throw ConfigError(std::string("prompt.") + key + ": block " + std::to_string(b) + " does not exist");
  };
  check(deep_enc, Side::encoder, "deep_enc");
  check(deep_dec, Side::decoder, "deep_dec");
}

std::vector<int> PromptConfig::prompt_blocks(Side side, const ModelConfig& model) const {
  if (length(side) == 0) return {};
  std::vector<int> blocks{0};
  if (deep) {
    const auto& listed = side == Side::encoder ? deep_enc : deep_dec;
    if (listed.empty()) {
      for (int b = 1; b < block_count(side, model); ++b) blocks.push_back(b);
    } else {
      blocks.insert(blocks.end(), listed.begin(), listed.end());
    }
  }
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

KvRecord PromptConfig::to_record() const {
  KvRecord r;
  r.set("L_e", L_e);
  r.set("L_d", L_d);
  r.set("deep", deep);
  r.set("deep_enc", join(deep_enc));
  r.set("deep_dec", join(deep_dec));
  r.set("reparam", std::string(to_string(reparam)));
  r.set("mlp_hidden", mlp_hidden);
  r.set("speaker_in_encoder", speaker_in_encoder);
  return r;
}

PromptConfig PromptConfig::from_record(const KvRecord& r) {
  PromptConfig c;
  if (r.has("L_e")) c.L_e = static_cast<int>(r.get_int("L_e"));
  if (r.has("L_d")) c.L_d = static_cast<int>(r.get_int("L_d"));
  if (r.has("deep")) c.deep = r.get_bool("deep");
  if (r.has("deep_enc")) c.deep_enc = r.get_int_list("deep_enc");
  if (r.has("deep_dec")) c.deep_dec = r.get_int_list("deep_dec");
  if (r.has("reparam")) c.reparam = parse_reparam(r.get("reparam"));
  if (r.has("mlp_hidden")) c.mlp_hidden = static_cast<int>(r.get_int("mlp_hidden"));
  if (r.has("speaker_in_encoder")) c.speaker_in_encoder = r.get_bool("speaker_in_encoder");
  return c;
}

std::string speaker_projection_name() { return "task.W"; }

std::string prompt_name(Side side, int block) {
  return std::string("task.prompt.") + (side == Side::encoder ? "enc." : "dec.") + std::to_string(block);
}

std::string reparam_net_name(Reparam mode, Side side, int block) {
  if (mode == Reparam::shared) return "task.mlp.shared";
  return std::string("task.mlp.") + (side == Side::encoder ? "enc." : "dec.") + std::to_string(block);
}

template <typename S>
SoftPromptSet<S> init_task_params(const PromptConfig& cfg, const ModelConfig& model, std::uint64_t seed) {
  model.validate();
  cfg.validate(model);
  SoftPromptSet<S> sps;
  sps.config = cfg;
  sps.model = model;
  const double s = 1.0 / std::sqrt(static_cast<double>(model.d_m));
  auto uniform = [&](const std::string& name, Index rows, Index cols, double scale) -> Matrix<S> {
    Rng rng(derive_seed(seed, hash_string(name)));
    return uniform_matrix<double>(rows, cols, -0.5, 0.5, rng).cast<S>() * static_cast<S>(scale);
  };
  sps.params.add(speaker_projection_name(), uniform(speaker_projection_name(), model.d_m, model.d_e, s), true);
  const int h = cfg.resolved_hidden(model);
  auto add_net = [&](const std::string& net) {
    if (sps.params.contains(net + ".fc1.w")) return;
    sps.params.add(net + ".fc1.w", uniform(net + ".fc1.w", model.d_m, h, 1.0 / std::sqrt(model.d_m)), true);
    sps.params.add(net + ".fc1.b", Matrix<S>::Zero(1, h), true);
    sps.params.add(net + ".fc2.w", Matrix<S>::Zero(h, model.d_m), true);
    sps.params.add(net + ".fc2.b", Matrix<S>::Zero(1, model.d_m), true);
  };
  for (Side side : {Side::encoder, Side::decoder})
    for (int b : cfg.prompt_blocks(side, model)) {
      const auto name = prompt_name(side, b);
      sps.params.add(name, uniform(name, cfg.length(side), model.d_m, s), true);
      if (cfg.reparam != Reparam::none) add_net(reparam_net_name(cfg.reparam, side, b));
    }
  return sps;
}

template <typename S>
Var<S> effective_prompt(Graph<S>& g, const SoftPromptSet<S>& sps, Side side, int block) {
  const auto name = prompt_name(side, block);
  const auto key = name + "@" + std::to_string(reinterpret_cast<std::uintptr_t>(&sps.params));
  if (auto cached = g.recall(key)) return *cached;
  Var<S> p = g.param(sps.params, name);
  if (!sps.baked && sps.config.reparam != Reparam::none) {
    const auto net = reparam_net_name(sps.config.reparam, side, block);
    auto w = [&](const char* part) { return g.param(sps.params, net + part); };
    p = add(p, linear(gelu(linear(p, w(".fc1.w"), w(".fc1.b"))), w(".fc2.w"), w(".fc2.b")));
  }
  g.remember(key, p);
  return p;
}

template <typename S>
Var<S> compose_encoder_input(Graph<S>& g, const SoftPromptSet<S>& sps, const RowVector<S>& e) {
  if (e.cols() != sps.model.d_e)
    throw ShapeError("speaker embedding has width " + std::to_string(e.cols()) + ", expected " +
                     std::to_string(sps.model.d_e));
  const Var<S> slot = matmul_nt(g.constant(Matrix<S>(e)), g.param(sps.params, speaker_projection_name()));
  if (sps.config.L_e == 0) return slot;
  return concat_rows({slot, effective_prompt(g, sps, Side::encoder, 0)});
}

template <typename S>
DecoderSetup<S> compose_decoder_prefix(Graph<S>& g, const SoftPromptSet<S>& sps, const TokenGrammar& grammar,
                                       bool timestamps) {
  DecoderSetup<S> setup;
  if (sps.config.L_d == 0) {
    setup.prefix = make_task_prefix(grammar, timestamps);
    return setup;
  }
  setup.prefix = make_task_prefix(grammar, timestamps, std::vector<int>{});
  setup.prompt = DecoderPrompt<S>{effective_prompt(g, sps, Side::decoder, 0), 1};
  return setup;
}

template <typename S>
Var<S> apply_deep_prompts(Graph<S>& g, const SoftPromptSet<S>& sps, Var<S> block_input, Side side, int block) {
  if (block == 0 || !sps.params.contains(prompt_name(side, block))) return block_input;
  const Var<S> fresh = effective_prompt(g, sps, side, block);
  if (1 + fresh.rows() > block_input.rows())
    throw ShapeError("deep prompts: window of " + std::to_string(fresh.rows()) + " rows exceeds a sequence of " +
                     std::to_string(block_input.rows()));
  return replace_rows(block_input, 1, fresh);
}

template <typename S>
bool reparameterize_and_bake(SoftPromptSet<S>& sps) {
  if (sps.baked || sps.config.reparam == Reparam::none) return false;
  Graph<S> g(false);
  std::vector<std::pair<std::string, Matrix<S>>> baked;
  for (Side side : {Side::encoder, Side::decoder})
    for (int b : sps.config.prompt_blocks(side, sps.model))
      baked.emplace_back(prompt_name(side, b), effective_prompt(g, sps, side, b).value());
  for (auto& [name, value] : baked) sps.params.mutable_value(name) = std::move(value);
  for (const auto& name : sps.params.names())
    if (name.rfind("task.mlp.", 0) == 0) sps.params.erase(name);
  sps.baked = true;
  return true;
}

std::uint64_t count_task_params(const PromptConfig& cfg, const ModelConfig& model, Phase phase) {
  const auto d = static_cast<std::uint64_t>(model.d_m);
  std::uint64_t total = d * static_cast<std::uint64_t>(model.d_e);
  std::uint64_t matrices = 0;
  for (Side side : {Side::encoder, Side::decoder}) {
    const auto blocks = cfg.prompt_blocks(side, model).size();
    matrices += blocks;
    total += blocks * static_cast<std::uint64_t>(cfg.length(side)) * d;
  }
  if (phase == Phase::train && cfg.reparam != Reparam::none && matrices > 0) {
    const auto h = static_cast<std::uint64_t>(cfg.resolved_hidden(model));
    const std::uint64_t net = 2 * d * h + h + d;
    total += cfg.reparam == Reparam::shared ? net : matrices * net;
  }
  return total;
}

template <typename S>
void save_task_params(const std::filesystem::path& path, const SoftPromptSet<S>& sps) {
  save_checkpoint(path, sps.params);
  KvRecord side;
  side.set("kind", "prompt");
  side.set("baked", sps.baked);
  side.merge(sps.config.to_record(), "prompt.");
  side.merge(sps.model.to_record(), "model.");
  side.save(path.string() + ".cfg");
}

template <typename S>
SoftPromptSet<S> load_task_params(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("task: missing checkpoint " + path.string());
  const auto side = KvRecord::load(path.string() + ".cfg");
  SoftPromptSet<S> sps;
  sps.config = PromptConfig::from_record(side.section("prompt."));
  sps.model = ModelConfig::from_record(side.section("model."));
  sps.baked = side.get_bool("baked");
  sps.params = load_checkpoint<S>(path);
  return sps;
}

#define TSASR_INSTANTIATE(S)                                                                                 \
  template SoftPromptSet<S> init_task_params<S>(const PromptConfig&, const ModelConfig&, std::uint64_t);     \
  template Var<S> effective_prompt(Graph<S>&, const SoftPromptSet<S>&, Side, int);                           \
  template Var<S> compose_encoder_input(Graph<S>&, const SoftPromptSet<S>&, const RowVector<S>&);            \
  template DecoderSetup<S> compose_decoder_prefix(Graph<S>&, const SoftPromptSet<S>&, const TokenGrammar&, bool); \
  template Var<S> apply_deep_prompts(Graph<S>&, const SoftPromptSet<S>&, Var<S>, Side, int);                 \
  template bool reparameterize_and_bake(SoftPromptSet<S>&);                                                  \
  template void save_task_params(const std::filesystem::path&, const SoftPromptSet<S>&);                     \
  template SoftPromptSet<S> load_task_params<S>(const std::filesystem::path&);

TSASR_INSTANTIATE(float)
TSASR_INSTANTIATE(double)

}  // namespace tsasr
