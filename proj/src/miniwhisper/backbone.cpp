#include "tsasr/miniwhisper/backbone.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/ops.hpp"

#include <cmath>

namespace tsasr {

std::string_view to_string(Side side) { return side == Side::encoder ? "encoder" : "decoder"; }

namespace {

void add_layer_norm(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, Index d) {
  out.push_back({name + ".g", {1, d}});
  out.push_back({name + ".b", {1, d}});
}

void add_linear(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, Index in, Index dout) {
  out.push_back({name + ".w", {in, dout}});
  out.push_back({name + ".b", {1, dout}});
}

void add_attention(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, Index d) {
  add_layer_norm(out, name + "_ln", d);
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(out, name + p, d, d);
}

void add_mlp(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, Index d, Index ff) {
  add_layer_norm(out, name + "_ln", d);
  add_linear(out, name + ".fc1", d, ff);
  add_linear(out, name + ".fc2", ff, d);
}

bool ends_with(const std::string& s, std::string_view tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Layer norms start at identity, biases at zero, embeddings small, weights at
// 1/sqrt(fan_in) with residual output projections scaled down by depth.
Matrix<double> init_entry(const std::string& name, Shape shape, const ModelConfig& cfg, Rng& rng) {
  if (ends_with(name, "_ln.g") || name == "enc.ln.g" || name == "dec.ln.g") return Matrix<double>::Ones(shape.rows, shape.cols);
  if (ends_with(name, ".b")) return Matrix<double>::Zero(shape.rows, shape.cols);
  if (name == "dec.tok_emb") return normal_matrix<double>(shape.rows, shape.cols, 1.0 / std::sqrt(cfg.d_m), rng);
  if (name == "dec.pos_emb") return normal_matrix<double>(shape.rows, shape.cols, 0.1, rng);
  double stddev = 1.0 / std::sqrt(static_cast<double>(shape.rows));
  if (ends_with(name, ".o.w") || ends_with(name, ".fc2.w")) {
    const int depth = name.rfind("enc.", 0) == 0 ? cfg.n_enc : cfg.n_dec;
    stddev /= std::sqrt(2.0 * depth);
  }
  return normal_matrix<double>(shape.rows, shape.cols, stddev, rng);
}

template <typename S>
class Forward {
 public:
  Forward(Graph<S>& g, const Backbone<S>& bb, const ForwardHooks<S>* hooks) : g_(g), bb_(bb), hooks_(hooks) {}

  Var<S> w(const std::string& name) const { return hooks_ ? hooks_->weight(g_, bb_.params, name) : g_.param(bb_.params, name); }

  Var<S> lin(const std::string& name, Var<S> x) const { return linear(x, w(name + ".w"), w(name + ".b")); }

  Var<S> norm(const std::string& name, Var<S> x) const { return layer_norm(x, w(name + ".g"), w(name + ".b")); }

  Var<S> hook(Side side, int index, Var<S> x) const { return hooks_ ? hooks_->before_block(g_, side, index, x) : x; }

  Var<S> self_attention(const std::string& name, Var<S> x, bool causal) const {
    const Var<S> h = norm(name + "_ln", x);
    const Var<S> a = attention(lin(name + ".q", h), lin(name + ".k", h), lin(name + ".v", h), bb_.config.n_heads, causal);
    return add(x, lin(name + ".o", a));
  }

  // Keys and values of the encoder output are shared by every decoding step.
  Var<S> cross_attention(const std::string& name, Var<S> x, Var<S> enc_out) const {
    const std::string key = "cross:" + name + ":" + std::to_string(enc_out.id);
    Var<S> k, v;
    if (auto cached = g_.recall(key + ":k")) {
      k = *cached;
      v = *g_.recall(key + ":v");
    } else {
      k = lin(name + ".k", enc_out);
      v = lin(name + ".v", enc_out);
      g_.remember(key + ":k", k);
      g_.remember(key + ":v", v);
    }
    const Var<S> q = lin(name + ".q", norm(name + "_ln", x));
    return add(x, lin(name + ".o", attention(q, k, v, bb_.config.n_heads, false)));
  }

  Var<S> mlp(const std::string& name, Var<S> x) const {
    const Var<S> h = norm(name + "_ln", x);
    return add(x, lin(name + ".fc2", gelu(lin(name + ".fc1", h))));
  }

 private:
  Graph<S>& g_;
  const Backbone<S>& bb_;
  const ForwardHooks<S>* hooks_;
};

template <typename S>
Matrix<S> sinusoid(Index rows, Index d) {
  Matrix<S> pe(rows, d);
  for (Index p = 0; p < rows; ++p)
    for (Index i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe(p, 2 * i) = static_cast<S>(std::sin(angle));
      pe(p, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  return pe;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> backbone_layout(const ModelConfig& cfg) {
  const Index d = cfg.d_m;
  std::vector<std::pair<std::string, Shape>> out;
  add_linear(out, "enc.conv1", 3 * cfg.n_feat, d);
  add_linear(out, "enc.conv2", 3 * d, d);
  for (int i = 0; i < cfg.n_enc; ++i) {
    const std::string p = "enc." + std::to_string(i);
    add_attention(out, p + ".attn", d);
    add_mlp(out, p + ".mlp", d, cfg.d_ff);
  }
  add_layer_norm(out, "enc.ln", d);
  out.push_back({"dec.tok_emb", {cfg.resolved_vocab(), d}});
  out.push_back({"dec.pos_emb", {cfg.max_tgt, d}});
  for (int i = 0; i < cfg.n_dec; ++i) {
    const std::string p = "dec." + std::to_string(i);
    add_attention(out, p + ".attn", d);
    add_attention(out, p + ".cross", d);
    add_mlp(out, p + ".mlp", d, cfg.d_ff);
  }
  add_layer_norm(out, "dec.ln", d);
  return out;
}

template <typename S>
Backbone<S> Backbone<S>::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Backbone bb;
  bb.config = cfg;
  bb.config.vocab = cfg.resolved_vocab();
  for (const auto& [name, shape] : backbone_layout(bb.config)) {
    Rng rng(derive_seed(seed, hash_string(name)));
    bb.params.add(name, init_entry(name, shape, bb.config, rng).template cast<S>(), true);
  }
  return bb;
}

template <typename S>
Var<S> front_end(Graph<S>& g, const Backbone<S>& bb, const Matrix<S>& feats, const ForwardHooks<S>* hooks) {
  if (feats.rows() == 0) throw ShapeError("front_end: empty feature sequence");
  if (feats.cols() != bb.config.n_feat)
    throw ShapeError("front_end: features have " + std::to_string(feats.cols()) + " bands, expected " +
                     std::to_string(bb.config.n_feat));
  Forward<S> f(g, bb, hooks);
  Var<S> x = g.constant(feats);
  x = gelu(conv1d(x, f.w("enc.conv1.w"), f.w("enc.conv1.b"), 3, 1, 1));
  return gelu(conv1d(x, f.w("enc.conv2.w"), f.w("enc.conv2.b"), 3, 2, 1));
}

template <typename S>
Var<S> speaker_context(Graph<S>& g, const Backbone<S>& bb, const Matrix<S>& feats, int rows) {
  if (rows < 1) throw ContractError("speaker_context: at least one row is required");
  const Var<S> x = front_end<S>(g, bb, feats);
  const Index n = x.rows();
  if (n < rows)
    throw ShapeError("speaker_context: " + std::to_string(n) + " frames cannot fill " + std::to_string(rows) + " rows");
  Matrix<S> pool = Matrix<S>::Zero(rows, n);
  for (int r = 0; r < rows; ++r) {
    const Index lo = n * r / rows;
    const Index hi = n * (r + 1) / rows;
    pool.row(r).segment(lo, hi - lo).setConstant(S(1) / static_cast<S>(hi - lo));
  }
  return matmul(g.constant(pool), x);
}

template <typename S>
Var<S> encode(Graph<S>& g, const Backbone<S>& bb, const Matrix<S>& feats, std::optional<Var<S>> prefix,
              const ForwardHooks<S>* hooks) {
  const auto& cfg = bb.config;
  if (feats.rows() == 0) throw ShapeError("encode: empty feature sequence");
  if (feats.rows() > cfg.max_src)
    throw CapacityError("encode: " + std::to_string(feats.rows()) + " frames exceed max_src=" + std::to_string(cfg.max_src));
  if (feats.cols() != cfg.n_feat)
    throw ShapeError("encode: features have " + std::to_string(feats.cols()) + " bands, expected " + std::to_string(cfg.n_feat));
  if (prefix && prefix->cols() != cfg.d_m) throw ShapeError("encode: prefix rows must have width d_m");

  Forward<S> f(g, bb, hooks);
  Var<S> x = front_end<S>(g, bb, feats, hooks);
  x = add(x, g.constant(sinusoid<S>(x.rows(), cfg.d_m)));
  if (prefix && prefix->rows() > 0) x = concat_rows({*prefix, x});
  for (int i = 0; i < cfg.n_enc; ++i) {
    const std::string p = "enc." + std::to_string(i);
    x = f.hook(Side::encoder, i, x);
    x = f.self_attention(p + ".attn", x, false);
    x = f.mlp(p + ".mlp", x);
  }
  return f.norm("enc.ln", x);
}

template <typename S>
DecoderOutput<S> decode(Graph<S>& g, const Backbone<S>& bb, Var<S> enc_out, const std::vector<int>& tokens,
                        std::optional<DecoderPrompt<S>> prompt, const ForwardHooks<S>* hooks) {
  const auto& cfg = bb.config;
  const auto n = static_cast<Index>(tokens.size());
  if (n == 0) throw ContractError("decode: empty token sequence");
  if (n > cfg.max_tgt)
    throw CapacityError("decode: " + std::to_string(n) + " tokens exceed max_tgt=" + std::to_string(cfg.max_tgt));

  Forward<S> f(g, bb, hooks);
  const Var<S> table = f.w("dec.tok_emb");
  Var<S> x = add(embedding(table, std::span<const int>(tokens)), slice_rows(f.w("dec.pos_emb"), 0, n));
  if (prompt && prompt->rows.rows() > 0) {
    const Index at = prompt->insert_at;
    if (at < 0 || at > n) throw ShapeError("decode: prompt insertion point outside the token sequence");
    x = concat_rows({slice_rows(x, 0, at), prompt->rows, slice_rows(x, at, n - at)});
  }
  for (int i = 0; i < cfg.n_dec; ++i) {
    const std::string p = "dec." + std::to_string(i);
    x = f.hook(Side::decoder, i, x);
    x = f.self_attention(p + ".attn", x, true);
    x = f.cross_attention(p + ".cross", x, enc_out);
    x = f.mlp(p + ".mlp", x);
  }
  const Var<S> hidden = f.norm("dec.ln", x);
  return {hidden, matmul_nt(hidden, table)};
}

template <typename S>
DecodeResult greedy_decode(Graph<S>& g, const Backbone<S>& bb, Var<S> enc_out, const std::vector<int>& prefix,
                           std::optional<DecoderPrompt<S>> prompt, int max_len, const ForwardHooks<S>* hooks) {
  if (max_len <= 0) throw ContractError("greedy_decode: max_len must be positive");
  if (prefix.empty()) throw ContractError("greedy_decode: empty prefix");
  const int eot = bb.config.grammar().eot();
  DecodeResult result;
  std::vector<int> tokens = prefix;
  for (int step = 0;; ++step) {
    if (step == max_len || static_cast<Index>(tokens.size()) >= bb.config.max_tgt) {
      result.truncated = true;
      break;
    }
    const auto out = decode(g, bb, enc_out, tokens, prompt, hooks);
    const auto& logits = out.logits.value();
    Index best = 0;
    logits.row(logits.rows() - 1).maxCoeff(&best);
    if (static_cast<int>(best) == eot) break;
    tokens.push_back(static_cast<int>(best));
    result.tokens.push_back(static_cast<int>(best));
  }
  return result;
}

TeacherForcing teacher_forcing(const std::vector<int>& prefix, const std::vector<int>& transcript, int eot) {
  if (prefix.empty()) throw ContractError("teacher_forcing: empty prefix");
  TeacherForcing tf;
  tf.inputs = prefix;
  tf.inputs.insert(tf.inputs.end(), transcript.begin(), transcript.end());
  tf.targets.assign(tf.inputs.size(), -1);
  for (std::size_t r = prefix.size() - 1; r < tf.inputs.size(); ++r)
    tf.targets[r] = r + 1 < tf.inputs.size() ? tf.inputs[r + 1] : eot;
  return tf;
}

std::vector<int> with_prompt_mask(const std::vector<int>& targets, Index at, Index count) {
  if (at < 0 || at > static_cast<Index>(targets.size())) throw ShapeError("prompt mask: insertion point out of range");
  std::vector<int> out(targets.begin(), targets.begin() + at);
  out.insert(out.end(), static_cast<std::size_t>(count), -1);
  out.insert(out.end(), targets.begin() + at, targets.end());
  return out;
}

template <typename S>
SequenceLoss<S> sequence_loss(Graph<S>& g, const Backbone<S>& bb, Var<S> enc_out, const std::vector<int>& prefix,
                              const std::vector<int>& transcript, std::optional<DecoderPrompt<S>> prompt,
                              const ForwardHooks<S>* hooks, S scale) {
  const auto tf = teacher_forcing(prefix, transcript, bb.config.grammar().eot());
  const auto targets =
      prompt ? with_prompt_mask(tf.targets, prompt->insert_at, prompt->rows.rows()) : tf.targets;
  const auto out = decode(g, bb, enc_out, tf.inputs, prompt, hooks);
  SequenceLoss<S> result{softmax_cross_entropy(out.logits, std::span<const int>(targets), scale)};
  const auto& logits = out.logits.value();
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    Index best = 0;
    logits.row(static_cast<Index>(r)).maxCoeff(&best);
    ++result.supervised;
    if (static_cast<int>(best) == targets[r]) ++result.correct;
  }
  return result;
}

#define TSASR_INSTANTIATE(S)                                                                                         \
  template struct Backbone<S>;                                                                                       \
  template Var<S> front_end(Graph<S>&, const Backbone<S>&, const Matrix<S>&, const ForwardHooks<S>*);                \
  template Var<S> speaker_context(Graph<S>&, const Backbone<S>&, const Matrix<S>&, int);                             \
  template Var<S> encode(Graph<S>&, const Backbone<S>&, const Matrix<S>&, std::optional<Var<S>>,                     \
                         const ForwardHooks<S>*);                                                                    \
  template DecoderOutput<S> decode(Graph<S>&, const Backbone<S>&, Var<S>, const std::vector<int>&,                   \
                                   std::optional<DecoderPrompt<S>>, const ForwardHooks<S>*);                         \
  template DecodeResult greedy_decode(Graph<S>&, const Backbone<S>&, Var<S>, const std::vector<int>&,                \
                                      std::optional<DecoderPrompt<S>>, int, const ForwardHooks<S>*);                 \
  template SequenceLoss<S> sequence_loss(Graph<S>&, const Backbone<S>&, Var<S>, const std::vector<int>&,             \
                                         const std::vector<int>&, std::optional<DecoderPrompt<S>>,                   \
                                         const ForwardHooks<S>*, S);

TSASR_INSTANTIATE(float)
TSASR_INSTANTIATE(double)

}  // namespace tsasr
