#include "tsasr/miniwhisper/model_config.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/miniwhisper/transcript.hpp"

namespace tsasr {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v <= 0) throw ConfigError(std::string("model.") + key + ": must be positive, got " + std::to_string(v));
  };
  positive(d_m, "d_m");
  positive(n_heads, "n_heads");
  positive(n_enc, "n_enc");
  positive(n_dec, "n_dec");
  positive(d_ff, "d_ff");
  positive(n_feat, "n_feat");
  positive(n_words, "n_words");
  positive(max_src, "max_src");
  positive(max_tgt, "max_tgt");
  positive(d_e, "d_e");
  if (d_m % n_heads != 0)
    throw ConfigError("model.d_m: " + std::to_string(d_m) + " is not divisible by n_heads=" + std::to_string(n_heads));
  if (d_m % 2 != 0) throw ConfigError("model.d_m: must be even for sinusoidal positions");
  if (n_words < kMinWordsForFormatting)
    throw ConfigError("model.n_words: formatting rules need at least " + std::to_string(kMinWordsForFormatting));
  if (vocab != 0 && vocab < grammar().size())
    throw ConfigError("model.vocab: " + std::to_string(vocab) + " does not cover the " +
                      std::to_string(grammar().size()) + "-token grammar");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.vocab = c.grammar().size();
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "toy") return toy();
  ModelConfig c;
  c.n_feat = 80;
  c.max_src = 3000;
  c.max_tgt = 448;
  c.d_e = 512;
  c.vocab = 51865;
  if (name == "whisper-small") {
    c.d_m = 768, c.n_heads = 12, c.n_enc = c.n_dec = 12, c.d_ff = 3072;
  } else if (name == "whisper-medium") {
    c.d_m = 1024, c.n_heads = 16, c.n_enc = c.n_dec = 24, c.d_ff = 4096;
  } else if (name == "whisper-large") {
    c.d_m = 1280, c.n_heads = 20, c.n_enc = c.n_dec = 32, c.d_ff = 5120;
  } else {
    throw ConfigError("preset: unknown model preset '" + name + "'");
  }
  return c;
}

KvRecord ModelConfig::to_record() const {
  KvRecord r;
  r.set("d_m", d_m);
  r.set("n_heads", n_heads);
  r.set("n_enc", n_enc);
  r.set("n_dec", n_dec);
  r.set("d_ff", d_ff);
  r.set("n_feat", n_feat);
  r.set("n_words", n_words);
  r.set("vocab", resolved_vocab());
  r.set("max_src", max_src);
  r.set("max_tgt", max_tgt);
  r.set("d_e", d_e);
  return r;
}

ModelConfig ModelConfig::from_record(const KvRecord& r) {
  ModelConfig c;
  auto field = [&](const char* key, int& out) {
    if (r.has(key)) out = static_cast<int>(r.get_int(key));
  };
  field("d_m", c.d_m);
  field("n_heads", c.n_heads);
  field("n_enc", c.n_enc);
  field("n_dec", c.n_dec);
  field("d_ff", c.d_ff);
  field("n_feat", c.n_feat);
  field("n_words", c.n_words);
  field("vocab", c.vocab);
  field("max_src", c.max_src);
  field("max_tgt", c.max_tgt);
  field("d_e", c.d_e);
  if (c.vocab == 0) c.vocab = c.grammar().size();
  return c;
}

}  // namespace tsasr
