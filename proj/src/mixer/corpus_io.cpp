#include "tsasr/mixer/corpus_io.hpp"

#include "tsasr/errors.hpp"
#include "tsasr/gradcore/binary_io.hpp"

#include <fstream>

namespace tsasr {

namespace {

constexpr char kCleanMagic[] = "TSCLEAN_";
constexpr char kMixMagic[] = "TSMIXED_";
constexpr std::uint32_t kVersion = 1;

void write_header(std::ostream& os, const char* magic, const CorpusSpec& spec) {
  os.write(magic, 8);
  binio::write<std::uint32_t>(os, kVersion);
  binio::write_string(os, spec.to_record().to_string());
}

void read_header(std::istream& is, const char* magic, const std::filesystem::path& path) {
  char buf[8];
  if (!is.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8))
    throw FormatError("corpus: bad header in " + path.string());
  const auto version = binio::read<std::uint32_t>(is);
  if (version != kVersion)
    throw FormatError("corpus: unsupported version " + std::to_string(version) + " in " + path.string());
  (void)binio::read_string(is);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("corpus: cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("corpus: missing split file " + path.string());
  return is;
}

void save_clean(const std::filesystem::path& path, const CorpusSpec& spec, const std::vector<CleanUtterance>& data) {
  auto os = open_out(path);
  write_header(os, kCleanMagic, spec);
  binio::write<std::uint64_t>(os, data.size());
  for (const auto& u : data) {
    binio::write<std::int32_t>(os, u.speaker);
    binio::write<std::int32_t>(os, u.frames_per_token);
    binio::write<std::uint64_t>(os, u.seed);
    binio::write_tokens(os, u.words);
    binio::write_matrix(os, u.feats);
  }
  if (!os) throw ConfigError("corpus: write failed for " + path.string());
}

std::vector<CleanUtterance> load_clean(const std::filesystem::path& path) {
  auto is = open_in(path);
  read_header(is, kCleanMagic, path);
  const auto n = binio::read<std::uint64_t>(is);
  std::vector<CleanUtterance> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    CleanUtterance u;
    u.speaker = binio::read<std::int32_t>(is);
    u.frames_per_token = binio::read<std::int32_t>(is);
    u.seed = binio::read<std::uint64_t>(is);
    u.words = binio::read_tokens(is);
    u.feats = binio::read_matrix<double>(is);
    out.push_back(std::move(u));
  }
  return out;
}

void save_mixed(const std::filesystem::path& path, const CorpusSpec& spec, const std::vector<MixtureExample>& data) {
  auto os = open_out(path);
  write_header(os, kMixMagic, spec);
  binio::write<std::uint64_t>(os, data.size());
  for (const auto& ex : data) {
    binio::write<std::uint64_t>(os, ex.mixture_id);
    binio::write<std::uint64_t>(os, ex.seed);
    binio::write<std::int32_t>(os, ex.target);
    binio::write<std::int32_t>(os, ex.interferer);
    binio::write<std::int32_t>(os, ex.frames_per_token);
    binio::write<double>(os, ex.snr_db);
    binio::write<double>(os, ex.target_gain);
    binio::write<double>(os, ex.alpha);
    binio::write<double>(os, ex.noise_snr_db);
    binio::write_matrix<double>(os, ex.embedding);
    binio::write_tokens(os, ex.plain);
    binio::write_tokens(os, ex.formatted);
    binio::write_tokens(os, ex.timestamped);
    binio::write_matrix(os, ex.target_feats);
    binio::write_matrix(os, ex.interferer_feats);
    binio::write_matrix(os, ex.noise);
    binio::write_matrix(os, ex.mixed);
  }
  if (!os) throw ConfigError("corpus: write failed for " + path.string());
}

std::vector<MixtureExample> load_mixed(const std::filesystem::path& path) {
  auto is = open_in(path);
  read_header(is, kMixMagic, path);
  const auto n = binio::read<std::uint64_t>(is);
  std::vector<MixtureExample> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    MixtureExample ex;
    ex.mixture_id = binio::read<std::uint64_t>(is);
    ex.seed = binio::read<std::uint64_t>(is);
    ex.target = binio::read<std::int32_t>(is);
    ex.interferer = binio::read<std::int32_t>(is);
    ex.frames_per_token = binio::read<std::int32_t>(is);
    ex.snr_db = binio::read<double>(is);
    ex.target_gain = binio::read<double>(is);
    ex.alpha = binio::read<double>(is);
    ex.noise_snr_db = binio::read<double>(is);
    const Matrix<double> e = binio::read_matrix<double>(is);
    if (e.rows() != 1) throw FormatError("corpus: embedding must be a single row in " + path.string());
    ex.embedding = e;
    ex.plain = binio::read_tokens(is);
    ex.formatted = binio::read_tokens(is);
    ex.timestamped = binio::read_tokens(is);
    ex.target_feats = binio::read_matrix<double>(is);
    ex.interferer_feats = binio::read_matrix<double>(is);
    ex.noise = binio::read_matrix<double>(is);
    ex.mixed = binio::read_matrix<double>(is);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  KvRecord manifest;
  manifest.merge(corpus.spec.to_record(), "corpus.");
  manifest.set("splits.clean_train", static_cast<std::uint64_t>(corpus.clean_train.size()));
  manifest.set("splits.clean_heldout", static_cast<std::uint64_t>(corpus.clean_heldout.size()));
  manifest.set("splits.train", static_cast<std::uint64_t>(corpus.train.size()));
  manifest.set("splits.train_both", static_cast<std::uint64_t>(corpus.train_both.size()));
  manifest.set("splits.dev", static_cast<std::uint64_t>(corpus.dev.size()));
  manifest.set("splits.test", static_cast<std::uint64_t>(corpus.test.size()));
  auto list_mixed = [&](const char* split, const std::vector<MixtureExample>& data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& ex = data[i];
      manifest.set(std::string(split) + "." + std::to_string(i),
                   "mixture=" + std::to_string(ex.mixture_id) + " target=" + std::to_string(ex.target) +
                       " interferer=" + std::to_string(ex.interferer) + " frames=" + std::to_string(ex.mixed.rows()) +
                       " words=" + std::to_string(ex.plain.size()) + " snr_db=" + format_double(ex.snr_db));
    }
  };
  list_mixed("train", corpus.train);
  list_mixed("dev", corpus.dev);
  list_mixed("test", corpus.test);
  manifest.save(dir / "manifest.txt");
  save_clean(dir / "clean_train.bin", corpus.spec, corpus.clean_train);
  save_clean(dir / "clean_heldout.bin", corpus.spec, corpus.clean_heldout);
  save_mixed(dir / "train.bin", corpus.spec, corpus.train);
  save_mixed(dir / "train_both.bin", corpus.spec, corpus.train_both);
  save_mixed(dir / "dev.bin", corpus.spec, corpus.dev);
  save_mixed(dir / "test.bin", corpus.spec, corpus.test);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt"))
    throw ConfigError("corpus: missing manifest " + (dir / "manifest.txt").string());
  const auto manifest = KvRecord::load(dir / "manifest.txt");
  Corpus c;
  c.spec = CorpusSpec::from_record(manifest.section("corpus."));
  c.spec.validate();
  c.clean_train = load_clean(dir / "clean_train.bin");
  c.clean_heldout = load_clean(dir / "clean_heldout.bin");
  c.train = load_mixed(dir / "train.bin");
  c.train_both = load_mixed(dir / "train_both.bin");
  c.dev = load_mixed(dir / "dev.bin");
  c.test = load_mixed(dir / "test.bin");
  auto check = [&](const char* key, std::size_t n) {
    if (manifest.get_uint(std::string("splits.") + key) != n)
      throw FormatError(std::string("corpus: split ") + key + " size disagrees with the manifest");
  };
  check("clean_train", c.clean_train.size());
  check("clean_heldout", c.clean_heldout.size());
  check("train", c.train.size());
  check("train_both", c.train_both.size());
  check("dev", c.dev.size());
  check("test", c.test.size());
  return c;
}

}  // namespace tsasr
