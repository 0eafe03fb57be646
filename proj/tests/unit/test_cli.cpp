#include "doctest.h"

#include "tsasr/cli/dispatch.hpp"
#include "tsasr/cli/run_config.hpp"
#include "tsasr/errors.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace tsasr;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "tsasr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("count-params reproduces the Whisper accounting") {
  auto r = run({"count-params", "--preset", "whisper-large", "--prompt-len", "16", "--phase", "infer"});
  CHECK(r.code == 0);
  CHECK(r.out == "1966080\n");
  CHECK(run({"count-params", "--preset", "whisper-medium", "--prompt-len", "16"}).out == "1310720\n");
  CHECK(run({"count-params", "--preset", "whisper-small", "--prompt-len", "16"}).out == "688128\n");
  CHECK(run({"count-params", "--preset", "whisper-small", "--method", "lora", "--rank", "8", "--set",
             "experiment.adapter.targets=enc.self.q,enc.self.v,dec.self.q,dec.self.v,cross.q,cross.v", "--set",
             "experiment.adapter.include_speaker_projection=false"})
            .out == "884736\n");
  CHECK(run({"count-params", "--preset", "whisper-small", "--enc-len", "32", "--dec-len", "0"}).out ==
        run({"count-params", "--preset", "whisper-small", "--prompt-len", "16"}).out);
  CHECK(run({"count-params", "--preset", "whisper-huge"}).code == kExitConfig);
}

TEST_CASE("tune without a pretrained checkpoint names the missing path") {
  const auto dir = scratch_dir("tsasr_cli_missing");
  const auto missing = (dir / "nowhere.ckpt").string();
  const auto r = run({"tune", "--backbone", missing});
  CHECK(r.code != 0);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK(r.err.find("paths.backbone") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("bad invocations exit with a single-line diagnostic") {
  for (const auto& args : std::vector<std::vector<std::string>>{{"frobnicate"},
                                                                {},
                                                                {"--set", "corpus.no_such_key=1", "gen-data"},
                                                                {"--set", "model.d_m=30", "count-params"},
                                                                {"--set", "experiment.train.lr_late=abc", "gen-data"},
                                                                {"--set", "nonsense", "gen-data"}}) {
    const auto r = run(args);
    CHECK(r.code == kExitConfig);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
  CHECK(run({"--set", "corpus.no_such_key=1", "gen-data"}).err.find("corpus.no_such_key") != std::string::npos);
  CHECK(run({"--set", "model.d_m=30", "count-params"}).err.find("model.d_m") != std::string::npos);
  CHECK(run({"--set", "experiment.train.lr_late=abc", "gen-data"}).err.find("experiment.train.lr_late") !=
        std::string::npos);
}

TEST_CASE("config layers: file, then --set, then flags") {
  const auto dir = scratch_dir("tsasr_cli_layers");
  std::ofstream(dir / "run.cfg") << "# toy\ncorpus.mixtures_dev = 3\ncorpus.mixtures_test = 3\ncorpus.seed = 11\n"
                                    "experiment.prompt.L_e = 2\n";
  KvRecord user = KvRecord::load(dir / "run.cfg");
  user.set("experiment.prompt.L_e", 6);
  const auto rc = RunConfig::resolve(user);
  CHECK(rc.corpus.mixtures_dev == 3);
  CHECK(rc.experiment.prompt.L_e == 6);
  CHECK(rc.model.n_feat == rc.corpus.n_feat);

  KvRecord seeded;
  seeded.set("seed", 42);
  const auto s = RunConfig::resolve(seeded);
  CHECK(s.pretrain.seed == 42);
  CHECK(s.experiment.train.seed == 42);
  CHECK(s.experiment.train.lr_initial == TrainSpec::toy().lr_initial);

  const auto r = run({"--config", (dir / "run.cfg").string(), "--set", "corpus.seed=12", "count-params",
                      "--prompt-len", "2"});
  CHECK(r.code == 0);
  CHECK(run({"--config", (dir / "absent.cfg").string(), "count-params"}).code == kExitConfig);
}

TEST_CASE("gen-data twice gives byte-identical corpora and echoes the config") {
  const auto dir = scratch_dir("tsasr_cli_gen");
  const std::vector<std::string> small{"--set", "corpus.clean_per_speaker=3", "--set", "corpus.clean_heldout_per_speaker=1",
                                       "--set", "corpus.mixtures_train=6",    "--set", "corpus.mixtures_dev=4",
                                       "--set", "corpus.mixtures_test=4"};
  for (const char* name : {"a", "b"}) {
    auto args = small;
    args.insert(args.end(), {"--metrics-dir", (dir / "metrics").string(), "gen-data", "--out", (dir / name).string()});
    REQUIRE(run(args).code == 0);
  }
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    ++files;
  }
  CHECK(files == 7);
  const auto echo = slurp(dir / "metrics" / "gen-data.json");
  CHECK(echo.find("\"corpus.mixtures_train\": \"6\"") != std::string::npos);
  CHECK(echo.find("\"pretrain.seed\"") != std::string::npos);
}

TEST_CASE("metrics directory follows the environment override") {
  const auto dir = scratch_dir("tsasr_cli_env");
  ::setenv("TSASR_METRICS_DIR", (dir / "from_env").string().c_str(), 1);
  const auto r = run({"--set", "corpus.clean_per_speaker=2", "--set", "corpus.clean_heldout_per_speaker=1", "--set",
                      "corpus.mixtures_train=2", "--set", "corpus.mixtures_dev=2", "--set", "corpus.mixtures_test=2",
                      "gen-data", "--out", (dir / "corpus").string()});
  ::unsetenv("TSASR_METRICS_DIR");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "from_env" / "gen-data.json"));
}
