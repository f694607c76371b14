#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "app/commands.h"
#include "app/config.h"
#include "app/dataset.h"
#include "app/pipeline.h"
#include "app/verify.h"
#include "fedbook/checkpoint.h"
#include "fedbook/errors.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace app {
namespace {

namespace fs = std::filesystem;

RunConfig SmallRun(const fs::path& out) {
  RunConfig c;
  c.model.feature_dim = 4;
  c.model.hidden_dim = 4;
  c.model.heads = 2;
  c.model.tokens = 4;
  c.clients = 4;
  c.federation.phase1_rounds = 2;
  c.federation.phase2_rounds = 1;
  c.federation.train.epochs = 1;
  c.data.domains = 2;
  c.data.nodes_per_client = 20;
  c.finetune.epochs = 5;
  c.seed = 3;
  c.out_dir = out.string();
  return c;
}

fs::path WriteConfig(const RunConfig& c, const fs::path& dir) {
  const fs::path path = dir / "run.ini";
  std::ofstream(path) << SerializeRunConfig(c);
  return path;
}

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fedbook");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> DirContents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = Slurp(e.path());
  return out;
}

std::size_t LineCount(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

TEST(RunConfigTest, SerializeParseRoundTrip) {
  RunConfig c = SmallRun("somewhere");
  c.federation.scheme = fedbook::Scheme::kNoPhase2;
  c.federation.lambda = 0.25;
  c.task.few_shot_k = 3;
  c.data.edge_features = true;
  c.finetune.grid_search = true;
  c.finetune.lr_grid = {0.5, 0.125};
  c.run_id = "abc";
  std::istringstream in(SerializeRunConfig(c));
  EXPECT_EQ(ParseRunConfig(in), c);
  std::istringstream defaults(SerializeRunConfig(RunConfig{}));
  EXPECT_EQ(ParseRunConfig(defaults), RunConfig{});
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("[model]\nwidth = 3\n");
  EXPECT_THROW(ParseRunConfig(unknown), fedbook::ConfigError);
  std::istringstream bad_number("[model]\nhidden_dim = many\n");
  EXPECT_THROW(ParseRunConfig(bad_number), fedbook::ConfigError);
  RunConfig c;
  c.federation.lambda = 2.0;
  EXPECT_THROW(c.Validate(), fedbook::ConfigError);
  c = RunConfig{};
  c.data.source = DataSource::kFiles;
  c.data.dataset_dir = "/no/such/dir";
  EXPECT_THROW(c.Validate(), fedbook::ConfigError);
}

TEST(RunConfigTest, StageSeedsDifferAndFollowTheMasterSeed) {
  RunConfig a, b;
  b.seed = 1;
  EXPECT_NE(a.data_seed(), a.federation_seed());
  EXPECT_NE(a.federation_seed(), a.finetune_seed());
  EXPECT_NE(a.data_seed(), b.data_seed());
  EXPECT_EQ(a.data_seed(), RunConfig{}.data_seed());
}

TEST(DatasetTest, ClientsAreDealtToDomainsInBlocks) {
  EXPECT_EQ(ClientDomains(6, 2), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(ClientDomains(5, 2), (std::vector<std::size_t>{0, 0, 0, 1, 1}));
}

TEST(DatasetTest, SaveLoadRoundTrip) {
  const fs::path dir = fedbook::testing::ScratchDir("dataset_roundtrip");
  const RunConfig c = SmallRun(dir);
  const ClientDataset data = SynthesizeClients(c);
  SaveDataset(data, dir);
  const ClientDataset back = LoadDataset(dir);
  ASSERT_EQ(back.client_count(), data.client_count());
  for (std::size_t k = 0; k < data.client_count(); ++k) {
    EXPECT_EQ(back.domains[k], data.domains[k]);
    ASSERT_EQ(back.clients[k].size(), data.clients[k].size());
    for (std::size_t g = 0; g < data.clients[k].size(); ++g)
      EXPECT_EQ(back.clients[k][g], data.clients[k][g]);
  }
}

TEST(CliTest, SynthWritesOneDatasetPerClientDeterministically) {
  const fs::path root = fedbook::testing::ScratchDir("cli_synth");
  RunConfig c = SmallRun(root / "a");
  c.clients = 6;
  const fs::path ini = WriteConfig(c, root);
  ASSERT_EQ(Cli({"synth", "--config", ini.string()}).code, kExitOk);
  ASSERT_EQ(Cli({"synth", "--config", ini.string(), "--out", (root / "b").string()}).code,
            kExitOk);
  const auto a = DirContents(root / "a");
  EXPECT_EQ(a, DirContents(root / "b"));
  const ClientDataset loaded = LoadDataset(root / "a");
  EXPECT_EQ(loaded.client_count(), 6u);
  EXPECT_NE(a.at("manifest.txt").find("clients=6"), std::string::npos);
  std::set<std::size_t> domains;
  for (const auto& d : loaded.domains) domains.insert(d.index);
  EXPECT_EQ(domains.size(), 2u);
}

TEST(CliTest, FullPipelineProducesExpectedArtifacts) {
  const fs::path root = fedbook::testing::ScratchDir("cli_pipeline");
  const RunConfig c = SmallRun(root / "out");
  const std::string ini = WriteConfig(c, root).string();

  const CliRun pre = Cli({"pretrain", "--config", ini});
  ASSERT_EQ(pre.code, kExitOk) << pre.err;
  const std::string rounds = Slurp(root / "out" / kRoundsFile);
  EXPECT_EQ(LineCount(rounds), 1 + c.federation.total_rounds());

  const fs::path ckpt = root / "out" / kCheckpointFile;
  const fedbook::Checkpoint loaded = fedbook::LoadCheckpoint(ckpt);
  fedbook::SaveCheckpoint(loaded, root / "copy.fbk");
  EXPECT_EQ(fedbook::LoadCheckpoint(root / "copy.fbk"), loaded);
  EXPECT_EQ(Slurp(root / "copy.fbk"), Slurp(ckpt));

  const CliRun ft = Cli({"finetune", "--config", ini});
  ASSERT_EQ(ft.code, kExitOk) << ft.err;
  EXPECT_EQ(LineCount(ft.out), c.clients);
  const CliRun ev = Cli({"eval", "--config", ini});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  const std::string metrics = Slurp(root / "out" / kMetricsFile);
  EXPECT_EQ(LineCount(metrics), 1 + c.clients);
  EXPECT_EQ(ev.out, metrics);

  const CliRun again = Cli({"eval", "--config", ini});
  EXPECT_EQ(again.out, metrics);
  const CliRun rep = Cli({"report", "--config", ini});
  EXPECT_EQ(rep.code, kExitOk);
  EXPECT_TRUE(fs::exists(root / "out" / kReportFile));
}

TEST(CliTest, ExitCodes) {
  const fs::path root = fedbook::testing::ScratchDir("cli_codes");
  const std::string ini = WriteConfig(SmallRun(root / "out"), root).string();
  EXPECT_EQ(Cli({"pretrain", "--config", ini, "--lambda", "1.5"}).code, kExitConfigError);
  EXPECT_EQ(Cli({"pretrain", "--config", ini, "--scheme", "fedsgd"}).code, kExitConfigError);
  EXPECT_EQ(Cli({"pretrain", "--bogus"}).code, kExitConfigError);
  EXPECT_EQ(Cli({}).code, kExitConfigError);
  EXPECT_EQ(Cli({"pretrain", "--config", (root / "missing.ini").string()}).code,
            kExitConfigError);
  // No checkpoint has been written yet.
  EXPECT_EQ(Cli({"finetune", "--config", ini}).code, kExitRuntimeError);
  EXPECT_EQ(Cli({"--help"}).code, kExitOk);
}

TEST(CliTest, VerifyPassesWithOneLinePerCheck) {
  const CliRun v = Cli({"verify", "--seed", "5"});
  EXPECT_EQ(v.code, kExitOk) << v.out;
  std::istringstream in(v.out);
  std::string line;
  std::size_t pass_lines = 0;
  while (std::getline(in, line))
    if (line.rfind("PASS ", 0) == 0) ++pass_lines;
  EXPECT_EQ(pass_lines, RunVerification({}, VerifyHooks::Library()).size());
}

TEST(VerifyTest, ElevenFormulaChecksPlusInvariants) {
  const auto results = RunVerification({}, VerifyHooks::Library());
  ASSERT_GE(results.size(), 11u);
  std::set<std::string> names;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << FormatCheck(r);
    EXPECT_LE(r.max_error, r.tolerance) << r.name;
    names.insert(r.name);
  }
  EXPECT_EQ(names.size(), results.size());
  EXPECT_EQ(FormatCheck(results.front()).rfind("PASS " + results.front().name, 0), 0u);
}

TEST(VerifyTest, SignFlippedDistinctivenessIsCaught) {
  VerifyHooks hooks = VerifyHooks::Library();
  const auto original = hooks.distinctiveness;
  hooks.distinctiveness = [original](const fedbook::Tensor& delta) {
    auto v = original(delta);
    for (double& x : v) x = -x;
    return v;
  };
  EXPECT_FALSE(CheckDistinctiveness({}, hooks).passed);
  EXPECT_TRUE(CheckDistinctiveness({}, VerifyHooks::Library()).passed);
}

TEST(VerifyTest, EveryHookHasACheckThatCatchesAFault) {
  const VerifyOptions opt;
  VerifyHooks lib = VerifyHooks::Library();

  VerifyHooks h = lib;
  h.nearest_tokens = [&](const fedbook::Tensor& z, const fedbook::Tensor& t, std::size_t head) {
    auto idx = lib.nearest_tokens(z, t, head);
    if (!idx.empty()) idx[0] = (idx[0] + 1) % t.shape()[1];
    return idx;
  };
  EXPECT_FALSE(CheckQuantization(opt, h).passed);

  h = lib;
  h.feature_loss = [&](const fedbook::Tensor& x, const fedbook::Tensor& xh, double g) {
    return lib.feature_loss(x, xh, g) * 1.001;
  };
  EXPECT_FALSE(CheckReconstructionLosses(opt, h).passed);

  h = lib;
  h.client_similarity = [&](const fedbook::Tensor& a, const fedbook::Tensor& b) {
    return lib.client_similarity(a, b) + 1e-6;
  };
  EXPECT_FALSE(CheckClientSimilarity(opt, h).passed);

  h = lib;
  h.codebook_update = [&](std::span<const fedbook::ClientUpload> u, double lambda) {
    return lib.codebook_update(u, std::min(1.0, lambda + 0.01));
  };
  EXPECT_FALSE(CheckCodebookUpdate(opt, h).passed);

  h = lib;
  h.pretrain_loss = [&](const fedbook::TextAttributedGraph& g, const fedbook::ParamSet& p,
                        const fedbook::ModelConfig& m, std::uint64_t seed) {
    auto r = lib.pretrain_loss(g, p, m, seed);
    for (double& v : r.gradients.at(fedbook::param::kDecoder).data()) v *= 1.01;
    return r;
  };
  EXPECT_FALSE(CheckPretrainGradients(opt, h).passed);
}

}  // namespace
}  // namespace app
