#include "app/commands.h"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "app/config.h"
#include "app/dataset.h"
#include "app/pipeline.h"
#include "app/verify.h"
#include "fedbook/checkpoint.h"
#include "fedbook/errors.h"

namespace app {
namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scheme;
  std::optional<double> lambda;
  std::string checkpoint;
};

void AddCommonFlags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "INI run configuration");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--scheme", o.scheme, "fedbook | fedavg | no-phase1 | no-phase2");
  cmd->add_option("--lambda", o.lambda, "Codebook self weight in [0,1]");
}

RunConfig Resolve(const Overrides& o) {
  RunConfig config = o.config_path.empty() ? RunConfig{} : LoadRunConfig(o.config_path);
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.out_dir = *o.out;
  if (o.scheme) config.federation.scheme = fedbook::ParseScheme(*o.scheme);
  if (o.lambda) config.federation.lambda = *o.lambda;
  return config;
}

fs::path CheckpointPath(const RunConfig& config, const Overrides& o) {
  return o.checkpoint.empty() ? fs::path(config.out_dir) / kCheckpointFile : fs::path(o.checkpoint);
}

int Synth(const Overrides& o, std::ostream& out) {
  RunConfig config = Resolve(o);
  config.data.source = DataSource::kSynth;
  config.Validate();
  const ClientDataset data = SynthesizeClients(config);
  SaveDataset(data, config.out_dir);
  out << "wrote " << data.client_count() << " client datasets to " << config.out_dir << "\n";
  return kExitOk;
}

int Partition(const Overrides& o, std::ostream& out) {
  RunConfig config = Resolve(o);
  fs::create_directories(config.out_dir);
  config.data.source = DataSource::kFiles;
  config.data.dataset_dir = config.out_dir;
  config.Validate();
  const ClientDataset data = PartitionInput(config);
  SaveDataset(data, config.out_dir);
  out << "partitioned " << config.data.input << " into " << data.client_count() << " clients\n";
  return kExitOk;
}

int PretrainCmd(const Overrides& o, std::ostream& out) {
  const RunConfig config = Resolve(o);
  config.Validate();
  const ClientDataset data = ResolveClients(config);
  const auto result = Pretrain(config, data);
  WritePretrainOutputs(config, result, config.out_dir);
  out << "pretrained " << result.reports.size() << " rounds ("
      << fedbook::ToString(config.federation.scheme) << "), checkpoint in " << config.out_dir
      << "\n";
  return kExitOk;
}

int FinetuneCmd(const Overrides& o, std::ostream& out) {
  const RunConfig config = Resolve(o);
  config.Validate();
  const ClientDataset data = ResolveClients(config);
  const auto backbone = fedbook::LoadCheckpoint(CheckpointPath(config, o));
  const auto evals = FinetuneClients(config, data, backbone.params);
  fs::create_directories(config.out_dir);
  fedbook::SaveCheckpoint(HeadsCheckpoint(evals), fs::path(config.out_dir) / kHeadsFile);
  for (const auto& e : evals) {
    out << "client " << e.client_id << " test " << fedbook::ToString(config.task.metric)
        << " " << e.score << "\n";
  }
  return kExitOk;
}

int EvalCmd(const Overrides& o, std::ostream& out) {
  const RunConfig config = Resolve(o);
  config.Validate();
  const ClientDataset data = ResolveClients(config);
  const auto backbone = fedbook::LoadCheckpoint(CheckpointPath(config, o));
  const auto heads = HeadsFromCheckpoint(fedbook::LoadCheckpoint(fs::path(config.out_dir) / kHeadsFile));
  const auto rows = EvaluateClients(config, data, backbone.params, heads);
  std::ofstream csv(fs::path(config.out_dir) / kMetricsFile);
  if (!csv) throw std::runtime_error("cannot write metrics to " + config.out_dir);
  WriteMetricsCsv(rows, csv);
  WriteMetricsCsv(rows, out);
  return kExitOk;
}

int VerifyCmd(const Overrides& o, std::ostream& out) {
  const RunConfig config = Resolve(o);
  VerifyOptions opt;
  opt.seed = config.seed;
  const auto results = RunVerification(opt, VerifyHooks::Library());
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << FormatCheck(r) << "\n";
    if (!r.passed) ++failed;
  }
  out << (failed == 0 ? "all " + std::to_string(results.size()) + " checks passed"
                      : std::to_string(failed) + " of " + std::to_string(results.size()) +
                            " checks failed")
      << "\n";
  return failed == 0 ? kExitOk : kExitVerifyFailed;
}

int ReportCmd(const Overrides& o, std::ostream& out) {
  const RunConfig config = Resolve(o);
  const std::string summary = SummarizeRun(config.out_dir);
  std::ofstream(fs::path(config.out_dir) / kReportFile) << summary;
  out << summary;
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Federated graph foundation model pre-training with codebook aggregation",
               "fedbook"};
  cli.require_subcommand(1);
  Overrides o;
  int (*handler)(const Overrides&, std::ostream&) = nullptr;
  auto add = [&](const char* name, const char* help, int (*fn)(const Overrides&, std::ostream&)) {
    CLI::App* cmd = cli.add_subcommand(name, help);
    AddCommonFlags(cmd, o);
    cmd->callback([&handler, fn] { handler = fn; });
    return cmd;
  };
  add("synth", "Generate a synthetic multi-domain client dataset", Synth);
  add("partition", "Split a graph file or directory across clients", Partition);
  add("pretrain", "Run federated pre-training", PretrainCmd);
  add("finetune", "Fit per-client heads on a frozen backbone", FinetuneCmd)
      ->add_option("--checkpoint", o.checkpoint, "Backbone checkpoint");
  add("eval", "Score fitted heads on each client's test split", EvalCmd)
      ->add_option("--checkpoint", o.checkpoint, "Backbone checkpoint");
  add("verify", "Check the implementation against reference oracles", VerifyCmd);
  add("report", "Summarize an output directory", ReportCmd);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << cli.help();
    return kExitConfigError;
  }
  try {
    return handler(o, out);
  } catch (const fedbook::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
}

}  // namespace app
