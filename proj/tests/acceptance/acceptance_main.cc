// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "app/commands.h"
#include "app/config.h"
#include "app/dataset.h"
#include "app/pipeline.h"
#include "app/verify.h"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

Outcome FromChecks(const std::vector<app::CheckResult>& checks) {
  Outcome o{true, ""};
  for (const auto& c : checks) {
    o.passed = o.passed && c.passed;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += c.name + " max_err=" + Fmt("%.3g", c.max_error) + " tol=" + Fmt("%.0e", c.tolerance);
  }
  return o;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int Cli(const std::vector<std::string>& args, std::string* err) {
  std::vector<const char*> argv{"fedbook"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, e;
  const int code = app::RunCli(static_cast<int>(argv.size()), argv.data(), out, e);
  *err += e.str();
  return code;
}

// synth -> pretrain -> finetune -> eval through the command-line entry point.
Outcome EndToEndDeterminism() {
  const fs::path root = fs::temp_directory_path() / "fedbook_acceptance_e2e";
  fs::remove_all(root);
  fs::create_directories(root);
  app::RunConfig config;
  config.clients = 6;
  config.federation.phase1_rounds = 3;
  config.federation.phase2_rounds = 3;
  config.federation.train.epochs = 2;
  config.data.source = app::DataSource::kFiles;
  config.seed = 2024;

  std::string err;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    config.out_dir = dir.string();
    config.data.dataset_dir = (dir / "data").string();
    const fs::path ini = root / (std::string(run) + ".ini");
    std::ofstream(ini) << app::SerializeRunConfig(config);
    const std::string cfg = ini.string();
    if (Cli({"synth", "--config", cfg, "--out", (dir / "data").string()}, &err) != 0 ||
        Cli({"pretrain", "--config", cfg}, &err) != 0 ||
        Cli({"finetune", "--config", cfg}, &err) != 0 || Cli({"eval", "--config", cfg}, &err) != 0) {
      return {false, "command failed: " + err};
    }
  }
  bool same = true;
  std::string detail;
  for (const char* file : {app::kCheckpointFile, app::kMetricsFile, app::kHeadsFile, app::kRoundsFile}) {
    const std::string a = Slurp(root / "a" / file), b = Slurp(root / "b" / file);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += std::string(file) + (eq ? " identical" : " DIFFERS") + " (" +
              std::to_string(a.size()) + " bytes); ";
  }
  fs::remove_all(root);
  return {same, detail};
}

// Trailing mean over the last `window` rounds ending at `r`.
double Smoothed(const std::vector<double>& loss, std::size_t r, std::size_t window) {
  const std::size_t begin = r + 1 >= window ? r + 1 - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i <= r; ++i) s += loss[i];
  return s / static_cast<double>(r + 1 - begin);
}

Outcome DirectionalConvergence() {
  using fedbook::Scheme;
  const std::vector<Scheme> schemes = {Scheme::kFedBook, Scheme::kFedAvg, Scheme::kNoPhase1,
                                       Scheme::kNoPhase2};
  std::map<Scheme, double> accuracy;
  std::map<Scheme, int> loss_drops;
  constexpr int kSeeds = 5;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    app::RunConfig config;
    config.clients = 6;
    config.data.domains = 2;
    config.data.classes = 2;
    config.data.nodes_per_client = 60;
    config.federation.phase1_rounds = 3;
    config.federation.phase2_rounds = 3;
    config.federation.train.epochs = 2;
    config.federation.train.optimizer.lr = 1e-2;
    config.seed = static_cast<std::uint64_t>(seed);
    const app::ClientDataset data = app::SynthesizeClients(config);
    for (Scheme s : schemes) {
      config.federation.scheme = s;
      const app::EndToEndResult r = app::RunEndToEnd(config, data);
      std::vector<double> loss;
      for (const auto& rep : r.rounds) loss.push_back(rep.mean_loss());
      if (Smoothed(loss, loss.size() - 1, 3) < loss.front()) ++loss_drops[s];
      accuracy[s] += r.mean_score() / kSeeds;
    }
  }
  bool losses_fall = true;
  std::vector<std::pair<double, Scheme>> order;
  std::string detail = "accuracy:";
  for (Scheme s : schemes) {
    losses_fall = losses_fall && loss_drops[s] == kSeeds;
    order.push_back({accuracy[s], s});
    detail += " " + fedbook::ToString(s) + "=" + Fmt("%.4f", accuracy[s]);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  detail += "; ordering:";
  for (const auto& [acc, s] : order) detail += " " + fedbook::ToString(s);
  detail += "; loss fell in";
  for (Scheme s : schemes)
    detail += " " + fedbook::ToString(s) + "=" + std::to_string(loss_drops[s]) + "/5";
  const double best = accuracy[Scheme::kFedBook];
  const bool ordered = best >= accuracy[Scheme::kFedAvg] && best >= accuracy[Scheme::kNoPhase1] &&
                       best >= accuracy[Scheme::kNoPhase2];
  return {losses_fall && ordered, detail};
}

}  // namespace

int main() {
  const app::VerifyOptions opt;
  const app::VerifyHooks hooks = app::VerifyHooks::Library();
  struct Criterion {
    int id;
    const char* title;
    double time_limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", 10,
       [&] { return FromChecks({app::CheckPretrainGradients(opt, hooks)}); }},
      {2, "quantization oracle", 0, [&] { return FromChecks({app::CheckQuantization(opt, hooks)}); }},
      {3, "aggregation oracle equivalence", 0,
       [&] {
         return FromChecks({app::CheckTokenSimilarity(opt, hooks),
                            app::CheckAlignmentMask(opt, hooks),
                            app::CheckCodebookUpdate(opt, hooks),
                            app::CheckClientSimilarity(opt, hooks),
                            app::CheckPersonalized(opt, hooks),
                            app::CheckDistinctiveness(opt, hooks),
                            app::CheckGlobalAggregate(opt, hooks)});
       }},
      {4, "lambda=1 no-op", 0, [&] { return FromChecks({app::CheckLambdaOneNoOp(opt)}); }},
      {5, "identical-upload fixpoint", 0,
       [&] { return FromChecks({app::CheckIdenticalUploadFixpoint(opt)}); }},
      {6, "permutation equivariance", 0,
       [&] { return FromChecks({app::CheckPermutationEquivariance(opt)}); }},
      {7, "frequency-pattern sufficiency", 0,
       [&] { return FromChecks({app::CheckFrequencyScaling(opt)}); }},
      {8, "fedavg consistency", 0, [&] { return FromChecks({app::CheckFedAvgConsistency(opt)}); }},
      {9, "end-to-end determinism", 300, EndToEndDeterminism},
      {10, "directional convergence", 600, DirectionalConvergence},
      {11, "evaluation-metric oracles", 0,
       [&] { return FromChecks({app::CheckMetricOracles(opt)}); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = Seconds(start);
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.passed = false;
      o.detail += " over the " + Fmt("%.0f", c.time_limit_s) + " s limit";
    }
    if (!o.passed) ++failed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title
              << ", " << Fmt("%.2f", secs) << " s): " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
