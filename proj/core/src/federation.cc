#include "fedbook/federation.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <thread>

#include "fedbook/errors.h"
#include "fedbook/text_format.h"

namespace fedbook {

std::string ToString(Scheme scheme) {
  switch (scheme) {
    case Scheme::kFedBook: return "fedbook";
    case Scheme::kFedAvg: return "fedavg";
    case Scheme::kNoPhase1: return "no-phase1";
    case Scheme::kNoPhase2: return "no-phase2";
  }
  return "fedbook";
}

Scheme ParseScheme(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), '_', '-');
  if (t == "fedbook") return Scheme::kFedBook;
  if (t == "fedavg") return Scheme::kFedAvg;
  if (t == "no-phase1") return Scheme::kNoPhase1;
  if (t == "no-phase2") return Scheme::kNoPhase2;
  throw ConfigError("unknown scheme '" + text + "'");
}

std::string ToString(RoundStage stage) {
  switch (stage) {
    case RoundStage::kPhase1: return "phase1";
    case RoundStage::kPhase2: return "phase2";
    case RoundStage::kFedAvg: return "fedavg";
  }
  return "phase1";
}

void FederationConfig::Validate() const {
  if (phase2_rounds == 0) throw ConfigError("R2 must be >= 1 so a global model exists");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (train.epochs == 0) throw ConfigError("local epochs must be >= 1");
  if (train.optimizer.lr < 0.0) throw ConfigError("learning rate must be >= 0");
}

double RoundReport::mean_loss() const {
  if (client_loss.empty()) return 0.0;
  return std::accumulate(client_loss.begin(), client_loss.end(), 0.0) /
         static_cast<double>(client_loss.size());
}

namespace {

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

constexpr std::uint64_t kInitStream = 0xFEDB00C;

}  // namespace

Federation InitFederation(std::vector<std::vector<TextAttributedGraph>> client_data,
                          const ModelConfig& model, const FederationConfig& config) {
  if (client_data.empty()) throw ConfigError("federation needs at least one client");
  config.Validate();
  model.Validate();
  Federation fed;
  fed.server.phase1_rounds = config.phase1_rounds;
  fed.server.phase2_rounds = config.phase2_rounds;
  fed.server.scheme = config.scheme;
  fed.server.global = InitParams(model, DeriveSeed(config.seed, kInitStream));
  for (std::size_t i = 0; i < client_data.size(); ++i) {
    if (client_data[i].empty()) {
      throw ConfigError("client " + std::to_string(i) + " has no data");
    }
    ClientRuntime c;
    c.client_id = i;
    c.data = std::move(client_data[i]);
    c.cache = fed.server.global;
    c.rng.seed(DeriveSeed(config.seed, i));
    c.counters = FrequencyCounters(model.heads, model.tokens);
    fed.clients.push_back(std::move(c));
  }
  return fed;
}

RoundStage StageFor(Scheme scheme, std::size_t round, std::size_t phase1_rounds) {
  const bool first_phase = round <= phase1_rounds;
  switch (scheme) {
    case Scheme::kFedBook: return first_phase ? RoundStage::kPhase1 : RoundStage::kPhase2;
    case Scheme::kFedAvg: return RoundStage::kFedAvg;
    case Scheme::kNoPhase1: return first_phase ? RoundStage::kFedAvg : RoundStage::kPhase2;
    case Scheme::kNoPhase2: return first_phase ? RoundStage::kPhase1 : RoundStage::kFedAvg;
  }
  return RoundStage::kFedAvg;
}

RoundReport RunRound(Federation& fed, const ModelConfig& model, const FederationConfig& config) {
  ServerState& server = fed.server;
  if (server.round > server.phase1_rounds + server.phase2_rounds) {
    throw ContractError("round " + std::to_string(server.round) + " exceeds R1+R2 = " +
                        std::to_string(server.phase1_rounds + server.phase2_rounds));
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k = fed.clients.size();

  std::vector<LocalTrainResult> results(k);
  auto train_one = [&](std::size_t i) {
    ClientRuntime& c = fed.clients[i];
    results[i] = LocalTrain(c.data, c.cache, model, config.train, c.rng);
  };
  if (config.parallel_clients && k > 1) {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < k; ++i) workers.emplace_back(train_one, i);
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t i = 0; i < k; ++i) train_one(i);
  }

  RoundReport report;
  report.round = server.round;
  std::vector<ClientUpload> uploads;
  for (std::size_t i = 0; i < k; ++i) {
    ClientRuntime& c = fed.clients[i];
    c.counters.Add(results[i].counters);
    const auto& trace = results[i].loss_trace;
    report.client_loss.push_back(std::accumulate(trace.begin(), trace.end(), 0.0) /
                                 static_cast<double>(trace.size()));
    uploads.push_back(ClientUpload{c.client_id, std::move(results[i].params), c.counters,
                                   results[i].sample_count});
    c.counters.Reset();
  }
  // Aggregation reads uploads by client id, never by arrival order.
  std::sort(uploads.begin(), uploads.end(),
            [](const ClientUpload& a, const ClientUpload& b) { return a.client_id < b.client_id; });
  std::vector<std::size_t> slot(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto it = std::find_if(uploads.begin(), uploads.end(), [&](const ClientUpload& u) {
      return u.client_id == fed.clients[i].client_id;
    });
    slot[i] = static_cast<std::size_t>(it - uploads.begin());
  }

  report.stage = StageFor(server.scheme, server.round, server.phase1_rounds);
  switch (report.stage) {
    case RoundStage::kPhase1: {
      Phase1Output p1 = RunPhase1(uploads, config.lambda);
      report.client_similarity = std::move(p1.client_similarity);
      for (std::size_t i = 0; i < k; ++i) fed.clients[i].cache = p1.personalized[slot[i]];
      break;
    }
    case RoundStage::kPhase2: {
      Phase2Output p2 = RunPhase2(uploads);
      report.client_similarity = std::move(p2.client_similarity);
      report.distinctiveness = std::move(p2.distinctiveness);
      report.weights = std::move(p2.weights);
      server.global = std::move(p2.global);
      for (auto& c : fed.clients) c.cache = server.global;
      break;
    }
    case RoundStage::kFedAvg: {
      double total = 0.0;
      for (const auto& u : uploads) total += static_cast<double>(u.sample_count);
      for (const auto& u : uploads) report.weights.push_back(static_cast<double>(u.sample_count) / total);
      server.global = FedAvgAggregate(uploads);
      for (auto& c : fed.clients) c.cache = server.global;
      break;
    }
  }
  ++server.round;
  report.duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

PretrainResult RunPretraining(std::vector<std::vector<TextAttributedGraph>> client_data,
                              const ModelConfig& model, const FederationConfig& config) {
  config.Validate();
  Federation fed = InitFederation(std::move(client_data), model, config);
  PretrainResult result;
  for (std::size_t r = 0; r < config.total_rounds(); ++r)
    result.reports.push_back(RunRound(fed, model, config));
  result.global = std::move(fed.server.global);
  return result;
}

namespace {

template <typename Range>
std::string Join(const Range& values) {
  std::string out;
  bool first = true;
  for (double v : values) {
    if (!first) out += ';';
    out += FormatDouble(v);
    first = false;
  }
  return out;
}

}  // namespace

void WriteRoundCsvHeader(std::ostream& out) {
  out << "round,stage,mean_loss,client_loss,client_similarity,distinctiveness,weights\n";
}

void WriteRoundCsvRow(std::ostream& out, const RoundReport& report) {
  out << report.round << ',' << ToString(report.stage) << ',' << FormatDouble(report.mean_loss())
      << ',' << Join(report.client_loss) << ',' << Join(report.client_similarity.data()) << ','
      << Join(report.distinctiveness) << ',' << Join(report.weights) << '\n';
}

}  // namespace fedbook
