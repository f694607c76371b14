#ifndef FEDBOOK_FEDERATION_H_
#define FEDBOOK_FEDERATION_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "fedbook/aggregation.h"
#include "fedbook/graph.h"
#include "fedbook/gvq_mae.h"
#include "fedbook/params.h"

namespace fedbook {

// kNoPhase1 swaps intra-domain collaboration for FedAvg; kNoPhase2 swaps
// inter-domain integration for FedAvg.
enum class Scheme { kFedBook, kFedAvg, kNoPhase1, kNoPhase2 };

std::string ToString(Scheme scheme);
// Accepts fedbook, fedavg, no-phase1, no-phase2 (underscores also accepted).
Scheme ParseScheme(const std::string& text);

struct FederationConfig {
  std::size_t phase1_rounds = 3;  // R1
  std::size_t phase2_rounds = 3;  // R2
  Scheme scheme = Scheme::kFedBook;
  double lambda = 0.5;
  TrainConfig train;              // E = train.epochs
  std::uint64_t seed = 0;
  bool parallel_clients = false;

  std::size_t total_rounds() const { return phase1_rounds + phase2_rounds; }
  void Validate() const;
  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

struct ClientRuntime {
  std::size_t client_id = 0;
  std::vector<TextAttributedGraph> data;
  ParamSet cache;
  std::mt19937_64 rng;
  // Counts since the last upload; zero right after every upload.
  FrequencyCounters counters;
};

struct ServerState {
  std::size_t round = 1;  // next round to execute, 1-based
  std::size_t phase1_rounds = 0;
  std::size_t phase2_rounds = 0;
  Scheme scheme = Scheme::kFedBook;
  ParamSet global;
};

enum class RoundStage { kPhase1, kPhase2, kFedAvg };
std::string ToString(RoundStage stage);

struct RoundReport {
  std::size_t round = 0;
  RoundStage stage = RoundStage::kPhase1;
  std::vector<double> client_loss;  // mean local loss over the round's epochs
  Tensor client_similarity;         // K x K, empty for FedAvg rounds
  std::vector<double> distinctiveness;
  std::vector<double> weights;      // aggregation weights of a global round
  double duration_ms = 0.0;

  double mean_loss() const;
};

struct Federation {
  ServerState server;
  std::vector<ClientRuntime> clients;
};

// One seeded global initialization copied into every client cache.
Federation InitFederation(std::vector<std::vector<TextAttributedGraph>> client_data,
                          const ModelConfig& model, const FederationConfig& config);

// Aggregation stage the scheme uses for a 1-based round index.
RoundStage StageFor(Scheme scheme, std::size_t round, std::size_t phase1_rounds);

// Local training on every client, then the server step for the current round.
RoundReport RunRound(Federation& fed, const ModelConfig& model, const FederationConfig& config);

struct PretrainResult {
  ParamSet global;
  std::vector<RoundReport> reports;
};

PretrainResult RunPretraining(std::vector<std::vector<TextAttributedGraph>> client_data,
                              const ModelConfig& model, const FederationConfig& config);

// CSV header and one row per report: round, stage, mean/per-client loss,
// flattened similarity matrix, distinctiveness and weights (';'-joined).
void WriteRoundCsvHeader(std::ostream& out);
void WriteRoundCsvRow(std::ostream& out, const RoundReport& report);

}  // namespace fedbook

#endif  // FEDBOOK_FEDERATION_H_
