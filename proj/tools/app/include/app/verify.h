#ifndef APP_VERIFY_H_
#define APP_VERIFY_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedbook/aggregation.h"
#include "fedbook/finetune.h"
#include "fedbook/graph.h"
#include "fedbook/gvq_mae.h"
#include "fedbook/params.h"
#include "fedbook/tensor.h"

namespace app {

// Loss value and parameter gradients of one graph's pre-training objective.
struct LossWithGradients {
  double total = 0.0;
  fedbook::ParamSet gradients;
};

// Implementations under test. Defaults bind the library; a test can swap one
// entry to confirm that the matching check catches the fault.
struct VerifyHooks {
  std::function<std::vector<std::size_t>(const fedbook::Tensor&, const fedbook::Tensor&,
                                         std::size_t)>
      nearest_tokens;
  std::function<LossWithGradients(const fedbook::TextAttributedGraph&, const fedbook::ParamSet&,
                                  const fedbook::ModelConfig&, std::uint64_t)>
      pretrain_loss;
  std::function<double(const fedbook::Tensor&, const fedbook::Tensor&, double)> feature_loss;
  std::function<double(const fedbook::Tensor&, const fedbook::Tensor&)> topology_loss;
  std::function<std::vector<double>(std::span<const double>, const fedbook::PrototypeHead&,
                                    const fedbook::LinearHead&)>
      predict;
  std::function<fedbook::Tensor(const fedbook::Tensor&, const fedbook::Tensor&, std::size_t)>
      token_similarity;
  std::function<fedbook::MaskedSimilarity(const fedbook::Tensor&, std::span<const std::uint64_t>,
                                          std::span<const std::uint64_t>)>
      alignment_mask;
  std::function<std::vector<fedbook::Tensor>(std::span<const fedbook::ClientUpload>, double)>
      codebook_update;
  std::function<double(const fedbook::Tensor&, const fedbook::Tensor&)> client_similarity;
  std::function<std::vector<fedbook::ParamSet>(std::span<const fedbook::ClientUpload>,
                                               const fedbook::Tensor&)>
      personalized;
  std::function<std::vector<double>(const fedbook::Tensor&)> distinctiveness;
  std::function<fedbook::ParamSet(std::span<const fedbook::ClientUpload>, std::span<const double>)>
      global_aggregate;

  static VerifyHooks Library();
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t quantization_pairs = 1000;
  std::size_t aggregation_instances = 200;
  std::size_t metric_sets = 100;
};

// Random server-side instance: K uploads sharing one layout.
struct UploadShape {
  std::size_t clients = 2;
  std::size_t heads = 1;
  std::size_t tokens = 2;
  std::size_t dim = 2;
};
std::vector<fedbook::ClientUpload> RandomUploads(const UploadShape& shape, std::mt19937_64& rng);
UploadShape RandomUploadShape(std::mt19937_64& rng, std::size_t max_clients,
                              std::size_t max_heads, std::size_t max_tokens, std::size_t max_dim);

// Parameters flattened in name order.
std::vector<double> Flatten(const fedbook::ParamSet& params);

// Checks of each model and aggregation formula against a loop-level oracle.
CheckResult CheckQuantization(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckPretrainGradients(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckReconstructionLosses(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckPrediction(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckTokenSimilarity(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckAlignmentMask(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckCodebookUpdate(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckClientSimilarity(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckPersonalized(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckDistinctiveness(const VerifyOptions& opt, const VerifyHooks& hooks);
CheckResult CheckGlobalAggregate(const VerifyOptions& opt, const VerifyHooks& hooks);

// Invariant battery.
CheckResult CheckAutodiffOps(const VerifyOptions& opt);
CheckResult CheckLambdaOneNoOp(const VerifyOptions& opt);
CheckResult CheckIdenticalUploadFixpoint(const VerifyOptions& opt);
CheckResult CheckPermutationEquivariance(const VerifyOptions& opt);
CheckResult CheckFrequencyScaling(const VerifyOptions& opt);
CheckResult CheckFedAvgConsistency(const VerifyOptions& opt);
CheckResult CheckMetricOracles(const VerifyOptions& opt);

std::vector<CheckResult> RunVerification(const VerifyOptions& opt, const VerifyHooks& hooks);

// "PASS|FAIL <name> max_err=<e> tol=<t> <detail>"
std::string FormatCheck(const CheckResult& r);

}  // namespace app

#endif  // APP_VERIFY_H_
