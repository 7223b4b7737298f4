#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selrag/augment.hpp"

// Forward DPO objective from externally scored log-probabilities, plus
// validated export of training pairs. No model is run here.
namespace selrag::dpo {

struct LogProbRecord {
  std::string pair_id;
  double logp_policy_chosen = 0.0;
  double logp_ref_chosen = 0.0;
  double logp_policy_rejected = 0.0;
  double logp_ref_rejected = 0.0;
};

struct DpoConfig {
  double beta = 0.1;
};

// beta * [(policy_chosen - ref_chosen) - (policy_rejected - ref_rejected)]
double margin(const LogProbRecord& rec, const DpoConfig& cfg);

// -log(sigmoid(m)) evaluated as softplus(-m). Throws kInvalidArgument for
// non-finite inputs, positive log-probabilities or beta <= 0.
double pair_loss(const LogProbRecord& rec, const DpoConfig& cfg);

// Stable softplus(x) = log(1 + e^x).
double softplus(double x) noexcept;

struct DatasetLoss {
  double mean = 0.0;
  std::vector<double> per_pair;
};

// Mean via pairwise summation. Throws kInvalidArgument when records is empty.
DatasetLoss dataset_loss(std::span<const LogProbRecord> records, const DpoConfig& cfg);

std::vector<LogProbRecord> read_logprobs(const std::filesystem::path& path);

// Throws kInvalidArgument naming the pair on: normalized chosen == rejected,
// or a prompt that does not contain both responses in the recorded order.
void validate_pair(const augment::DpoPair& pair);

struct ExportSummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_origin;

  nlohmann::ordered_json to_json() const;
};

// Validates every pair, writes JSONL, re-reads the file and checks it
// matches the input exactly.
ExportSummary export_training_file(const std::vector<augment::DpoPair>& pairs,
                                   const std::filesystem::path& out);

}  // namespace selrag::dpo
