#include "selrag/dpo.hpp"

#include <cmath>
#include <fstream>

#include "selrag/error.hpp"
#include "selrag/metrics.hpp"

namespace selrag::dpo {

namespace fs = std::filesystem;
using nlohmann::json;

double softplus(double x) noexcept {
  // log1p(exp(x)) for x <= 0; x + log1p(exp(-x)) otherwise.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

void check(const LogProbRecord& r, const DpoConfig& cfg) {
  if (!(cfg.beta > 0.0) || !std::isfinite(cfg.beta)) {
    fail(ErrorCode::kInvalidArgument, "beta must be a finite positive number");
  }
  const double vals[] = {r.logp_policy_chosen, r.logp_ref_chosen, r.logp_policy_rejected,
                         r.logp_ref_rejected};
  for (double v : vals) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kInvalidArgument, "non-finite log-probability in pair '" + r.pair_id + "'");
    }
    if (v > 0.0) {
      fail(ErrorCode::kInvalidArgument, "positive log-probability in pair '" + r.pair_id + "'");
    }
  }
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

double margin(const LogProbRecord& r, const DpoConfig& cfg) {
  const double chosen_ratio = r.logp_policy_chosen - r.logp_ref_chosen;
  const double rejected_ratio = r.logp_policy_rejected - r.logp_ref_rejected;
  return cfg.beta * (chosen_ratio - rejected_ratio);
}

double pair_loss(const LogProbRecord& rec, const DpoConfig& cfg) {
  check(rec, cfg);
  const double m = margin(rec, cfg);
  if (!std::isfinite(m)) fail(ErrorCode::kInvalidArgument, "non-finite margin for '" + rec.pair_id + "'");
  return softplus(-m);
}

DatasetLoss dataset_loss(std::span<const LogProbRecord> records, const DpoConfig& cfg) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "no log-probability records");
  DatasetLoss out;
  out.per_pair.reserve(records.size());
  for (const auto& r : records) out.per_pair.push_back(pair_loss(r, cfg));
  out.mean = pairwise_sum(out.per_pair) / static_cast<double>(out.per_pair.size());
  return out;
}

std::vector<LogProbRecord> read_logprobs(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<LogProbRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      LogProbRecord r;
      const auto& id = j.at("pair_id");
      r.pair_id = id.is_string() ? id.get<std::string>() : id.dump();
      r.logp_policy_chosen = j.at("logp_policy_chosen").get<double>();
      r.logp_ref_chosen = j.at("logp_ref_chosen").get<double>();
      r.logp_policy_rejected = j.at("logp_policy_rejected").get<double>();
      r.logp_ref_rejected = j.at("logp_ref_rejected").get<double>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void validate_pair(const augment::DpoPair& p) {
  const auto name = p.pair_id.empty() ? std::string("<unnamed>") : p.pair_id;
  if (eval::normalize(p.chosen) == eval::normalize(p.rejected)) {
    fail(ErrorCode::kInvalidArgument, "pair '" + name + "' has identical chosen and rejected");
  }
  const auto& first = p.order == augment::PairOrder::kChosenFirst ? p.chosen : p.rejected;
  const auto& second = p.order == augment::PairOrder::kChosenFirst ? p.rejected : p.chosen;
  const auto a = p.prompt.find(first);
  const auto b = a == std::string::npos ? std::string::npos : p.prompt.find(second, a + first.size());
  if (a == std::string::npos || b == std::string::npos) {
    fail(ErrorCode::kInvalidArgument,
         "pair '" + name + "' prompt does not embed both responses in the recorded order");
  }
}

nlohmann::ordered_json ExportSummary::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["by_origin"] = by_origin;
  return j;
}

ExportSummary export_training_file(const std::vector<augment::DpoPair>& pairs, const fs::path& out) {
  for (const auto& p : pairs) validate_pair(p);
  augment::write_pairs(out, pairs);

  const auto back = augment::read_pairs(out);
  if (back != pairs) fail(ErrorCode::kIo, "read-back of " + out.string() + " does not match");
  ExportSummary s;
  s.total = back.size();
  for (const auto& p : back) s.by_origin[std::string(augment::to_string(p.negative_origin))] += 1;
  return s;
}

}  // namespace selrag::dpo
