#include "selrag/metrics.hpp"

#include <algorithm>
#include <unordered_map>

#include "selrag/error.hpp"
#include "selrag/text.hpp"

namespace selrag::eval {

namespace {

bool is_ascii_punct(char c) noexcept {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void require_golds(const std::vector<std::string>& golds) {
  if (golds.empty()) fail(ErrorCode::kInvalidArgument, "gold answer list is empty");
}

}  // namespace

std::vector<std::string> normalized_tokens(std::string_view input) {
  const std::string lowered = text::to_lower(input);
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    if (current != "a" && current != "an" && current != "the") tokens.push_back(current);
    current.clear();
  };
  for (char c : lowered) {
    if (is_space(c)) {
      flush();
    } else if (!is_ascii_punct(c)) {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

std::string normalize(std::string_view input) {
  std::string out;
  for (const auto& t : normalized_tokens(input)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

int exact_match(std::string_view pred, const std::vector<std::string>& golds) {
  require_golds(golds);
  const auto p = normalize(pred);
  return std::any_of(golds.begin(), golds.end(), [&](const auto& g) { return normalize(g) == p; })
             ? 1
             : 0;
}

double f1_single(std::string_view pred, std::string_view gold) {
  const auto pt = normalized_tokens(pred);
  const auto gt = normalized_tokens(gold);
  if (pt.empty() || gt.empty()) return (pt.empty() && gt.empty()) ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gt) ++counts[t];
  int overlap = 0;
  for (const auto& t : pt) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pt.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gt.size());
  return 2.0 * precision * recall / (precision + recall);
}

double f1(std::string_view pred, const std::vector<std::string>& golds) {
  require_golds(golds);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(pred, g));
  return best;
}

int accuracy(std::string_view pred, const std::vector<std::string>& golds) {
  require_golds(golds);
  const auto p = normalize(pred);
  return std::any_of(golds.begin(), golds.end(),
                     [&](const auto& g) { return p.find(normalize(g)) != std::string::npos; })
             ? 1
             : 0;
}

}  // namespace selrag::eval
