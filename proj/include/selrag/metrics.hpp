#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace selrag::eval {

// SQuAD-style answer normalization: lowercase, drop ASCII punctuation, drop
// the whole-word articles a/an/the, collapse whitespace. Idempotent.
std::string normalize(std::string_view text);

// Whitespace tokens of normalize(text).
std::vector<std::string> normalized_tokens(std::string_view text);

// All three throw kInvalidArgument when golds is empty.
int exact_match(std::string_view pred, const std::vector<std::string>& golds);
// Token-multiset F1, maximized over golds.
double f1(std::string_view pred, const std::vector<std::string>& golds);
// 1 iff normalize(pred) contains normalize(gold) for some gold.
int accuracy(std::string_view pred, const std::vector<std::string>& golds);

// F1 against a single reference.
double f1_single(std::string_view pred, std::string_view gold);

}  // namespace selrag::eval
