#pragma once
// Hand-scored fixtures shared by unit and acceptance tests.

#include <string>
#include <vector>

namespace fixture {

struct ScoredItem {
  std::string id;
  std::string pred;
  std::vector<std::string> golds;
  int em;
  double f1;
  int acc;
};

// Each row scored by hand from the normalization and metric definitions.
inline const std::vector<ScoredItem>& metric_items() {
  static const std::vector<ScoredItem> items = {
      // o=3 of |gold|=4 tokens: P=1, R=3/4.
      {"m01", "Kensington and Chelsea", {"Kensington and Chelsea (borough)"}, 0, 6.0 / 7.0, 0},
      {"m02", "practice", {"Practice"}, 1, 1.0, 1},
      // pred tokens: in context of television ratings (5); gold 2; o=2.
      {"m03", "In the context of television ratings", {"Television Ratings"}, 0, 4.0 / 7.0, 1},
      {"m04", "Paris", {"Paris, France", "Paris"}, 1, 1.0, 1},
      {"m05", "The Eiffel Tower!", {"eiffel tower"}, 1, 1.0, 1},
      {"m06", "blue whale", {"whale shark"}, 0, 0.5, 0},
      {"m07", "", {"yes"}, 0, 0.0, 0},
      {"m08", "William Shakespeare", {"Shakespeare"}, 0, 2.0 / 3.0, 1},
      {"m09", "1969", {"July 1969", "1969"}, 1, 1.0, 1},
      {"m10", "carbon monoxide", {"carbon dioxide"}, 0, 0.5, 0},
  };
  return items;
}

// Hand totals: EM 4/10, F1 (149/21)/10, Acc 6/10.
inline constexpr double kMetricEm = 0.4;
inline constexpr double kMetricF1 = 149.0 / 210.0;
inline constexpr double kMetricAcc = 0.6;

}  // namespace fixture

#include "selrag/corpus.hpp"
#include "selrag/llm.hpp"
#include "selrag/pipeline.hpp"
#include "selrag/qa.hpp"
#include "selrag/retrieval.hpp"

namespace fixture {

// Four questions whose scripted candidates land in each judgment cell:
// (right, wrong), (wrong, right), (right, right), (wrong, wrong).
struct TruthTable {
  std::vector<selrag::QAPair> qa;
  std::vector<selrag::llm::ScriptedBehavior> script;
  selrag::retrieval::Bm25Index index;
};

inline TruthTable truth_table() {
  using selrag::pipeline::llm_script_key;
  using selrag::pipeline::rag_script_key;
  struct Row {
    const char* id;
    const char* q;
    const char* gold;
    const char* internal;
    const char* grounded;
  };
  const Row rows[] = {
      {"tt1", "What does Ctrl+Shift+T do?", "New tab", "New tab", "T"},
      {"tt2", "Which borough did Michael Portillo represent?", "Kensington and Chelsea",
       "Enfield Southgate", "Kensington and Chelsea"},
      {"tt3", "What is the capital of France?", "Paris", "Paris", "Paris, France"},
      {"tt4", "Who was president in 1955?", "Dwight D Eisenhower", "California", "Truman"},
  };
  std::vector<selrag::corpus::Passage> passages = {
      {"c1", "Shortcut", "Ctrl Shift T reopens the last closed browser tab"},
      {"c2", "Portillo", "Michael Portillo represented Kensington and Chelsea borough"},
      {"c3", "France", "Paris is the capital of France"},
      {"c4", "President", "Eisenhower was president in 1955"},
  };
  TruthTable t{{}, {}, selrag::retrieval::Bm25Index::build(
                           selrag::corpus::Corpus::from_passages(passages, selrag::retrieval::tokenize))};
  for (const auto& r : rows) {
    t.qa.push_back({r.id, r.q, {r.gold}});
    t.script.push_back({llm_script_key(r.q), std::string("Explanation: from memory. Answer: ") + r.internal});
    t.script.push_back({rag_script_key(r.q), std::string("Explanation: from passages. Answer: ") + r.grounded});
  }
  return t;
}

}  // namespace fixture
