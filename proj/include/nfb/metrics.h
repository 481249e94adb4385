#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nfb {

struct RankedLabels {
  std::string true_label;
  std::vector<std::string> ranked_labels;  // best first
};

struct LabelPrediction {
  std::string true_label;
  std::string predicted_label;
};

// Fraction of queries with a same-label entry among the first k ranked
// labels. A list shorter than k (small gallery) counts what it has.
// Throws kEmptyInput, kOutOfRange for k == 0.
double RecallAtK(std::span<const RankedLabels> queries, std::size_t k);

// Throws kEmptyInput.
double MulticlassAccuracy(std::span<const LabelPrediction> predictions);

}  // namespace nfb
