#include "nfb/metrics.h"

#include <algorithm>

#include "nfb/error.h"

namespace nfb {

double RecallAtK(std::span<const RankedLabels> queries, std::size_t k) {
  if (queries.empty()) Fail(ErrorKind::kEmptyInput, "recall@k over zero queries");
  if (k == 0) Fail(ErrorKind::kOutOfRange, "recall@k needs k >= 1");
  std::size_t hits = 0;
  for (const auto& q : queries) {
    const auto end = q.ranked_labels.begin() +
                     static_cast<std::ptrdiff_t>(std::min(k, q.ranked_labels.size()));
    if (std::find(q.ranked_labels.begin(), end, q.true_label) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double MulticlassAccuracy(std::span<const LabelPrediction> predictions) {
  if (predictions.empty()) Fail(ErrorKind::kEmptyInput, "accuracy over zero predictions");
  std::size_t correct = 0;
  for (const auto& p : predictions) correct += p.true_label == p.predicted_label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace nfb
