#include <algorithm>

#include "nfb/dataset.h"
#include "nfb/error.h"
#include "nfb/prng.h"

namespace nfb {

std::vector<std::size_t> SelectViewIndices(const ObjectRecord& record, std::size_t n,
                                           ViewSourceSet filter, std::uint64_t seed) {
  std::vector<std::size_t> matching;
  for (std::size_t i = 0; i < record.views.size(); ++i) {
    if (filter.Contains(record.views[i].source)) matching.push_back(i);
  }
  if (n == 0 || matching.size() < n) {
    Fail(ErrorKind::kInsufficientViews,
         "record '" + record.id + "' has " + std::to_string(matching.size()) + " views from {" +
             filter.ToString() + "}, " + std::to_string(n) + " requested");
  }
  Xoshiro256 rng(DeriveSeed(seed, Fnv1a64(record.id)));
  const auto order = Permutation(matching.size(), rng);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t k = 0; k < n; ++k) chosen.push_back(matching[order[k]]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<Vector> SelectViews(const ObjectRecord& record, std::size_t n, ViewSourceSet filter,
                                std::uint64_t seed) {
  std::vector<Vector> out;
  for (auto i : SelectViewIndices(record, n, filter, seed)) {
    out.push_back(record.views[i].embedding);
  }
  return out;
}

std::vector<ObjectRecord> ComposeSyn2Real(const std::vector<ObjectRecord>& records,
                                          std::size_t n_synthetic, std::size_t n_generated,
                                          std::uint64_t seed) {
  std::vector<ObjectRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    ObjectRecord merged = r;
    merged.views.clear();
    if (n_synthetic > 0) {
      for (auto i : SelectViewIndices(r, n_synthetic, ViewSourceSet::Synthetic(), seed)) {
        merged.views.push_back(r.views[i]);
      }
    }
    if (n_generated > 0) {
      for (auto i : SelectViewIndices(r, n_generated, {ViewSource::kGenerated}, seed)) {
        merged.views.push_back(r.views[i]);
      }
    }
    if (merged.views.empty()) {
      Fail(ErrorKind::kInsufficientViews, "syn2real composition of zero views for '" + r.id + "'");
    }
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace nfb
