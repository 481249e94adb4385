#pragma once

// Reference computations for tests. Everything here is written from the
// definitions, without calling the library routine under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nfb/mlp.h"
#include "nfb/tensor.h"

namespace nfb::oracle {

// erf by its Maclaurin series in long double; accurate for |x| <= 3.
inline long double ErfSeries(long double x) {
  const long double pi = 3.141592653589793238462643383279502884L;
  long double term = x;  // (-1)^n x^(2n+1) / n!
  long double sum = 0.0L;
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
    if (std::fabs(term) < 1e-30L) break;
  }
  return 2.0L / std::sqrt(pi) * sum;
}

inline long double Phi(long double x) {
  return 0.5L * (1.0L + ErfSeries(x / std::sqrt(2.0L)));
}

inline long double PhiDensity(long double x) {
  const long double pi = 3.141592653589793238462643383279502884L;
  return std::exp(-0.5L * x * x) / std::sqrt(2.0L * pi);
}

inline double Gelu(double x) { return static_cast<double>(x * Phi(x)); }
inline double GeluGrad(double x) { return static_cast<double>(Phi(x) + x * PhiDensity(x)); }

inline double Cos(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Plain scalar forward pass: GELU after every layer but the last.
inline std::vector<double> Forward(const MlpParamsD& p, std::vector<double> x) {
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    const auto& w = p.weights[k];
    std::vector<double> y(w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double s = p.biases[k][o];
      for (std::size_t i = 0; i < w.cols(); ++i) s += w(o, i) * x[i];
      y[o] = k + 1 < p.num_layers() ? Gelu(s) : s;
    }
    x = std::move(y);
  }
  return x;
}

// Mean over rows of 1 - cos(f(x_b), y_b).
inline double MeanCosineLoss(const MlpParamsD& p, const MatrixD& x, const MatrixD& y) {
  double total = 0.0;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const auto out = Forward(p, {x.row(b).begin(), x.row(b).end()});
    total += 1.0 - Cos(out, {y.row(b).begin(), y.row(b).end()});
  }
  return total / static_cast<double>(x.rows());
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t entries = 0;
};

// |a - n| / max(|a|, |n|, floor)
inline double RelErr(double a, double n, double floor) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

// Compares `analytic` (same layout as params) with central differences of
// MeanCosineLoss at step h.
inline GradCheck CompareWithFiniteDifferences(MlpParamsD p, const MatrixD& x, const MatrixD& y,
                                              const GradientBufferD& analytic, double h,
                                              double floor) {
  GradCheck r;
  auto probe = [&](double& slot, double a) {
    const double saved = slot;
    slot = saved + h;
    const double up = MeanCosineLoss(p, x, y);
    slot = saved - h;
    const double down = MeanCosineLoss(p, x, y);
    slot = saved;
    const double numeric = (up - down) / (2.0 * h);
    r.max_rel_err = std::max(r.max_rel_err, RelErr(a, numeric, floor));
    ++r.entries;
  };
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    auto w = p.weights[k].values();
    auto gw = analytic.weights[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], gw[i]);
    auto b = p.biases[k].values();
    auto gb = analytic.biases[k].values();
    for (std::size_t i = 0; i < b.size(); ++i) probe(b[i], gb[i]);
  }
  return r;
}

inline MatrixD RandomMatrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixD m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline MlpParamsD RandomMlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
  auto p = MlpParamsD::Zeros(dims);
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    const double bound = 1.5 / std::sqrt(static_cast<double>(dims[k]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : p.weights[k].values()) v = u(rng);
    for (double& v : p.biases[k].values()) v = 0.2 * u(rng);
  }
  return p;
}

struct Ranked {
  std::size_t index;
  double score;
};

// Unit row as stored: normalized in double, rounded to float.
inline std::vector<double> StoredRow(const std::vector<float>& e) {
  double sq = 0;
  for (float v : e) sq += double(v) * v;
  const double norm = std::sqrt(sq);
  std::vector<double> out;
  for (float v : e) out.push_back(static_cast<float>(v / norm));
  return out;
}

// Full sort by (-score, index); score = stored row . query / |query|.
inline std::vector<Ranked> BruteForceTopK(const std::vector<std::vector<float>>& entries,
                                          const std::vector<float>& query, std::size_t k,
                                          long exclude = -1) {
  double qq = 0;
  for (float v : query) qq += double(v) * v;
  const double qnorm = std::sqrt(qq);
  std::vector<Ranked> all;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (static_cast<long>(i) == exclude) continue;
    const auto row = StoredRow(entries[i]);
    double dot = 0;
    for (std::size_t j = 0; j < row.size(); ++j) dot += row[j] * query[j];
    all.push_back({i, dot / qnorm});
  }
  std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace nfb::oracle
