#include "nfb/tensor.h"

#include <cmath>
#include <string>

#include "nfb/error.h"

namespace nfb {

std::string_view ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kDegenerateVector: return "DegenerateVector";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kValidationError: return "ValidationError";
    case ErrorKind::kVersionError: return "VersionError";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kInsufficientViews: return "InsufficientViews";
    case ErrorKind::kConfigMismatch: return "ConfigMismatch";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kMissingCaption: return "MissingCaption";
    case ErrorKind::kMissingAnchor: return "MissingAnchor";
    case ErrorKind::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::kDuplicateId: return "DuplicateId";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ToString(kind)) + ": " + message), kind_(kind) {}

void Fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    Fail(ErrorKind::kDimensionMismatch,
         "matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
             std::to_string(data_.size()) + " values");
  }
}

template <typename T>
bool AllFinite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
double Dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    Fail(ErrorKind::kDimensionMismatch,
         "dot of " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <typename T>
double Norm(std::span<const T> a) {
  return std::sqrt(Dot<T>(a, a));
}

template <typename T>
double CosineSimilarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    Fail(ErrorKind::kDimensionMismatch,
         "cosine of " + std::to_string(a.size()) + "-d and " + std::to_string(b.size()) + "-d");
  }
  const double na = Norm<T>(a);
  const double nb = Norm<T>(b);
  if (na <= kNormEpsilon || nb <= kNormEpsilon) {
    Fail(ErrorKind::kDegenerateVector, "cosine similarity of a zero-norm vector");
  }
  return Dot<T>(a, b) / (na * nb);
}

template <typename T>
CosineLoss<T> CosineLossAndGrad(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size()) {
    Fail(ErrorKind::kDimensionMismatch,
         "loss between " + std::to_string(pred.size()) + "-d prediction and " +
             std::to_string(target.size()) + "-d target");
  }
  const double np = Norm<T>(pred);
  const double nt = Norm<T>(target);
  if (np <= kNormEpsilon) Fail(ErrorKind::kDegenerateVector, "prediction has zero norm");
  if (nt <= kNormEpsilon) Fail(ErrorKind::kDegenerateVector, "target has zero norm");
  const double cos = Dot<T>(pred, target) / (np * nt);

  // d/dp [1 - cos] = -(t/|t| - cos * p/|p|) / |p|
  CosineLoss<T> out;
  out.loss = 1.0 - cos;
  out.grad = BasicVector<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = -(static_cast<double>(target[i]) / nt - cos * static_cast<double>(pred[i]) / np) / np;
    out.grad[i] = static_cast<T>(g);
  }
  return out;
}

template <typename T>
BasicVector<T> MeanRows(const BasicMatrix<T>& m) {
  if (m.rows() == 0) Fail(ErrorKind::kEmptyInput, "mean of zero rows");
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) acc[c] += static_cast<double>(row[c]);
  }
  BasicVector<T> out(m.cols());
  const double n = static_cast<double>(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = static_cast<T>(acc[c] / n);
  return out;
}

template <typename T>
BasicMatrix<T> StackRows(std::span<const BasicVector<T>> rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().dim();
  BasicMatrix<T> out(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].dim() != cols) {
      Fail(ErrorKind::kDimensionMismatch, "row " + std::to_string(r) + " has dim " +
                                              std::to_string(rows[r].dim()) + ", expected " +
                                              std::to_string(cols));
    }
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

#define NFB_INSTANTIATE(T)                                                              \
  template class BasicMatrix<T>;                                                        \
  template bool AllFinite<T>(std::span<const T>);                                       \
  template double Dot<T>(std::span<const T>, std::span<const T>);                       \
  template double Norm<T>(std::span<const T>);                                          \
  template double CosineSimilarity<T>(std::span<const T>, std::span<const T>);          \
  template CosineLoss<T> CosineLossAndGrad<T>(std::span<const T>, std::span<const T>); \
  template BasicVector<T> MeanRows<T>(const BasicMatrix<T>&);                           \
  template BasicMatrix<T> StackRows<T>(std::span<const BasicVector<T>>);

NFB_INSTANTIATE(float)
NFB_INSTANTIATE(double)

#undef NFB_INSTANTIATE

}  // namespace nfb
