#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace nfb {

// Dense vector. float is the storage type for embeddings; double instances
// exist for gradient checking.
template <typename T>
class BasicVector {
 public:
  using value_type = T;

  BasicVector() = default;
  explicit BasicVector(std::size_t dim, T fill = T(0)) : data_(dim, fill) {}
  explicit BasicVector(std::vector<T> data) : data_(std::move(data)) {}
  BasicVector(std::initializer_list<T> values) : data_(values) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& raw() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  friend bool operator==(const BasicVector&, const BasicVector&) = default;

 private:
  std::vector<T> data_;
};

// Row-major dense matrix.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Throws kDimensionMismatch unless data.size() == rows * cols.
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Vector = BasicVector<float>;
using Matrix = BasicMatrix<float>;
using VectorD = BasicVector<double>;
using MatrixD = BasicMatrix<double>;

// Norm floor below which a vector has no usable direction.
inline constexpr double kNormEpsilon = 1e-12;

template <typename T>
bool AllFinite(std::span<const T> values);

// Dot product and norm accumulate in double regardless of T.
template <typename T>
double Dot(std::span<const T> a, std::span<const T> b);

template <typename T>
double Norm(std::span<const T> a);

// a.b / (|a||b|). Throws kDimensionMismatch or kDegenerateVector.
template <typename T>
double CosineSimilarity(std::span<const T> a, std::span<const T> b);

template <typename T>
double CosineSimilarity(const BasicVector<T>& a, const BasicVector<T>& b) {
  return CosineSimilarity<T>(a.values(), b.values());
}

template <typename T>
struct CosineLoss {
  double loss = 0.0;
  BasicVector<T> grad;  // d(1 - cos(pred, target)) / d pred
};

// loss = 1 - cos(pred, target); target is a constant.
template <typename T>
CosineLoss<T> CosineLossAndGrad(std::span<const T> pred, std::span<const T> target);

template <typename T>
CosineLoss<T> CosineLossAndGrad(const BasicVector<T>& pred, const BasicVector<T>& target) {
  return CosineLossAndGrad<T>(pred.values(), target.values());
}

// Arithmetic mean of the rows, not renormalized. Throws kEmptyInput on zero rows.
template <typename T>
BasicVector<T> MeanRows(const BasicMatrix<T>& m);

// Stacks equally sized vectors into a matrix (one per row).
template <typename T>
BasicMatrix<T> StackRows(std::span<const BasicVector<T>> rows);

template <typename To, typename From>
BasicMatrix<To> CastMatrix(const BasicMatrix<From>& m) {
  BasicMatrix<To> out(m.rows(), m.cols());
  auto src = m.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

template <typename To, typename From>
BasicVector<To> CastVector(const BasicVector<From>& v) {
  BasicVector<To> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = static_cast<To>(v[i]);
  return out;
}

}  // namespace nfb
