#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vgsi/error.hpp"

namespace vgsi {

/// Dense row-major matrix. Storage type T; reductions elsewhere use double.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename A, typename B>
double dot64(std::span<const A> u, std::span<const B> v) {
  assert(u.size() == v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  return s;
}

template <typename A>
double norm64(std::span<const A> u) {
  return std::sqrt(dot64(u, u));
}

/// Row vector times matrix: out = x * W, accumulated in double.
template <typename X, typename T>
std::vector<double> project(std::span<const X> x, const Matrix<T>& w) {
  if (x.size() != w.rows()) throw Error("projection dimension mismatch: input " + std::to_string(x.size()) +
                                        " vs weight rows " + std::to_string(w.rows()));
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = static_cast<double>(x[i]);
    if (xi == 0.0) continue;
    const auto wr = w.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xi * static_cast<double>(wr[j]);
  }
  return out;
}

}  // namespace vgsi
