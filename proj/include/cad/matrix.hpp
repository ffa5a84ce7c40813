#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cad {

// Dense row-major matrix of doubles. Row vectors are 1xN matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void setZero() { std::fill(data_.begin(), data_.end(), 0.0); }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool allFinite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  // Copy of rows [begin, end).
  Matrix rowSlice(int begin, int end) const {
    if (begin < 0 || end > rows_ || begin > end) throw std::out_of_range("Matrix::rowSlice");
    Matrix out(end - begin, cols_);
    std::copy(row(begin), row(begin) + static_cast<size_t>(end - begin) * cols_, out.data());
    return out;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline void checkSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T  (the workhorse for framewise affine layers with weights stored out x in)
Matrix matmulTransB(const Matrix& a, const Matrix& b);
// C = A^T * B  (weight gradients from stacked per-frame grads)
Matrix matmulTransA(const Matrix& a, const Matrix& b);

// dst += scale * src
void axpy(Matrix& dst, const Matrix& src, double scale = 1.0);
void scaleInPlace(Matrix& m, double scale);
// Sum of each column as a 1xN row vector.
Matrix colSums(const Matrix& m);
// Adds a 1xN row vector to every row.
void addRowVector(Matrix& m, const Matrix& v);

double dot(const double* a, const double* b, int n);

}  // namespace cad
