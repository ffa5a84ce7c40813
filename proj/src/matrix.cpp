#include "cad/matrix.hpp"

namespace cad {

double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims disagree");
  Matrix c(a.rows(), b.cols());
  const int n = b.cols();
  for (int i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmulTransB(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmulTransB: inner dims disagree");
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int j = 0; j < b.rows(); ++j) ci[j] = dot(ai, b.row(j), a.cols());
  }
  return c;
}

Matrix matmulTransA(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmulTransA: inner dims disagree");
  Matrix c(a.cols(), b.cols());
  const int n = b.cols();
  for (int k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

void axpy(Matrix& dst, const Matrix& src, double scale) {
  checkSameShape(dst, src, "axpy");
  double* d = dst.data();
  const double* s = src.data();
  for (size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

void scaleInPlace(Matrix& m, double scale) {
  double* d = m.data();
  for (size_t i = 0; i < m.size(); ++i) d[i] *= scale;
}

Matrix colSums(const Matrix& m) {
  Matrix out(1, m.cols());
  double* o = out.data();
  for (int r = 0; r < m.rows(); ++r) {
    const double* mr = m.row(r);
    for (int c = 0; c < m.cols(); ++c) o[c] += mr[c];
  }
  return out;
}

void addRowVector(Matrix& m, const Matrix& v) {
  if (v.rows() != 1 || v.cols() != m.cols()) throw std::invalid_argument("addRowVector: bad vector shape");
  const double* vd = v.data();
  for (int r = 0; r < m.rows(); ++r) {
    double* mr = m.row(r);
    for (int c = 0; c < m.cols(); ++c) mr[c] += vd[c];
  }
}

}  // namespace cad
