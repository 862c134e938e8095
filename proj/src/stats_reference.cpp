// Serial reference implementations that follow the defining sums term by
// term. They are kept for testing and benchmarking against the matrix-form
// kernels in stats.cpp.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "faircdc/stats.hpp"

namespace faircdc {

namespace {

Matrix serial_distances(const Matrix& x) {
  check_batch(x, "samples");
  const std::size_t n = x.rows(), d = x.cols();
  Matrix out(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double t = x(i, c) - x(j, c);
        s += t * t;
      }
      out(i, j) = std::sqrt(s);
    }
  }
  return out;
}

}  // namespace

DcovResult dcov_direct(const Matrix& y, const Matrix& z) {
  check_same_rows(y, z, "y", "z");
  const Matrix a = serial_distances(y);
  const Matrix b = serial_distances(z);
  const std::size_t n = y.rows();
  const double dn = static_cast<double>(n);

  std::vector<double> arow(n, 0.0), acol(n, 0.0), brow(n, 0.0), bcol(n, 0.0);
  double agrand = 0.0, bgrand = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      arow[k] += a(k, l);
      acol[l] += a(k, l);
      agrand += a(k, l);
      brow[k] += b(k, l);
      bcol[l] += b(k, l);
      bgrand += b(k, l);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    arow[k] /= dn;
    acol[k] /= dn;
    brow[k] /= dn;
    bcol[k] /= dn;
  }
  agrand /= dn * dn;
  bgrand /= dn * dn;

  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l)
      total += (a(k, l) - arow[k] - acol[l] + agrand) * (b(k, l) - brow[k] - bcol[l] + bgrand);
  return {total / (dn * dn), n};
}

DcovResult dcov_sform(const Matrix& y, const Matrix& z) {
  check_same_rows(y, z, "y", "z");
  const Matrix a = serial_distances(y);
  const Matrix b = serial_distances(z);
  const std::size_t n = y.rows();
  const double dn = static_cast<double>(n);

  double s1 = 0.0, asum = 0.0, bsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s1 += a(i, j) * b(i, j);
      asum += a(i, j);
      bsum += b(i, j);
    }
  }
  s1 /= dn * dn;
  const double s2 = (asum / (dn * dn)) * (bsum / (dn * dn));

  double s3 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) s3 += a(i, j) * b(i, l);
  s3 /= dn * dn * dn;

  return {s1 + s2 - 2.0 * s3, n};
}

double cdc_local(const DistanceMatrix& dy, const DistanceMatrix& dz, const KernelMatrix& k,
                 std::size_t u) {
  const std::size_t n = dy.values.rows();
  if (dz.values.rows() != n || k.values.rows() != n)
    throw std::invalid_argument("cdc_local: distance and kernel matrices disagree on n");
  if (u >= n) throw std::invalid_argument("cdc_local: conditioning index out of range");

  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) wsum += k.values(i, u);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = k.values(i, u) / wsum;

  double d1 = 0.0, ty = 0.0, tz = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double wab = w[a] * w[b];
      d1 += dy.values(a, b) * dz.values(a, b) * wab;
      ty += dy.values(a, b) * wab;
      tz += dz.values(a, b) * wab;
    }
  }
  const double d2 = ty * tz;

  double d3 = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t m = 0; m < n; ++m)
        d3 += dy.values(a, b) * dz.values(a, m) * w[a] * w[b] * w[m];

  return d1 + d2 - 2.0 * d3;
}

CdcResult cdc_stat_direct(const Matrix& y, const Matrix& z, const Matrix& u, double h) {
  check_same_rows(y, z, "y", "z");
  check_same_rows(y, u, "y", "u");
  const DistanceMatrix dy = pairwise_distances(y);
  const DistanceMatrix dz = pairwise_distances(z);
  const KernelMatrix k = gaussian_kernel(u, h);
  const std::size_t n = y.rows();
  const double dn = static_cast<double>(n);

  CdcResult result;
  result.n = n;
  result.bandwidth = h;
  result.per_point.resize(n);
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) wsum += k.values(i, p);
    const double frac = wsum / dn;
    result.per_point[p] = cdc_local(dy, dz, k, p);
    total += frac * frac * frac * frac * result.per_point[p];
  }
  result.value = 12.0 * total / dn;
  return result;
}

}  // namespace faircdc
