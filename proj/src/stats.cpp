#include "faircdc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace faircdc {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

double sum_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

DistanceMatrix pairwise_distances(const Matrix& x) {
  check_batch(x, "samples");
  const std::size_t n = x.rows(), d = x.cols();
  Matrix out(n, n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dist = std::sqrt(squared_distance(x.row(i), x.row(j), d));
      out(i, j) = dist;
      out(j, i) = dist;
    }
  }
  DistanceMatrix result;
  result.values = std::move(out);
  result.source_dim = d;
  return result;
}

Matrix double_center(const Matrix& d) {
  if (d.rows() != d.cols())
    throw std::invalid_argument("double_center: matrix must be square, got " +
                                std::to_string(d.rows()) + "x" + std::to_string(d.cols()));
  const std::size_t n = d.rows();
  const double dn = static_cast<double>(n);
  std::vector<double> rowm(n, 0.0), colsum(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = d.row(i);
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      rs += ri[j];
      colsum[j] += ri[j];
    }
    rowm[i] = rs / dn;
    grand += rs;
  }
  grand /= dn * dn;
  Matrix a(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = d.row(i);
    double* ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) ai[j] = ri[j] - rowm[i] - colsum[j] / dn + grand;
  }
  return a;
}

DcovResult dcov(const Matrix& y, const Matrix& z) {
  check_same_rows(y, z, "y", "z");
  const std::size_t n = y.rows();
  const Matrix a = double_center(pairwise_distances(y).values);
  const Matrix b = double_center(pairwise_distances(z).values);
  std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += ai[j] * bi[j];
    partial[i] = s;
  }
  const double dn = static_cast<double>(n);
  return {sum_in_order(partial) / (dn * dn), n};
}

double silverman_bandwidth(std::size_t n, std::size_t r) {
  if (n == 0) throw std::invalid_argument("silverman_bandwidth: n must be positive");
  if (r == 0) throw std::invalid_argument("silverman_bandwidth: r must be positive");
  const double base = static_cast<double>(n) * (static_cast<double>(r) + 2.0) / 4.0;
  return std::pow(base, -1.0 / (static_cast<double>(r) + 4.0));
}

KernelMatrix gaussian_kernel(const Matrix& u, double h) {
  check_batch(u, "u");
  if (!(h > 0.0))
    throw std::invalid_argument("gaussian_kernel: bandwidth must be positive, got " +
                                std::to_string(h));
  const std::size_t n = u.rows(), r = u.cols();
  const double pref = kInvSqrt2Pi / h;
  const double denom = 2.0 * h * h;
  Matrix k(n, n, pref);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = pref * std::exp(-squared_distance(u.row(i), u.row(j), r) / denom);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  KernelMatrix result;
  result.values = std::move(k);
  result.bandwidth = h;
  result.dim_u = r;
  return result;
}

void mat_mul_square(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows();
  c = Matrix(n, n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) ci[j] += t * bk[j];
    }
  }
}

std::vector<int> group_duplicate_rows(const Matrix& u, std::size_t max_groups,
                                      std::vector<std::size_t>* counts) {
  const std::size_t n = u.rows(), d = u.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(u.row(a), u.row(a) + d, u.row(b), u.row(b) + d);
  };
  auto row_equal = [&](std::size_t a, std::size_t b) {
    return std::equal(u.row(a), u.row(a) + d, u.row(b));
  };
  std::sort(order.begin(), order.end(), row_less);

  std::vector<int> sorted_gid(n, 0);
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (!row_equal(order[i], order[i - 1])) {
      ++distinct;
      if (distinct > max_groups) return {};
    }
    sorted_gid[order[i]] = static_cast<int>(distinct - 1);
  }

  // Renumber groups in first-appearance order.
  std::vector<int> remap(distinct, -1);
  std::vector<int> ids(n);
  if (counts) counts->assign(distinct, 0);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int& slot = remap[sorted_gid[i]];
    if (slot < 0) slot = next++;
    ids[i] = slot;
    if (counts) ++(*counts)[slot];
  }
  return ids;
}

namespace {

// General matrix route over a full kernel matrix. Three O(n^3) products, then
// an O(n^2) per-point assembly with fixed-order reductions.
CdcResult cdc_stat_general(const DistanceMatrix& dy, const DistanceMatrix& dz,
                           const KernelMatrix& km) {
  const Matrix& k = km.values;
  const std::size_t n = k.rows();
  const double dn = static_cast<double>(n);

  Matrix prod(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* yi = dy.values.row(i);
    const double* zi = dz.values.row(i);
    double* pi = prod.row(i);
    for (std::size_t j = 0; j < n; ++j) pi[j] = yi[j] * zi[j];
  }

  Matrix g, hm, p;
  mat_mul_square(dy.values, k, g);
  mat_mul_square(dz.values, k, hm);
  mat_mul_square(prod, k, p);

  std::vector<double> contrib(n, 0.0);
  CdcResult result;
  result.n = n;
  result.bandwidth = km.bandwidth;
  result.per_point.assign(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t u = 0; u < n; ++u) {
    double w = 0.0, e1s = 0.0, gs = 0.0, hs = 0.0, e3s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double kiu = k(i, u);
      w += kiu;
      e1s += kiu * p(i, u);
      gs += kiu * g(i, u);
      hs += kiu * hm(i, u);
      e3s += kiu * g(i, u) * hm(i, u);
    }
    const double e = w * w * e1s + gs * hs - 2.0 * w * e3s;
    contrib[u] = e;
    result.per_point[u] = e / (w * w * w * w);
  }
  result.value = 12.0 * sum_in_order(contrib) / (dn * dn * dn * dn * dn);
  return result;
}

// Grouped route for conditioning variables with few distinct rows. The kernel
// column for a point depends only on its group, so every kernel product
// collapses to per-group sums. Algebraically identical to the general route.
CdcResult cdc_stat_grouped(const DistanceMatrix& dy, const DistanceMatrix& dz, const Matrix& u,
                           double h, const std::vector<int>& ids,
                           const std::vector<std::size_t>& counts) {
  const std::size_t n = u.rows(), d = u.cols(), m = counts.size();
  const double dn = static_cast<double>(n);
  const double pref = kInvSqrt2Pi / h;
  const double denom = 2.0 * h * h;

  // Representative row per group, then the m x m kernel table.
  std::vector<std::size_t> rep(m, 0);
  for (std::size_t i = n; i-- > 0;) rep[ids[i]] = i;
  Matrix kg(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      kg(a, b) = pref * std::exp(-squared_distance(u.row(rep[a]), u.row(rep[b]), d) / denom);

  // Per-row sums of dy, dz and dy.*dz over each group of columns.
  Matrix ry(n, m, 0.0), rz(n, m, 0.0), rw(n, m, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* yi = dy.values.row(i);
    const double* zi = dz.values.row(i);
    for (std::size_t l = 0; l < n; ++l) {
      const std::size_t c = static_cast<std::size_t>(ids[l]);
      ry(i, c) += yi[l];
      rz(i, c) += zi[l];
      rw(i, c) += yi[l] * zi[l];
    }
  }

  std::vector<double> wt(m, 0.0);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t b = 0; b < m; ++b) wt[c] += static_cast<double>(counts[b]) * kg(b, c);

  // hatG(i,c) = sum_b kg(b,c) ry(i,b), and likewise for dz and dy.*dz.
  Matrix hg(n, m, 0.0), hh(n, m, 0.0), hp(n, m, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double sg = 0.0, sh = 0.0, sp = 0.0;
      for (std::size_t b = 0; b < m; ++b) {
        sg += kg(b, c) * ry(i, b);
        sh += kg(b, c) * rz(i, b);
        sp += kg(b, c) * rw(i, b);
      }
      hg(i, c) = sg;
      hh(i, c) = sh;
      hp(i, c) = sp;
    }
  }

  std::vector<double> local(m, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double e1s = 0.0, gs = 0.0, hs = 0.0, e3s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double kic = kg(static_cast<std::size_t>(ids[i]), c);
      e1s += kic * hp(i, c);
      gs += kic * hg(i, c);
      hs += kic * hh(i, c);
      e3s += kic * hg(i, c) * hh(i, c);
    }
    const double e = wt[c] * wt[c] * e1s + gs * hs - 2.0 * wt[c] * e3s;
    local[c] = e / (wt[c] * wt[c] * wt[c] * wt[c]);
    total += static_cast<double>(counts[c]) * e;
  }

  CdcResult result;
  result.n = n;
  result.bandwidth = h;
  result.value = 12.0 * total / (dn * dn * dn * dn * dn);
  result.per_point.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.per_point[i] = local[static_cast<std::size_t>(ids[i])];
  return result;
}

constexpr std::size_t kMaxKernelGroups = 16;

}  // namespace

CdcResult cdc_stat(const Matrix& y, const Matrix& z, const Matrix& u, double h) {
  check_same_rows(y, z, "y", "z");
  check_same_rows(y, u, "y", "u");
  check_batch(u, "u");
  if (!(h > 0.0))
    throw std::invalid_argument("cdc_stat: bandwidth must be positive, got " + std::to_string(h));
  const DistanceMatrix dy = pairwise_distances(y);
  const DistanceMatrix dz = pairwise_distances(z);
  std::vector<std::size_t> counts;
  const std::vector<int> ids = group_duplicate_rows(u, kMaxKernelGroups, &counts);
  if (!ids.empty()) return cdc_stat_grouped(dy, dz, u, h, ids, counts);
  return cdc_stat_general(dy, dz, gaussian_kernel(u, h));
}

}  // namespace faircdc
