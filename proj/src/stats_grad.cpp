#include "faircdc/stats_grad.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "faircdc/stats.hpp"

namespace faircdc {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double sum_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// C(i,j) = sum_u A(i,u) s(u) B(j,u).
Matrix mat_diag_mat_t(const Matrix& a, const std::vector<double>& s, const Matrix& b) {
  const std::size_t n = a.rows();
  Matrix c(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (std::size_t u = 0; u < n; ++u) acc += ai[u] * s[u] * bj[u];
      ci[j] = acc;
    }
  }
  return c;
}

// Chains dS/d dy(k,l) through the distance entries:
//   grad_k = sum_l (T(k,l) + T(l,k)) (y_k - y_l) / dy(k,l).
// tkl(k, l) must return T(k, l); coincident pairs contribute zero.
template <typename Tkl>
Matrix chain_through_distances(const Matrix& y, const Matrix& dy, Tkl&& tkl) {
  const std::size_t n = y.rows(), p = y.cols();
  Matrix grad(n, p, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < n; ++k) {
    double* gk = grad.row(k);
    for (std::size_t l = 0; l < n; ++l) {
      const double d = dy(k, l);
      if (l == k || d <= 0.0) continue;
      const double coef = (tkl(k, l) + tkl(l, k)) / d;
      for (std::size_t j = 0; j < p; ++j) gk[j] += coef * (y(k, j) - y(l, j));
    }
  }
  return grad;
}

GradientResult cdc_grad_general(const Matrix& y, const Matrix& dyv, const Matrix& dzv,
                                const KernelMatrix& km) {
  const Matrix& k = km.values;
  const std::size_t n = k.rows();
  const double dn = static_cast<double>(n);
  const double alpha = 12.0 / (dn * dn * dn * dn * dn);

  Matrix g, hm;
  mat_mul_square(dyv, k, g);
  mat_mul_square(dzv, k, hm);

  std::vector<double> w(n, 0.0), w2(n, 0.0), sy(n, 0.0), sz(n, 0.0), e3s(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t u = 0; u < n; ++u) {
    double ws = 0.0, sys = 0.0, szs = 0.0, e3 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double kiu = k(i, u);
      ws += kiu;
      sys += kiu * g(i, u);
      szs += kiu * hm(i, u);
      e3 += kiu * g(i, u) * hm(i, u);
    }
    w[u] = ws;
    w2[u] = ws * ws;
    sy[u] = sys;
    sz[u] = szs;
    e3s[u] = e3;
  }

  const Matrix m1 = mat_diag_mat_t(k, w2, k);
  const Matrix m2 = mat_diag_mat_t(k, sz, k);
  Matrix q(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) = k(i, j) * hm(i, j);
  const Matrix m3 = mat_diag_mat_t(q, w, k);

  std::vector<double> e1p(n, 0.0), e2p(n, 0.0), e3p(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += dyv(i, j) * dzv(i, j) * m1(i, j);
    e1p[i] = acc;
  }
  for (std::size_t u = 0; u < n; ++u) {
    e2p[u] = sy[u] * sz[u];
    e3p[u] = w[u] * e3s[u];
  }

  GradientResult result;
  result.value = alpha * (sum_in_order(e1p) + sum_in_order(e2p) - 2.0 * sum_in_order(e3p));
  result.grad = chain_through_distances(y, dyv, [&](std::size_t a, std::size_t b) {
    return alpha * (dzv(a, b) * m1(a, b) + m2(a, b) - 2.0 * m3(a, b));
  });
  return result;
}

GradientResult cdc_grad_grouped(const Matrix& y, const Matrix& dyv, const Matrix& dzv,
                                const Matrix& u, double h, const std::vector<int>& ids,
                                const std::vector<std::size_t>& counts) {
  const std::size_t n = u.rows(), d = u.cols(), m = counts.size();
  const double dn = static_cast<double>(n);
  const double alpha = 12.0 / (dn * dn * dn * dn * dn);
  const double pref = kInvSqrt2Pi / h;
  const double denom = 2.0 * h * h;

  std::vector<std::size_t> rep(m, 0);
  for (std::size_t i = n; i-- > 0;) rep[ids[i]] = i;
  Matrix kg(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double t = u(rep[a], c) - u(rep[b], c);
        sq += t * t;
      }
      kg(a, b) = pref * std::exp(-sq / denom);
    }
  }

  Matrix ry(n, m, 0.0), rz(n, m, 0.0), rw(n, m, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* yi = dyv.row(i);
    const double* zi = dzv.row(i);
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

  std::vector<double> szc(m, 0.0), syc(m, 0.0), e1c(m, 0.0), e3c(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    double sys = 0.0, szs = 0.0, e1 = 0.0, e3 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double kic = kg(static_cast<std::size_t>(ids[i]), c);
      sys += kic * hg(i, c);
      szs += kic * hh(i, c);
      e1 += kic * hp(i, c);
      e3 += kic * hg(i, c) * hh(i, c);
    }
    syc[c] = sys;
    szc[c] = szs;
    e1c[c] = e1;
    e3c[c] = e3;
  }

  double total = 0.0;
  for (std::size_t c = 0; c < m; ++c)
    total += static_cast<double>(counts[c]) *
             (wt[c] * wt[c] * e1c[c] + syc[c] * szc[c] - 2.0 * wt[c] * e3c[c]);

  // Group-level tables for the distance-entry partial derivatives.
  Matrix t1(m, m, 0.0), t2(m, m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double nk = static_cast<double>(counts[c]) * kg(a, c) * kg(b, c);
        s1 += nk * wt[c] * wt[c];
        s2 += nk * szc[c];
      }
      t1(a, b) = s1;
      t2(a, b) = s2;
    }
  }
  Matrix t3(n, m, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gi = static_cast<std::size_t>(ids[i]);
    for (std::size_t b = 0; b < m; ++b) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c)
        s += static_cast<double>(counts[c]) * wt[c] * kg(gi, c) * hh(i, c) * kg(b, c);
      t3(i, b) = s;
    }
  }

  GradientResult result;
  result.value = alpha * total;
  result.grad = chain_through_distances(y, dyv, [&](std::size_t a, std::size_t b) {
    const std::size_t ga = static_cast<std::size_t>(ids[a]);
    const std::size_t gb = static_cast<std::size_t>(ids[b]);
    return alpha * (dzv(a, b) * t1(ga, gb) + t2(ga, gb) - 2.0 * t3(a, gb));
  });
  return result;
}

constexpr std::size_t kMaxKernelGroups = 16;

}  // namespace

GradientResult dcov_grad(const Matrix& y, const Matrix& z) {
  check_same_rows(y, z, "y", "z");
  const std::size_t n = y.rows();
  const double dn = static_cast<double>(n);
  const Matrix a = pairwise_distances(y).values;
  const Matrix acent = double_center(a);
  const Matrix b = double_center(pairwise_distances(z).values);

  std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = acent.row(i);
    const double* bi = b.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += ai[j] * bi[j];
    partial[i] = s;
  }

  GradientResult result;
  result.value = sum_in_order(partial) / (dn * dn);
  const double scale = 2.0 / (dn * dn);
  result.grad = chain_through_distances(y, a, [&](std::size_t k, std::size_t l) {
    return 0.5 * scale * b(k, l);
  });
  return result;
}

GradientResult cdc_grad(const Matrix& y, const Matrix& z, const Matrix& u, double h) {
  check_same_rows(y, z, "y", "z");
  check_same_rows(y, u, "y", "u");
  check_batch(u, "u");
  if (!(h > 0.0))
    throw std::invalid_argument("cdc_grad: bandwidth must be positive, got " + std::to_string(h));
  const Matrix dyv = pairwise_distances(y).values;
  const Matrix dzv = pairwise_distances(z).values;
  std::vector<std::size_t> counts;
  const std::vector<int> ids = group_duplicate_rows(u, kMaxKernelGroups, &counts);
  if (!ids.empty()) return cdc_grad_grouped(y, dyv, dzv, u, h, ids, counts);
  return cdc_grad_general(y, dyv, dzv, gaussian_kernel(u, h));
}

Matrix numeric_grad(const std::function<double(const Matrix&)>& f, const Matrix& y, double step) {
  if (!(step > 0.0))
    throw std::invalid_argument("numeric_grad: step must be positive, got " + std::to_string(step));
  Matrix grad(y.rows(), y.cols());
  Matrix probe = y;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      const double fp = f(probe);
      probe(i, j) = orig - step;
      const double fm = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (fp - fm) / (2.0 * step);
    }
  }
  return grad;
}

}  // namespace faircdc
