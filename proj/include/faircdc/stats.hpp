#pragma once

#include <cstddef>
#include <vector>

#include "faircdc/matrix.hpp"

namespace faircdc {

// Euclidean pairwise distance matrix of a sample batch.
struct DistanceMatrix {
  Matrix values;
  std::size_t source_dim = 0;
};

// Kernel weight matrix over the conditioning samples.
struct KernelMatrix {
  Matrix values;
  double bandwidth = 0.0;
  std::size_t dim_u = 0;
};

struct DcovResult {
  double value = 0.0;
  std::size_t n = 0;
};

struct CdcResult {
  double value = 0.0;
  std::size_t n = 0;
  double bandwidth = 0.0;
  // Local conditional statistic D^2_n at each conditioning point.
  std::vector<double> per_point;
};

// d(i,j) = ||x_i - x_j||_2. Symmetric with a zero diagonal. Parallel over
// rows; each entry is an independent dot product so the result does not
// depend on the thread count.
DistanceMatrix pairwise_distances(const Matrix& x);

// U-centering of a square matrix:
//   A(k,l) = d(k,l) - rowmean(k) - colmean(l) + grandmean,
// all means taken over the full matrix including the diagonal.
Matrix double_center(const Matrix& d);

// Empirical distance covariance, matrix route:
//   V2_n(y, z) = (1/n^2) <A, B>
// with A, B the double-centered distance matrices of y and z. This is the
// parallel kernel used by training; dcov_direct and dcov_sform are the serial
// references it is tested against.
DcovResult dcov(const Matrix& y, const Matrix& z);

// Serial reference: centered entries formed one by one from explicitly
// accumulated row, column and grand means, then summed.
DcovResult dcov_direct(const Matrix& y, const Matrix& z);

// Serial reference via the moment form
//   V2_n = S1 + S2 - 2*S3,
//   S1 = (1/n^2) sum_ij a(i,j) b(i,j)
//   S2 = ((1/n^2) sum a) ((1/n^2) sum b)
//   S3 = (1/n^3) sum_i sum_j sum_l a(i,j) b(i,l),
// with a, b the raw distance matrices. S3 uses the explicit triple sum.
DcovResult dcov_sform(const Matrix& y, const Matrix& z);

// Rule-of-thumb bandwidth h = (n (r+2) / 4)^(-1/(r+4)) for n samples of a
// r-dimensional conditioning variable.
double silverman_bandwidth(std::size_t n, std::size_t r);

// Gaussian kernel weights K(k,l) = exp(-||u_k - u_l||^2 / (2 h^2)) / (sqrt(2 pi) h).
KernelMatrix gaussian_kernel(const Matrix& u, double h);

// Local conditional distance covariance at conditioning point u, computed
// directly from its definition with weights w(k) = K(k,u) / sum_k K(k,u):
//   D1 = sum_kl dy(k,l) dz(k,l) w(k) w(l)
//   D2 = (sum_kl dy(k,l) w(k) w(l)) (sum_kl dz(k,l) w(k) w(l))
//   D3 = sum_klm dy(k,l) dz(k,m) w(k) w(l) w(m)
//   D^2_n = D1 + D2 - 2*D3.
// The D3 triple sum is explicit; this is the serial reference route.
double cdc_local(const DistanceMatrix& dy, const DistanceMatrix& dz, const KernelMatrix& k,
                 std::size_t u);

// Serial reference for the aggregate conditional statistic:
//   S_n = (12/n) sum_u (W_u/n)^4 D^2_n(u),  W_u = sum_i K(i,u).
CdcResult cdc_stat_direct(const Matrix& y, const Matrix& z, const Matrix& u, double h);

// Matrix route for the aggregate conditional statistic, no explicit triple
// loop:
//   S_n = (12/n^5) (E1 + E2 - 2*E3)
//   E1 = sum_u W_u^2 [K^T (Dy .* Dz) K](u,u)
//   E2 = sum_u [K^T Dy K](u,u) [K^T Dz K](u,u)
//   E3 = sum_u W_u [K^T ((Dy K) .* (Dz K))](u,u).
// Parallel kernel; reductions use fixed-order per-row partials so the value
// is independent of the thread count. When u has few distinct rows (one-hot
// labels in training) an algebraically identical grouped path replaces the
// O(n^3) products with O(n^2 m) sums over the m distinct values.
CdcResult cdc_stat(const Matrix& y, const Matrix& z, const Matrix& u, double h);

// C = A * B for square row-major matrices, parallel over rows of C.
void mat_mul_square(const Matrix& a, const Matrix& b, Matrix& c);

// Groups equal rows of u. Returns group ids in first-appearance order and
// fills counts; returns an empty vector if the number of distinct rows
// exceeds max_groups.
std::vector<int> group_duplicate_rows(const Matrix& u, std::size_t max_groups,
                                      std::vector<std::size_t>* counts);

}  // namespace faircdc
