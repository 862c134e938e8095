#pragma once

#include <functional>

#include "faircdc/matrix.hpp"

namespace faircdc {

struct GradientResult {
  Matrix grad;  // same shape as the first argument
  double value = 0.0;
};

// Value and gradient of dcov(y, z) with respect to y:
//   dV/dy_k = (2/n^2) sum_l B(k,l) (y_k - y_l) / ||y_k - y_l||,
// B the double-centered distance matrix of z. Coincident pairs contribute
// zero (the zero element of the subgradient).
GradientResult dcov_grad(const Matrix& y, const Matrix& z);

// Value and gradient of cdc_stat(y, z, u, h) with respect to y. The partial
// derivatives with respect to the entries of the distance matrix of y are
//   dS/d dy(k,l) = (12/n^5) (dz(k,l) M1(k,l) + M2(k,l) - 2 M3(k,l))
//   M1 = K diag(W.^2) K^T,  M2 = K diag(sZ) K^T,  M3 = (K .* H) diag(W) K^T,
// with H = Dz K, W the kernel column sums and sZ(u) = K(:,u)' H(:,u), and are
// chained through d dy(k,l) / dy_k. Uses the same grouped shortcut as
// cdc_stat when u has few distinct rows.
GradientResult cdc_grad(const Matrix& y, const Matrix& z, const Matrix& u, double h);

// Central finite differences of f at y, one +/- evaluation pair per
// coordinate.
Matrix numeric_grad(const std::function<double(const Matrix&)>& f, const Matrix& y, double step);

}  // namespace faircdc
