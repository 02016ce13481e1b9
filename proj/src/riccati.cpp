#include "multilink/riccati.hpp"

#include <cmath>

#include "multilink/errors.hpp"

namespace multilink {

namespace {

MatX symmetrize(const MatX& m) { return 0.5 * (m + m.transpose()); }

// Stable-subspace solution through sign(H), Newton iteration with determinant scaling.
MatX sign_function_solution(const MatX& A, const MatX& S, const MatX& Q) {
  const Eigen::Index n = A.rows();
  MatX Z(2 * n, 2 * n);
  Z << A, -S, -Q, -A.transpose();
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<MatX> lu(Z);
    const MatX Zi = lu.inverse();
    const double det = std::abs(lu.determinant());
    double c = 1.0;
    if (det > 0.0 && std::isfinite(det)) c = std::pow(det, -1.0 / static_cast<double>(2 * n));
    const MatX next = 0.5 * (c * Z + Zi / c);
    const double change = (next - Z).norm() / std::max(1.0, next.norm());
    Z = next;
    if (change < 1e-13) break;
  }
  const MatX I = MatX::Identity(n, n);
  MatX lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
  rhs << -(Z.topLeftCorner(n, n) + I), -Z.bottomLeftCorner(n, n);
  return symmetrize(lhs.colPivHouseholderQr().solve(rhs));
}

}  // namespace

bool is_hurwitz(const MatX& A, double margin) {
  if (A.size() == 0) return true;
  Eigen::EigenSolver<MatX> es(A, false);
  return (es.eigenvalues().real().array() < -margin).all();
}

MatX solve_lyapunov(const MatX& A, const MatX& C) {
  const Eigen::Index n = A.rows();
  const MatX I = MatX::Identity(n, n);
  const MatX At = A.transpose();
  // vec(At X + X A) = (I kron At + A^T kron I) vec(X)
  MatX L = MatX::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      L.block(j * n, i * n, n, n) = At(j, i) * I;
    }
    L.block(j * n, j * n, n, n) += At;
  }
  const VecX rhs = -Eigen::Map<const VecX>(C.data(), n * n);
  const VecX x = L.partialPivLu().solve(rhs);
  return symmetrize(Eigen::Map<const MatX>(x.data(), n, n));
}

double care_residual(const MatX& A, const MatX& B, const MatX& Q, const MatX& R, const MatX& P) {
  const MatX res = A.transpose() * P + P * A - P * B * R.ldlt().solve(B.transpose() * P) + Q;
  return res.norm();
}

CareSolution solve_care(const MatX& A, const MatX& B, const MatX& Q, const MatX& R,
                        const std::optional<MatX>& initial_gain, double tolerance, int max_iterations) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() || R.cols() != B.cols())
    throw DimensionMismatch("Riccati operands have inconsistent sizes");
  Eigen::LDLT<MatX> r_ldlt(R);
  if (r_ldlt.info() != Eigen::Success || !r_ldlt.isPositive() || (r_ldlt.vectorD().array() <= 0.0).any())
    throw AREFailed("input weight is not positive definite");

  MatX K;
  if (initial_gain && initial_gain->rows() == B.cols() && initial_gain->cols() == n && is_hurwitz(A - B * *initial_gain)) {
    K = *initial_gain;
  } else {
    const MatX S = B * r_ldlt.solve(B.transpose());
    const MatX P0 = sign_function_solution(A, S, Q);
    K = r_ldlt.solve(B.transpose() * P0);
    if (!K.allFinite() || !is_hurwitz(A - B * K)) throw AREFailed("no stabilizing initial gain: (A, B) may not be stabilizable");
  }

  CareSolution out;
  MatX P = MatX::Zero(n, n);
  for (int it = 1; it <= max_iterations; ++it) {
    const MatX Ak = A - B * K;
    const MatX Pn = solve_lyapunov(Ak, Q + K.transpose() * R * K);
    if (!Pn.allFinite()) throw AREFailed("Lyapunov step diverged");
    const double change = (Pn - P).norm() / std::max(1.0, Pn.norm());
    P = Pn;
    K = r_ldlt.solve(B.transpose() * P);
    out.iterations = it;
    if (change < tolerance) break;
  }
  out.P = P;
  out.K = K;
  out.residual = care_residual(A, B, Q, R, P);
  if (!std::isfinite(out.residual) || out.residual > 1e-8 || !is_hurwitz(A - B * K)) {
    std::ostringstream msg;
    msg << "Riccati iteration did not converge (residual " << out.residual << ", |P| " << P.norm() << ")";
    throw AREFailed(msg.str());
  }
  return out;
}

}  // namespace multilink
