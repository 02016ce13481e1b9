#pragma once

#include <optional>

#include "multilink/math.hpp"

namespace multilink {

struct CareSolution {
  MatX P;
  MatX K;  // R^-1 B^T P
  double residual = 0.0;
  int iterations = 0;
};

/// Stabilizing solution of A^T P + P A - P B R^-1 B^T P + Q = 0.
///
/// Newton-Kleinman iteration. `initial_gain` must make A - B K Hurwitz; when it is
/// absent or not stabilizing the iteration starts from the matrix-sign-function
/// solution of the Hamiltonian. Throws AREFailed.
CareSolution solve_care(const MatX& A, const MatX& B, const MatX& Q, const MatX& R,
                        const std::optional<MatX>& initial_gain = std::nullopt, double tolerance = 1e-10,
                        int max_iterations = 60);

/// Solves A^T X + X A + C = 0 (C symmetric) by Kronecker expansion.
MatX solve_lyapunov(const MatX& A, const MatX& C);

double care_residual(const MatX& A, const MatX& B, const MatX& Q, const MatX& R, const MatX& P);

bool is_hurwitz(const MatX& A, double margin = 0.0);

}  // namespace multilink
