#pragma once

#include <random>
#include <vector>

#include "multilink/feasibility.hpp"

namespace testsupport {

using multilink::Mat3;
using multilink::Vec3;

/// Largest r with r*u = sum lambda_i v_i, 0 <= lambda_i <= lmax, by enumerating LP vertices:
/// three basic variables (r and two thrusts), every other thrust at a bound.
inline double ray_reach(const std::vector<Vec3>& v, double lmax, const Vec3& u) {
  const int n = static_cast<int>(v.size());
  double best = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      std::vector<int> rest;
      for (int k = 0; k < n; ++k)
        if (k != a && k != b) rest.push_back(k);
      Mat3 M;
      M.col(0) = v[a];
      M.col(1) = v[b];
      M.col(2) = -u;
      const Eigen::FullPivLU<Mat3> lu(M);
      if (!lu.isInvertible()) continue;
      for (unsigned mask = 0; mask < (1u << rest.size()); ++mask) {
        Vec3 rhs = Vec3::Zero();
        for (std::size_t k = 0; k < rest.size(); ++k)
          if (mask & (1u << k)) rhs -= lmax * v[rest[k]];
        const Vec3 x = lu.solve(rhs);
        const double tol = 1e-12 * lmax;
        if (x(0) < -tol || x(0) > lmax + tol || x(1) < -tol || x(1) > lmax + tol || x(2) < 0) continue;
        best = std::max(best, x(2));
      }
    }
  }
  return best;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 u(g(rng), g(rng), g(rng));
  return u.normalized();
}

/// min over sampled directions of ray_reach: an upper estimate of the inscribed radius.
inline double sampled_inscribed_radius(const std::vector<Vec3>& v, double lmax, int samples, std::mt19937_64& rng) {
  double r = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) r = std::min(r, ray_reach(v, lmax, random_unit(rng)));
  return r;
}

/// Four vectors that positively span R^3 (the origin is strictly inside their cone hull).
inline std::vector<Vec3> spanning_basis(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.3, 1.5);
  std::vector<Vec3> v(4);
  for (int i = 0; i < 3; ++i) v[i] = Vec3(g(rng), g(rng), g(rng));
  v[3] = -(pos(rng) * v[0] + pos(rng) * v[1] + pos(rng) * v[2]) + 0.1 * Vec3(g(rng), g(rng), g(rng));
  return v;
}

struct LinearSystem {
  multilink::MatX A, B, Q, R;
};

/// Random (A, B, Q, R) with n in [2, 6]. Draws whose controllability matrix has
/// condition number above 1e3 are redrawn; near-uncontrollable pairs push |P| past
/// 1e5 and the residual to round-off.
inline LinearSystem random_stabilizable_system(std::mt19937_64& rng) {
  using multilink::MatX;
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> dim(2, 6);
  for (;;) {
    const int n = dim(rng);
    const int m = std::uniform_int_distribution<int>(1, n)(rng);
    LinearSystem s{MatX(n, n), MatX(n, m), MatX(), MatX::Identity(m, m)};
    MatX C(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        s.A(i, j) = g(rng);
        C(i, j) = g(rng);
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) s.B(i, j) = g(rng);
    s.Q = C.transpose() * C + 0.1 * MatX::Identity(n, n);
    for (int i = 0; i < m; ++i) s.R(i, i) = 0.5 + std::abs(g(rng));

    MatX ctrb(n, n * m);
    MatX Ak = MatX::Identity(n, n);
    for (int k = 0; k < n; ++k) {
      ctrb.middleCols(k * m, m) = Ak * s.B;
      Ak = s.A * Ak;
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<MatX>(ctrb).singularValues();
    if (sv(n - 1) * 1e3 >= sv(0)) return s;
  }
}

}  // namespace testsupport
