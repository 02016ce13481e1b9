#include "multilink/cobyla.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace multilink::optim {

namespace {

// True when `value` is indistinguishable from zero next to the magnitude `scale`
// of the terms that produced it.
bool lost_in_rounding(double scale, double value) {
  const double acca = scale + 0.1 * std::abs(value);
  const double accb = scale + 0.2 * std::abs(value);
  return scale >= acca || acca >= accb;
}

// Givens rotation of columns (k, kp) of z so that the new zdota(k) absorbs sp.
void rotate_columns(MatX& z, Eigen::Index k, Eigen::Index kp, double alpha, double beta) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double t = alpha * z(i, kp) + beta * z(i, k);
    z(i, kp) = alpha * z(i, k) - beta * z(i, kp);
    z(i, k) = t;
  }
}

// Trust-region subproblem. Stage one finds the shortest dx (|dx| <= rho) that
// minimizes the greatest violation of a.col(k).dx >= b(k), k < m. If the
// violation reaches zero with freedom to spare, stage two minimizes
// -a.col(m).dx without increasing any violation. Returns false when degeneracy
// stops dx short of the trust region boundary.
bool trust_region_step(int n, int m, const MatX& a, const VecX& b, double rho, VecX& dx) {
  MatX z = MatX::Identity(n, n);
  VecX zdota = VecX::Zero(n);
  VecX sdirn = VecX::Zero(n);
  VecX dxnew = VecX::Zero(n);
  VecX vmultc = VecX::Zero(m + 1);
  VecX vmultd = VecX::Zero(m + 1);
  std::vector<int> iact(m + 1, 0);

  dx.setZero(n);
  int mcon = m;
  int nact = 0;
  int icon = -1;
  double resmax = 0.0;
  for (int k = 0; k < m; ++k) {
    if (b(k) > resmax) {
      resmax = b(k);
      icon = k;
    }
  }
  for (int k = 0; k < m; ++k) {
    iact[k] = k;
    vmultc(k) = resmax - b(k);
  }

  double optold = 0.0;
  int icount = 0;
  int nactx = 0;
  double resold = 0.0;

  if (resmax == 0.0) goto stage_two;

stage_start:
  optold = 0.0;
  icount = 0;

iterate : {
  // Stop the stage after three iterations without progress in the objective
  // or the size of the active set.
  double optnew = 0.0;
  if (mcon == m) {
    optnew = resmax;
  } else {
    optnew = -dx.dot(a.col(m));
  }
  if (icount == 0 || optnew < optold) {
    optold = optnew;
    nactx = nact;
    icount = 3;
  } else if (nact > nactx) {
    nactx = nact;
    icount = 3;
  } else {
    --icount;
    if (icount == 0) goto stage_end;
  }

  if (icon >= nact) {
    // Add constraint iact[icon]; rotate so the trailing columns of z are
    // orthogonal to its gradient.
    const int kk = iact[icon];
    dxnew = a.col(kk);
    double tot = 0.0;
    for (int k = n - 1; k >= nact; --k) {
      double sp = 0.0, spabs = 0.0;
      for (int i = 0; i < n; ++i) {
        const double t = z(i, k) * dxnew(i);
        sp += t;
        spabs += std::abs(t);
      }
      if (lost_in_rounding(spabs, sp)) sp = 0.0;
      if (tot == 0.0) {
        tot = sp;
      } else {
        const double t = std::hypot(sp, tot);
        const double alpha = sp / t;
        const double beta = tot / t;
        tot = t;
        // columns k and k+1, with the roles arranged as in the deletion updates
        for (int i = 0; i < n; ++i) {
          const double zk = alpha * z(i, k) + beta * z(i, k + 1);
          z(i, k + 1) = alpha * z(i, k + 1) - beta * z(i, k);
          z(i, k) = zk;
        }
      }
    }

    if (tot != 0.0) {
      ++nact;
      zdota(nact - 1) = tot;
      vmultc(icon) = vmultc(nact - 1);
      vmultc(nact - 1) = 0.0;
    } else {
      // The new gradient is a combination of the active ones: one of them has to go.
      double ratio = -1.0;
      int iout = -1;
      for (int k = nact - 1; k >= 0; --k) {
        double zdotv = 0.0, zdvabs = 0.0;
        for (int i = 0; i < n; ++i) {
          const double t = z(i, k) * dxnew(i);
          zdotv += t;
          zdvabs += std::abs(t);
        }
        if (!lost_in_rounding(zdvabs, zdotv)) {
          const double t = zdotv / zdota(k);
          if (t > 0.0 && iact[k] < m) {
            const double tempa = vmultc(k) / t;
            if (ratio < 0.0 || tempa < ratio) {
              ratio = tempa;
              iout = k;
            }
          }
          if (k >= 1) dxnew -= t * a.col(iact[k]);
          vmultd(k) = t;
        } else {
          vmultd(k) = 0.0;
        }
      }
      if (ratio < 0.0) goto stage_end;

      for (int k = 0; k < nact; ++k) vmultc(k) = std::max(0.0, vmultc(k) - ratio * vmultd(k));
      if (iout < nact - 1) {
        const int isave = iact[iout];
        const double vsave = vmultc(iout);
        for (int k = iout; k < nact - 1; ++k) {
          const int kp = k + 1;
          const int kw = iact[kp];
          const double sp = z.col(k).dot(a.col(kw));
          const double t = std::hypot(sp, zdota(kp));
          const double alpha = zdota(kp) / t;
          const double beta = sp / t;
          zdota(kp) = alpha * zdota(k);
          zdota(k) = t;
          rotate_columns(z, k, kp, alpha, beta);
          iact[k] = kw;
          vmultc(k) = vmultc(kp);
        }
        iact[nact - 1] = isave;
        vmultc(nact - 1) = vsave;
      }
      const double t = z.col(nact - 1).dot(a.col(kk));
      if (t == 0.0) goto stage_end;
      zdota(nact - 1) = t;
      vmultc(icon) = 0.0;
      vmultc(nact - 1) = ratio;
    }

    iact[icon] = iact[nact - 1];
    iact[nact - 1] = kk;
    if (mcon > m && kk != m) {
      // keep the objective as the last active constraint
      const int k = nact - 2;
      const double sp = z.col(k).dot(a.col(kk));
      const double t = std::hypot(sp, zdota(nact - 1));
      const double alpha = zdota(nact - 1) / t;
      const double beta = sp / t;
      zdota(nact - 1) = alpha * zdota(k);
      zdota(k) = t;
      rotate_columns(z, k, nact - 1, alpha, beta);
      iact[nact - 1] = iact[k];
      iact[k] = kk;
      std::swap(vmultc(k), vmultc(nact - 1));
    }

    if (mcon > m) {
      sdirn = z.col(nact - 1) / zdota(nact - 1);
    } else {
      const int kl = iact[nact - 1];
      const double t = (sdirn.dot(a.col(kl)) - 1.0) / zdota(nact - 1);
      sdirn -= t * z.col(nact - 1);
    }
  } else {
    // Delete constraint iact[icon] from the active set.
    if (icon < nact - 1) {
      const int isave = iact[icon];
      const double vsave = vmultc(icon);
      for (int k = icon; k < nact - 1; ++k) {
        const int kp = k + 1;
        const int kk = iact[kp];
        const double sp = z.col(k).dot(a.col(kk));
        const double t = std::hypot(sp, zdota(kp));
        const double alpha = zdota(kp) / t;
        const double beta = sp / t;
        zdota(kp) = alpha * zdota(k);
        zdota(k) = t;
        rotate_columns(z, k, kp, alpha, beta);
        iact[k] = kk;
        vmultc(k) = vmultc(kp);
      }
      iact[nact - 1] = isave;
      vmultc(nact - 1) = vsave;
    }
    --nact;
    if (mcon > m) {
      sdirn = z.col(nact - 1) / zdota(nact - 1);
    } else {
      const double t = sdirn.dot(z.col(nact));
      sdirn -= t * z.col(nact);
    }
  }

  // Step to the trust region boundary, or the step that zeroes resmax.
  double dd = rho * rho;
  double sd = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(dx(i)) >= 1e-6 * rho) dd -= dx(i) * dx(i);
    sd += dx(i) * sdirn(i);
    ss += sdirn(i) * sdirn(i);
  }
  if (dd <= 0.0) goto stage_end;
  double temp = std::sqrt(ss * dd);
  if (std::abs(sd) >= 1e-6 * temp) temp = std::sqrt(ss * dd + sd * sd);
  const double stpful = dd / (temp + sd);
  double step = stpful;
  if (mcon == m) {
    if (lost_in_rounding(step, resmax)) goto stage_two;
    step = std::min(step, resmax);
  }

  dxnew = dx + step * sdirn;
  if (mcon == m) {
    resold = resmax;
    resmax = 0.0;
    for (int k = 0; k < nact; ++k) {
      const int kk = iact[k];
      resmax = std::max(resmax, b(kk) - a.col(kk).dot(dxnew));
    }
  }

  // Multipliers the active set would have at dxnew.
  for (int k = nact - 1; k >= 0; --k) {
    double zdotw = 0.0, zdwabs = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = z(i, k) * dxnew(i);
      zdotw += t;
      zdwabs += std::abs(t);
    }
    if (lost_in_rounding(zdwabs, zdotw)) zdotw = 0.0;
    vmultd(k) = zdotw / zdota(k);
    if (k >= 1) dxnew -= vmultd(k) * a.col(iact[k]);
  }
  if (mcon > m && nact > 0) vmultd(nact - 1) = std::max(0.0, vmultd(nact - 1));

  // Residuals of the inactive constraints at dxnew.
  dxnew = dx + step * sdirn;
  for (int k = nact; k < mcon; ++k) {
    const int kk = iact[k];
    double sum = resmax - b(kk);
    double sumabs = resmax + std::abs(b(kk));
    for (int i = 0; i < n; ++i) {
      const double t = a(i, kk) * dxnew(i);
      sum += t;
      sumabs += std::abs(t);
    }
    if (lost_in_rounding(sumabs, sum)) sum = 0.0;
    vmultd(k) = sum;
  }

  // Fraction of the step that keeps every multiplier and residual nonnegative.
  double ratio = 1.0;
  icon = -1;
  for (int k = 0; k < mcon; ++k) {
    if (vmultd(k) < 0.0) {
      const double t = vmultc(k) / (vmultc(k) - vmultd(k));
      if (t < ratio) {
        ratio = t;
        icon = k;
      }
    }
  }
  const double keep = 1.0 - ratio;
  dx = keep * dx + ratio * dxnew;
  for (int k = 0; k < mcon; ++k) vmultc(k) = std::max(0.0, keep * vmultc(k) + ratio * vmultd(k));
  if (mcon == m) resmax = resold + ratio * (resmax - resold);

  if (icon >= 0) goto iterate;
  if (step == stpful) return true;
}

stage_two:
  mcon = m + 1;
  icon = m;
  iact[m] = m;
  vmultc(m) = 0.0;
  goto stage_start;

stage_end:
  if (mcon == m) goto stage_two;
  return false;
}

struct BestTracker {
  double tol;
  bool have = false;
  VecX x;
  double f = 0.0;
  double violation = 0.0;

  void offer(const VecX& cand, double fc, double vc) {
    const bool cand_ok = vc <= tol;
    const bool best_ok = have && violation <= tol;
    bool take = !have;
    if (have) {
      if (cand_ok && best_ok) {
        take = fc < f;
      } else if (cand_ok != best_ok) {
        take = cand_ok;
      } else {
        take = vc < violation || (vc == violation && fc < f);
      }
    }
    if (take) {
      have = true;
      x = cand;
      f = fc;
      violation = vc;
    }
  }
};

}  // namespace

CobylaResult cobyla_minimize(const CobylaFunction& fn, const VecX& x0, int n_constraints, const CobylaOptions& options,
                             double feasibility_tol) {
  const int n = static_cast<int>(x0.size());
  const int m = n_constraints;
  const int mp = m;      // row of f in datmat
  const int mpp = m + 1;  // row of the max violation
  constexpr double kAlpha = 0.25, kBeta = 2.1, kGamma = 0.5, kDelta = 1.1;

  CobylaResult result;
  BestTracker best{feasibility_tol};

  VecX x = x0;
  VecX con = VecX::Zero(m + 2);
  MatX sim = MatX::Zero(n, n + 1);
  MatX simi = MatX::Zero(n, n);
  MatX datmat = MatX::Zero(m + 2, n + 1);
  MatX a = MatX::Zero(n, m + 1);
  VecX vsig = VecX::Zero(n), veta = VecX::Zero(n), sigbar = VecX::Zero(n);
  VecX dx = VecX::Zero(n);

  double rho = options.rho_begin;
  double parmu = 0.0;
  sim.col(n) = x;
  for (int i = 0; i < n; ++i) {
    sim(i, i) = rho;
    simi(i, i) = 1.0 / rho;
  }

  int jdrop = n;
  bool ibrnch = false;
  bool iflag = true;
  int nfvals = 0;
  double f = 0.0, resmax = 0.0;
  double prerec = 0.0, prerem = 0.0, parsig = 0.0;
  result.status = CobylaStatus::kConverged;

evaluate:
  if (nfvals >= options.max_evaluations && nfvals > 0) {
    result.status = CobylaStatus::kMaxEvaluations;
    goto done;
  }
  ++nfvals;
  {
    Eigen::Ref<VecX> cons = con.head(m);
    f = fn(x, cons);
  }
  resmax = 0.0;
  for (int k = 0; k < m; ++k) resmax = std::max(resmax, -con(k));
  if (!std::isfinite(f)) f = 1e300;
  best.offer(x, f, resmax);
  con(mp) = f;
  con(mpp) = resmax;
  if (ibrnch) goto after_trial;

  datmat.col(jdrop) = con;
  if (nfvals <= n + 1) {
    // Still building the initial simplex.
    if (jdrop < n) {
      if (datmat(mp, n) <= f) {
        x(jdrop) = sim(jdrop, n);
      } else {
        sim(jdrop, n) = x(jdrop);
        for (int k = 0; k < m + 2; ++k) {
          datmat(k, jdrop) = datmat(k, n);
          datmat(k, n) = con(k);
        }
        for (int k = 0; k <= jdrop; ++k) {
          sim(jdrop, k) = -rho;
          double t = 0.0;
          for (int i = k; i <= jdrop; ++i) t -= simi(i, k);
          simi(jdrop, k) = t;
        }
      }
    }
    if (nfvals <= n) {
      jdrop = nfvals - 1;
      x(jdrop) += rho;
      goto evaluate;
    }
  }
  ibrnch = true;

select_best : {
  double phimin = datmat(mp, n) + parmu * datmat(mpp, n);
  int nbest = n;
  for (int j = 0; j < n; ++j) {
    const double t = datmat(mp, j) + parmu * datmat(mpp, j);
    if (t < phimin) {
      nbest = j;
      phimin = t;
    } else if (t == phimin && parmu == 0.0 && datmat(mpp, j) < datmat(mpp, nbest)) {
      nbest = j;
    }
  }
  if (nbest < n) {
    datmat.col(n).swap(datmat.col(nbest));
    for (int i = 0; i < n; ++i) {
      const double t = sim(i, nbest);
      sim(i, nbest) = 0.0;
      sim(i, n) += t;
      double tempa = 0.0;
      for (int k = 0; k < n; ++k) {
        sim(i, k) -= t;
        tempa -= simi(k, i);
      }
      simi(nbest, i) = tempa;
    }
  }

  const double error = (simi * sim.leftCols(n) - MatX::Identity(n, n)).cwiseAbs().maxCoeff();
  if (error > 0.1) {
    result.status = CobylaStatus::kRoundingErrors;
    goto done;
  }

  // Linear models: constraint gradients, then minus the objective gradient.
  for (int k = 0; k <= m; ++k) {
    con(k) = -datmat(k, n);
    VecX w(n);
    for (int j = 0; j < n; ++j) w(j) = datmat(k, j) + con(k);
    VecX g = simi.transpose() * w;
    a.col(k) = (k == m) ? VecX(-g) : g;
  }

  iflag = true;
  parsig = kAlpha * rho;
  const double pareta = kBeta * rho;
  for (int j = 0; j < n; ++j) {
    vsig(j) = 1.0 / simi.row(j).norm();
    veta(j) = sim.col(j).norm();
    if (vsig(j) < parsig || veta(j) > pareta) iflag = false;
  }

  if (!ibrnch && !iflag) {
    // Replace a vertex to restore the simplex geometry.
    jdrop = -1;
    double t = pareta;
    for (int j = 0; j < n; ++j) {
      if (veta(j) > t) {
        jdrop = j;
        t = veta(j);
      }
    }
    if (jdrop < 0) {
      for (int j = 0; j < n; ++j) {
        if (vsig(j) < t) {
          jdrop = j;
          t = vsig(j);
        }
      }
    }
    dx = (kGamma * rho * vsig(jdrop)) * simi.row(jdrop).transpose();
    double cvmaxp = 0.0, cvmaxm = 0.0, sum = 0.0;
    for (int k = 0; k <= m; ++k) {
      sum = a.col(k).dot(dx);
      if (k < m) {
        const double c = datmat(k, n);
        cvmaxp = std::max(cvmaxp, -sum - c);
        cvmaxm = std::max(cvmaxm, sum - c);
      }
    }
    if (parmu * (cvmaxp - cvmaxm) > sum + sum) dx = -dx;

    sim.col(jdrop) = dx;
    simi.row(jdrop) /= simi.row(jdrop).dot(dx);
    for (int j = 0; j < n; ++j) {
      if (j == jdrop) continue;
      const double s = simi.row(j).dot(dx);
      simi.row(j) -= s * simi.row(jdrop);
    }
    x = sim.col(n) + dx;
    goto evaluate;
  }

  const bool full = trust_region_step(n, m, a, con.head(m + 1), rho, dx);
  if (!full && dx.squaredNorm() < 0.25 * rho * rho) {
    ibrnch = true;
    goto shrink;
  }

  // Predicted change of f and of the max violation at x0 + dx.
  double resnew = 0.0;
  con(mp) = 0.0;
  double sum = 0.0;
  for (int k = 0; k <= m; ++k) {
    sum = con(k) - a.col(k).dot(dx);
    if (k < m) resnew = std::max(resnew, sum);
  }
  double barmu = 0.0;
  prerec = datmat(mpp, n) - resnew;
  if (prerec > 0.0) barmu = sum / prerec;
  if (parmu < 1.5 * barmu) {
    parmu = 2.0 * barmu;
    const double phi = datmat(mp, n) + parmu * datmat(mpp, n);
    for (int j = 0; j < n; ++j) {
      const double t = datmat(mp, j) + parmu * datmat(mpp, j);
      if (t < phi) goto select_best;
      if (t == phi && parmu == 0.0 && datmat(mpp, j) < datmat(mpp, n)) goto select_best;
    }
  }
  prerem = parmu * prerec - sum;

  x = sim.col(n) + dx;
  ibrnch = true;
  goto evaluate;
}

after_trial : {
  const double vmold = datmat(mp, n) + parmu * datmat(mpp, n);
  const double vmnew = f + parmu * resmax;
  double trured = vmold - vmnew;
  if (parmu == 0.0 && f == datmat(mp, n)) {
    prerem = prerec;
    trured = datmat(mpp, n) - resmax;
  }

  // Pick the vertex the trial point replaces (mandatory when trured > 0).
  double ratio = trured <= 0.0 ? 1.0 : 0.0;
  jdrop = -1;
  for (int j = 0; j < n; ++j) {
    const double t = std::abs(simi.row(j).dot(dx));
    if (t > ratio) {
      jdrop = j;
      ratio = t;
    }
    sigbar(j) = t * vsig(j);
  }
  double edgmax = kDelta * rho;
  int l = -1;
  for (int j = 0; j < n; ++j) {
    if (sigbar(j) >= parsig || sigbar(j) >= vsig(j)) {
      double t = veta(j);
      if (trured > 0.0) t = (dx - sim.col(j)).norm();
      if (t > edgmax) {
        l = j;
        edgmax = t;
      }
    }
  }
  if (l >= 0) jdrop = l;
  if (jdrop < 0) goto shrink;

  sim.col(jdrop) = dx;
  simi.row(jdrop) /= simi.row(jdrop).dot(dx);
  for (int j = 0; j < n; ++j) {
    if (j == jdrop) continue;
    const double s = simi.row(j).dot(dx);
    simi.row(j) -= s * simi.row(jdrop);
  }
  datmat.col(jdrop) = con;

  if (trured > 0.0 && trured >= 0.1 * prerem) goto select_best;
}

shrink:
  if (!iflag) {
    ibrnch = false;
    goto select_best;
  }
  if (rho > options.rho_end) {
    rho *= 0.5;
    if (rho <= 1.5 * options.rho_end) rho = options.rho_end;
    if (parmu > 0.0) {
      double denom = 0.0, cmin = 0.0, cmax = 0.0;
      for (int k = 0; k <= m; ++k) {
        cmin = datmat.row(k).minCoeff();
        cmax = datmat.row(k).maxCoeff();
        if (k < m && cmin < 0.5 * cmax) {
          const double t = std::max(cmax, 0.0) - cmin;
          denom = denom <= 0.0 ? t : std::min(denom, t);
        }
      }
      if (denom == 0.0) {
        parmu = 0.0;
      } else if (cmax - cmin < parmu * denom) {
        parmu = (cmax - cmin) / denom;
      }
    }
    goto select_best;
  }

done:
  result.x = best.x;
  result.f = best.f;
  result.max_violation = best.violation;
  result.evaluations = nfvals;
  return result;
}

}  // namespace multilink::optim
