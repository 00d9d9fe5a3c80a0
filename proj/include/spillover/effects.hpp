#pragma once

#include "spillover/dsdm.hpp"

namespace spillover {

// ---------------------------------------------------------------------------
// Marginal-effects decomposition of treatment through the spatial multiplier:
//
//   dY/dD = (I - rho W)^{-1} (beta I + theta W)
//
// direct   = average diagonal element (own adoption incl. network feedback)
// indirect = average off-diagonal row sum (spillovers from everyone else)
// total    = direct + indirect
//
// Contemporaneous (short-run) effects only; tau and eta do not enter.
// ---------------------------------------------------------------------------

enum class EffectsMethod { delta, posterior_sim };

struct EffectsDecomposition {
  double direct = 0, indirect = 0, total = 0;
  double direct_se = kMissing, indirect_se = kMissing, total_se = kMissing;
  EffectsMethod method = EffectsMethod::delta;
  double ratio_indirect_total = kMissing;  // NaN when total == 0
};

namespace detail {

struct EffectsPoint {
  double direct, indirect, total;
};

inline EffectsPoint decompose_point(double rho, double beta, double theta, const WeightMatrix& w) {
  const int n = w.n();
  Matrix a = Matrix::Identity(n, n) - rho * w.w();
  Eigen::PartialPivLU<Matrix> lu(a);
  Matrix multiplier = lu.solve(beta * Matrix::Identity(n, n) + theta * w.w());
  require(multiplier.allFinite(), "effects", "(I - rho W) is numerically singular");
  EffectsPoint p;
  p.direct = multiplier.trace() / n;
  p.total = multiplier.sum() / n;
  p.indirect = p.total - p.direct;
  return p;
}

}  // namespace detail

inline EffectsDecomposition decompose(const DsdmFit& fit, const WeightMatrix& w) {
  require(fit.rho_interval.contains(fit.rho()), "effects", "rho outside the admissible interval");
  auto p = detail::decompose_point(fit.rho(), fit.beta(), fit.theta(), w);
  EffectsDecomposition out;
  out.direct = p.direct;
  out.indirect = p.indirect;
  out.total = p.total;
  out.method = fit.estimator == DsdmEstimator::bayes ? EffectsMethod::posterior_sim : EffectsMethod::delta;
  if (out.total != 0.0) out.ratio_indirect_total = out.indirect / out.total;
  return out;
}

// ---------------------------------------------------------------------------
// Uncertainty by simulation. MLE/QMLE fits draw (rho, beta, theta) from their
// joint normal and re-decompose per draw (the delta method, implemented by
// simulation); Bayesian fits re-decompose each stored posterior draw. Draws
// landing outside the rho interval are rejected and redrawn.
// ---------------------------------------------------------------------------
inline EffectsDecomposition effects_uncertainty(const DsdmFit& fit, const WeightMatrix& w, int reps = 1000,
                                                std::uint64_t seed = 0) {
  EffectsDecomposition out = decompose(fit, w);
  std::vector<double> direct_draws, indirect_draws, total_draws;

  if (fit.estimator == DsdmEstimator::bayes) {
    require(fit.draws.has_value(), "effects", "bayesian fit carries no posterior draws");
    const Matrix& draws = *fit.draws;
    const int r_i = fit.index_of("rho"), b_i = fit.index_of("beta"), t_i = fit.index_of("theta");
    for (int d = 0; d < draws.rows(); ++d) {
      auto p = detail::decompose_point(draws(d, r_i), draws(d, b_i), draws(d, t_i), w);
      direct_draws.push_back(p.direct);
      indirect_draws.push_back(p.indirect);
      total_draws.push_back(p.total);
    }
    out.method = EffectsMethod::posterior_sim;
  } else {
    require(fit.vcov.size() > 0, "effects", "fit carries neither vcov nor posterior draws");
    require(reps >= 2, "effects", "need at least 2 replications");
    const int r_i = fit.index_of("rho"), b_i = fit.index_of("beta"), t_i = fit.index_of("theta");
    Vector mu(3);
    mu << fit.estimates(r_i), fit.estimates(b_i), fit.estimates(t_i);
    Matrix cov(3, 3);
    const int idx[3] = {r_i, b_i, t_i};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) cov(i, j) = fit.vcov(idx[i], idx[j]);
    // matrix square root that tolerates a semidefinite (even zero) covariance
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    Vector lambda = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Matrix root = es.eigenvectors() * lambda.asDiagonal();

    Rng rng(seed);
    const long cap = 10L * reps;
    long attempts = 0;
    while (static_cast<int>(direct_draws.size()) < reps) {
      if (++attempts > cap)
        fail("effects", "too many delta-method draws fell outside the rho interval (cap " +
                            std::to_string(cap) + ")");
      Vector z(3);
      for (int i = 0; i < 3; ++i) z(i) = rng.normal();
      Vector draw = mu + root * z;
      if (!fit.rho_interval.contains(draw(0))) continue;
      auto p = detail::decompose_point(draw(0), draw(1), draw(2), w);
      direct_draws.push_back(p.direct);
      indirect_draws.push_back(p.indirect);
      total_draws.push_back(p.total);
    }
    out.method = EffectsMethod::delta;
  }

  out.direct_se = sample_sd(direct_draws);
  out.indirect_se = sample_sd(indirect_draws);
  out.total_se = sample_sd(total_draws);
  return out;
}

}  // namespace spillover
