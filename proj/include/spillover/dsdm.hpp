#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spillover/panel.hpp"
#include "spillover/weights.hpp"

namespace spillover {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// ---------------------------------------------------------------------------
// Dynamic spatial panel estimation. The model regresses the outcome on its
// temporal lag, the spatial lag of the contemporaneous outcome, the spatial
// lag of the lagged outcome, own treatment, the spatial lag of treatment, and
// controls, with entity and time fixed effects removed by demeaning:
//
//   Y_t = tau Y_{t-1} + rho W Y_t + eta W Y_{t-1}
//         + beta D_t + theta W D_t + Gamma X_t + mu + delta_t + eps_t
//
// The likelihood carries the T * ln|I - rho W| Jacobian for the simultaneity
// of W Y_t, evaluated through the cached spectrum of W.
// ---------------------------------------------------------------------------

enum class FixedEffects { entity, time, both };
enum class DsdmEstimator { mle, qmle, bayes };

struct DsdmSpec {
  std::string outcome = "roa";
  std::vector<std::string> controls;
  FixedEffects fixed_effects = FixedEffects::both;
  DsdmEstimator estimator = DsdmEstimator::mle;
  // Half-panel jackknife on the time dimension. Demeaning out entity effects
  // leaves an O(1/T) bias on the dynamic coefficients (measurably ~-0.02 on
  // tau at T=40); the jackknife removes the first-order term. Applies to
  // mle/qmle point estimates when entity effects are present.
  bool bias_correction = true;
};

struct McmcConfig {
  int iterations = 10000;
  int burn_in = 5000;
  std::uint64_t seed = 0;
  double rho_step = 0.1;   // random-walk scale, adapted during burn-in
  bool adapt = true;
  bool prior_only = false; // test hook: disable the likelihood, sample priors
};

struct DsdmDiagnostics {
  double rho_accept_rate = kMissing;
  double rhat_max = kMissing;
  std::vector<std::string> warnings;
};

struct DsdmFit {
  DsdmEstimator estimator = DsdmEstimator::mle;
  std::vector<std::string> param_names;  // tau, rho, eta, beta, theta, controls..., sigma2
  Vector estimates;                      // posterior means for bayes
  Vector ses;                            // posterior sds for bayes
  Matrix ci;                             // (params x 2) 95% bounds
  Matrix vcov;                           // delta-method covariance (mle/qmle)
  double loglik = kMissing;
  RhoInterval rho_interval;
  std::optional<Matrix> draws;           // kept posterior draws, one column per parameter
  DsdmDiagnostics diagnostics;
  int n = 0, t_eff = 0;
  std::vector<std::string> control_names;
  Vector uncorrected;                    // full-sample optimum before the jackknife (mle/qmle)

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
      if (param_names[i] == name) return static_cast<int>(i);
    fail("dsdm", "no parameter named '" + name + "'");
  }
  double tau() const { return estimates(0); }
  double rho() const { return estimates(1); }
  double eta() const { return estimates(2); }
  double beta() const { return estimates(3); }
  double theta() const { return estimates(4); }
  double sigma2() const { return estimates(estimates.size() - 1); }
  Vector gamma() const { return estimates.segment(5, estimates.size() - 6); }
};

// ---------------------------------------------------------------------------
// Two-way (or one-way) demeaning.
// ---------------------------------------------------------------------------
inline Matrix demean_two_way(const Matrix& x) {
  Vector row_means = x.rowwise().mean();
  Eigen::RowVectorXd col_means = x.colwise().mean();
  double grand = x.mean();
  Matrix out = x;
  out.colwise() -= row_means;
  out.rowwise() -= col_means;
  out.array() += grand;
  return out;
}

inline Matrix demean(const Matrix& x, FixedEffects fe) {
  switch (fe) {
    case FixedEffects::entity: {
      Matrix out = x;
      out.colwise() -= x.rowwise().mean().eval();
      return out;
    }
    case FixedEffects::time: {
      Matrix out = x;
      out.rowwise() -= x.colwise().mean().eval();
      return out;
    }
    default: return demean_two_way(x);
  }
}

// ---------------------------------------------------------------------------
// Prepared regression arrays. Spatial lags are computed on the raw panel,
// the first quarter is dropped for the temporal lag, and every variable is
// demeaned over the remaining estimation window. Everything downstream works
// off cross-products, so likelihood evaluations cost O(K^2) regardless of
// panel size.
// ---------------------------------------------------------------------------
struct DsdmData {
  int n = 0, t_eff = 0;
  // After time-demeaning the data live in the (N-1)-dimensional subspace
  // orthogonal to the ones vector, which is also an eigenvector of any
  // row-normalized W. The estimation objective therefore counts m_dim
  // dimensions per period and drops one unit eigenvalue from the Jacobian.
  int m_dim = 0;
  bool drop_unit = false;
  std::vector<std::string> coef_names;  // tau, eta, beta, theta, controls...
  // stacked quadratic forms
  Matrix zz;
  Vector zy0, zy1;
  double y00 = 0, y01 = 0, y11 = 0;
  // per-quarter pieces (QMLE score contributions)
  std::vector<Matrix> zz_t;
  std::vector<Vector> zy0_t, zy1_t;
  std::vector<double> y00_t, y01_t, y11_t;
  // kept for residual-level checks
  Matrix z;
  Vector y0, y1;
};

namespace detail {

inline void check_rectangular(const Matrix& m, const std::string& what) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (is_missing(m(i, j)))
        fail("dsdm", what + " has a missing cell at (" + std::to_string(i) + ", " + std::to_string(j) +
                         "); filter and impute before estimating");
}

}  // namespace detail

inline DsdmData build_dsdm_data(const PanelDataset& panel, const DsdmSpec& spec, const WeightMatrix& w) {
  const int n = panel.n(), t = panel.t();
  require(w.n() == n, "dsdm", "weight matrix dimension " + std::to_string(w.n()) +
                                  " does not match the filtered panel (" + std::to_string(n) + ")");
  require(t >= 3, "dsdm", "need at least 3 quarters for the temporal lag");
  const Matrix& y_raw = panel.outcome(spec.outcome);
  detail::check_rectangular(y_raw, "outcome " + spec.outcome);
  detail::check_rectangular(panel.treatment, "treatment");
  std::vector<const Matrix*> x_raw;
  for (const auto& name : spec.controls) {
    const Matrix* m = panel.variable(name);
    if (!m) fail("dsdm", "control '" + name + "' not present in panel");
    detail::check_rectangular(*m, "control " + name);
    x_raw.push_back(m);
  }

  // spatial lags on the raw data, then the estimation window t = 2..T
  Matrix wy = w.w() * y_raw;
  Matrix wd = w.w() * panel.treatment;
  const int te = t - 1;
  auto window = [&](const Matrix& m, int shift) { return Matrix(m.middleCols(1 - shift, te)); };

  Matrix yt = demean(window(y_raw, 0), spec.fixed_effects);
  Matrix wyt = demean(window(wy, 0), spec.fixed_effects);
  Matrix ylag = demean(window(y_raw, 1), spec.fixed_effects);
  Matrix wylag = demean(window(wy, 1), spec.fixed_effects);
  Matrix dt = demean(window(panel.treatment, 0), spec.fixed_effects);
  Matrix wdt = demean(window(wd, 0), spec.fixed_effects);
  std::vector<Matrix> xt;
  for (const Matrix* m : x_raw) xt.push_back(demean(window(*m, 0), spec.fixed_effects));

  DsdmData data;
  data.n = n;
  data.t_eff = te;
  data.drop_unit = spec.fixed_effects != FixedEffects::entity;
  data.m_dim = data.drop_unit ? n - 1 : n;
  data.coef_names = {"tau", "eta", "beta", "theta"};
  for (const auto& name : spec.controls) data.coef_names.push_back(name);
  const int k = static_cast<int>(data.coef_names.size());

  data.z.resize(n * te, k);
  data.y0.resize(n * te);
  data.y1.resize(n * te);
  for (int tt = 0; tt < te; ++tt) {
    int offset = tt * n;
    data.z.block(offset, 0, n, 1) = ylag.col(tt);
    data.z.block(offset, 1, n, 1) = wylag.col(tt);
    data.z.block(offset, 2, n, 1) = dt.col(tt);
    data.z.block(offset, 3, n, 1) = wdt.col(tt);
    for (std::size_t c = 0; c < xt.size(); ++c) data.z.block(offset, 4 + static_cast<int>(c), n, 1) = xt[c].col(tt);
    data.y0.segment(offset, n) = yt.col(tt);
    data.y1.segment(offset, n) = wyt.col(tt);
  }

  data.zz = data.z.transpose() * data.z;
  data.zy0 = data.z.transpose() * data.y0;
  data.zy1 = data.z.transpose() * data.y1;
  data.y00 = data.y0.squaredNorm();
  data.y01 = data.y0.dot(data.y1);
  data.y11 = data.y1.squaredNorm();
  data.zz_t.reserve(static_cast<std::size_t>(te));
  for (int tt = 0; tt < te; ++tt) {
    int offset = tt * n;
    Matrix zt = data.z.middleRows(offset, n);
    Vector y0t = data.y0.segment(offset, n);
    Vector y1t = data.y1.segment(offset, n);
    data.zz_t.push_back(zt.transpose() * zt);
    data.zy0_t.push_back(zt.transpose() * y0t);
    data.zy1_t.push_back(zt.transpose() * y1t);
    data.y00_t.push_back(y0t.squaredNorm());
    data.y01_t.push_back(y0t.dot(y1t));
    data.y11_t.push_back(y1t.squaredNorm());
  }
  return data;
}

// ---------------------------------------------------------------------------
// Parameter vector layout shared by vcov, draws, and reports:
//   [tau, rho, eta, beta, theta, gamma..., sigma2]
// The regression coefficient block (tau, eta, beta, theta, gamma...) maps to
// design columns [0, 1, 2, 3, 4...]. rho sits at slot 1, sigma2 last.
// ---------------------------------------------------------------------------
namespace detail {

inline Vector delta_from_params(const Vector& p) {
  const int k = static_cast<int>(p.size()) - 2;
  Vector delta(k);
  delta(0) = p(0);                           // tau
  delta(1) = p(2);                           // eta
  delta(2) = p(3);                           // beta
  delta(3) = p(4);                           // theta
  for (int i = 4; i < k; ++i) delta(i) = p(i + 1);  // gammas
  return delta;
}

inline Vector params_from(const Vector& delta, double rho, double sigma2) {
  const int k = static_cast<int>(delta.size());
  Vector p(k + 2);
  p(0) = delta(0);
  p(1) = rho;
  p(2) = delta(1);
  p(3) = delta(2);
  p(4) = delta(3);
  for (int i = 4; i < k; ++i) p(i + 1) = delta(i);
  p(k + 1) = sigma2;
  return p;
}

inline double rss_of(const DsdmData& d, const Vector& delta, double rho) {
  double a = d.y00 - 2.0 * delta.dot(d.zy0) + delta.dot(d.zz * delta);
  double b = d.y01 - delta.dot(d.zy1);
  return a - 2.0 * rho * b + rho * rho * d.y11;
}

inline double rss_of_quarter(const DsdmData& d, const Vector& delta, double rho, int t) {
  std::size_t tt = static_cast<std::size_t>(t);
  double a = d.y00_t[tt] - 2.0 * delta.dot(d.zy0_t[tt]) + delta.dot(d.zz_t[tt] * delta);
  double b = d.y01_t[tt] - delta.dot(d.zy1_t[tt]);
  return a - 2.0 * rho * b + rho * rho * d.y11_t[tt];
}

}  // namespace detail

// Full log-likelihood at a parameter vector in the layout above.
inline double dsdm_loglik(const Vector& params, const DsdmData& data, const WeightMatrix& w) {
  const double rho = params(1);
  const double sigma2 = params(params.size() - 1);
  require(w.rho_interval().contains(rho), "dsdm",
          "rho = " + std::to_string(rho) + " outside the admissible interval");
  require(sigma2 > 0.0, "dsdm", "sigma2 must be positive");
  Vector delta = detail::delta_from_params(params);
  double rss = detail::rss_of(data, delta, rho);
  require(std::isfinite(rss), "dsdm", "non-finite residual sum of squares");
  const double nt = static_cast<double>(data.n) * data.t_eff;
  return -0.5 * nt * std::log(kTwoPi * sigma2) + data.t_eff * w.log_det(rho) - rss / (2.0 * sigma2);
}

namespace detail {

// Estimation objective on demeaned data. Identical to the textbook
// likelihood except that, when the time dimension was demeaned, the ones
// direction is gone from the data: the Gaussian density has N-1 dimensions
// per period and the Jacobian loses its unit-eigenvalue factor ln(1 - rho).
// (Exact for row-normalized W because W * ones = ones.)
inline double fit_jacobian(const DsdmData& data, const WeightMatrix& w, double rho) {
  double ld = w.log_det(rho);
  if (data.drop_unit) ld -= std::log(1.0 - rho);
  return ld;
}

inline double fit_objective(const Vector& params, const DsdmData& data, const WeightMatrix& w) {
  const double rho = params(1);
  const double sigma2 = params(params.size() - 1);
  require(w.rho_interval().contains(rho), "dsdm",
          "rho = " + std::to_string(rho) + " outside the admissible interval");
  require(sigma2 > 0.0, "dsdm", "sigma2 must be positive");
  Vector delta = delta_from_params(params);
  double rss = rss_of(data, delta, rho);
  require(std::isfinite(rss), "dsdm", "non-finite residual sum of squares");
  const double nt = static_cast<double>(data.m_dim) * data.t_eff;
  return -0.5 * nt * std::log(kTwoPi * sigma2) + data.t_eff * fit_jacobian(data, w, rho) -
         rss / (2.0 * sigma2);
}

inline double fit_objective_quarter(const Vector& params, const DsdmData& data, const WeightMatrix& w, int t) {
  const double rho = params(1);
  const double sigma2 = params(params.size() - 1);
  Vector delta = delta_from_params(params);
  double rss = rss_of_quarter(data, delta, rho, t);
  return -0.5 * data.m_dim * std::log(kTwoPi * sigma2) + fit_jacobian(data, w, rho) - rss / (2.0 * sigma2);
}

}  // namespace detail

// GLS coefficients, sigma2, and residual quadratics for a fixed rho.
struct ConcentratedFit {
  Vector delta;
  double sigma2 = 0;
  double rss = 0;
};

namespace detail {

inline void check_collinearity(const DsdmData& data) {
  Eigen::ColPivHouseholderQR<Matrix> qr(data.zz);
  if (qr.rank() < data.zz.cols()) {
    auto perm = qr.colsPermutation().indices();
    std::string names;
    for (int i = qr.rank(); i < data.zz.cols(); ++i) {
      if (!names.empty()) names += ", ";
      names += data.coef_names[static_cast<std::size_t>(perm(i))];
    }
    fail("dsdm", "singular regressor cross-product; collinear columns: " + names);
  }
}

struct ProfilePieces {
  Vector a, b;          // coefficient paths: delta(rho) = a - rho b
  double e00, e01, e11; // residual quadratics
};

inline ProfilePieces profile_pieces(const DsdmData& data) {
  check_collinearity(data);
  Eigen::LDLT<Matrix> ldlt(data.zz);
  ProfilePieces p;
  p.a = ldlt.solve(data.zy0);
  p.b = ldlt.solve(data.zy1);
  p.e00 = data.y00 - data.zy0.dot(p.a);
  p.e01 = data.y01 - data.zy0.dot(p.b);
  p.e11 = data.y11 - data.zy1.dot(p.b);
  return p;
}

}  // namespace detail

inline ConcentratedFit dsdm_gls_at_rho(const DsdmData& data, double rho) {
  auto p = detail::profile_pieces(data);
  ConcentratedFit fit;
  fit.delta = p.a - rho * p.b;
  fit.rss = std::max(0.0, p.e00 - 2.0 * rho * p.e01 + rho * rho * p.e11);
  fit.sigma2 = fit.rss / (static_cast<double>(data.m_dim) * data.t_eff);
  return fit;
}

namespace detail {

// Golden-section maximization of the concentrated likelihood over rho.
inline double maximize_profile(const std::function<double(double)>& value, double lo, double hi, double tol,
                               int max_iter) {
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = value(x1), f2 = value(x2);
  int iter = 0;
  while (b - a > tol) {
    if (++iter > max_iter)
      fail("dsdm", "rho line search did not converge in " + std::to_string(max_iter) +
                       " iterations; bracket [" + std::to_string(a) + ", " + std::to_string(b) + "]");
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = value(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = value(x1);
    }
  }
  return 0.5 * (a + b);
}

// Central finite-difference Hessian of the estimation objective, with steps
// shrunk near the rho interval and the sigma2 > 0 boundary.
inline Matrix fd_hessian(const Vector& p, const DsdmData& data, const WeightMatrix& w) {
  const int m = static_cast<int>(p.size());
  const RhoInterval iv = w.rho_interval();
  Vector h(m);
  for (int i = 0; i < m; ++i) {
    double step = 1e-5 * std::max(1.0, std::abs(p(i)));
    if (i == 1) step = std::min({step, 0.45 * (iv.hi - p(1)), 0.45 * (p(1) - iv.lo)});
    if (i == m - 1) step = std::min(step, 0.45 * p(m - 1));
    h(i) = std::max(step, 1e-12);
  }
  auto f = [&](const Vector& q) { return fit_objective(q, data, w); };
  Matrix hess(m, m);
  const double f0 = f(p);
  for (int i = 0; i < m; ++i) {
    Vector up = p, dn = p;
    up(i) += h(i);
    dn(i) -= h(i);
    hess(i, i) = (f(up) - 2.0 * f0 + f(dn)) / (h(i) * h(i));
    for (int j = i + 1; j < m; ++j) {
      Vector pp = p, pm = p, mp = p, mm = p;
      pp(i) += h(i); pp(j) += h(j);
      pm(i) += h(i); pm(j) -= h(j);
      mp(i) -= h(i); mp(j) += h(j);
      mm(i) -= h(i); mm(j) -= h(j);
      hess(i, j) = hess(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

// Invert a negated Hessian; falls back to an eigenvalue pseudo-inverse when
// the matrix is numerically singular.
inline Matrix invert_negative_hessian(const Matrix& hess, bool* used_pseudo) {
  Matrix neg = -0.5 * (hess + hess.transpose());
  Eigen::LDLT<Matrix> ldlt(neg);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Matrix inv = ldlt.solve(Matrix::Identity(neg.rows(), neg.cols()));
    if (inv.allFinite()) {
      if (used_pseudo) *used_pseudo = false;
      return 0.5 * (inv + inv.transpose());
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(neg);
  Vector vals = es.eigenvalues();
  double cutoff = 1e-12 * std::max(1.0, vals.cwiseAbs().maxCoeff());
  Vector inv_vals = Vector::Zero(vals.size());
  for (int i = 0; i < vals.size(); ++i)
    if (vals(i) > cutoff) inv_vals(i) = 1.0 / vals(i);
  if (used_pseudo) *used_pseudo = true;
  Matrix out = es.eigenvectors() * inv_vals.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline std::vector<std::string> param_names_for(const DsdmData& data) {
  std::vector<std::string> names = {"tau", "rho", "eta", "beta", "theta"};
  for (std::size_t i = 4; i < data.coef_names.size(); ++i) names.push_back(data.coef_names[i]);
  names.push_back("sigma2");
  return names;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Maximum likelihood: concentrate the linear block and sigma2, golden-section
// the profile over rho, recover the covariance from the inverse negated
// finite-difference Hessian, and (by default) remove the O(1/T) dynamic-panel
// bias with a half-panel jackknife over time.
// ---------------------------------------------------------------------------
namespace detail {

// optimum of the estimation objective in (delta, rho, sigma2) form, valid
// for reduced column sets too
struct RawPoint {
  Vector delta;
  double rho = 0.0, sigma2 = 1.0;
};

inline RawPoint fit_point_raw(const DsdmData& data, const WeightMatrix& w) {
  auto pieces = profile_pieces(data);
  const double nt = static_cast<double>(data.m_dim) * data.t_eff;
  const RhoInterval iv = w.rho_interval();
  const double pad = 1e-6 * (iv.hi - iv.lo);
  auto profile = [&](double rho) {
    double rss = std::max(1e-300, pieces.e00 - 2.0 * rho * pieces.e01 + rho * rho * pieces.e11);
    return -0.5 * nt * (std::log(kTwoPi * rss / nt) + 1.0) + data.t_eff * fit_jacobian(data, w, rho);
  };
  double rho_hat = maximize_profile(profile, iv.lo + pad, iv.hi - pad, 1e-8, 200);
  ConcentratedFit conc = dsdm_gls_at_rho(data, rho_hat);
  return {conc.delta, rho_hat, conc.sigma2};
}

// full-sample optimum of the estimation objective
inline Vector fit_point(const DsdmData& data, const WeightMatrix& w) {
  RawPoint p = fit_point_raw(data, w);
  return params_from(p.delta, p.rho, p.sigma2);
}

inline PanelDataset slice_quarters(const PanelDataset& panel, int col0, int ncols) {
  PanelDataset out;
  out.entity_ids = panel.entity_ids;
  out.quarters.assign(panel.quarters.begin() + col0, panel.quarters.begin() + col0 + ncols);
  out.roa = panel.roa.middleCols(col0, ncols);
  out.roe = panel.roe.middleCols(col0, ncols);
  out.treatment = panel.treatment.middleCols(col0, ncols);
  out.mentions = panel.mentions.middleCols(col0, ncols);
  for (const auto& [name, m] : panel.controls) out.controls[name] = m.middleCols(col0, ncols);
  out.coordinates = panel.coordinates;
  out.avg_log_assets = panel.avg_log_assets;
  return out;
}

// Columns without identifying variation in a subsample (a treatment that
// never switches inside the window is absorbed by the fixed effects).
inline std::vector<bool> live_columns(const DsdmData& data) {
  std::vector<bool> alive;
  for (int c = 0; c < data.z.cols(); ++c) {
    double scale = std::sqrt(data.zz(c, c) / data.z.rows());
    alive.push_back(scale > 1e-10);
  }
  return alive;
}

inline DsdmData select_columns(const DsdmData& data, const std::vector<bool>& alive) {
  std::vector<int> keep;
  for (std::size_t c = 0; c < alive.size(); ++c)
    if (alive[c]) keep.push_back(static_cast<int>(c));
  DsdmData out;
  out.n = data.n;
  out.t_eff = data.t_eff;
  out.m_dim = data.m_dim;
  out.drop_unit = data.drop_unit;
  for (int c : keep) out.coef_names.push_back(data.coef_names[static_cast<std::size_t>(c)]);
  out.z.resize(data.z.rows(), static_cast<long>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out.z.col(static_cast<long>(i)) = data.z.col(keep[i]);
  out.y0 = data.y0;
  out.y1 = data.y1;
  out.zz = out.z.transpose() * out.z;
  out.zy0 = out.z.transpose() * out.y0;
  out.zy1 = out.z.transpose() * out.y1;
  out.y00 = data.y00;
  out.y01 = data.y01;
  out.y11 = data.y11;
  return out;
}

}  // namespace detail

inline DsdmFit fit_mle(const DsdmSpec& spec, const PanelDataset& panel, const WeightMatrix& w) {
  DsdmData data = build_dsdm_data(panel, spec, w);
  const RhoInterval iv = w.rho_interval();
  Vector full = detail::fit_point(data, w);

  DsdmFit fit;
  fit.estimator = DsdmEstimator::mle;
  fit.param_names = detail::param_names_for(data);
  fit.uncorrected = full;
  fit.estimates = full;
  fit.rho_interval = iv;
  fit.n = data.n;
  fit.t_eff = data.t_eff;
  for (std::size_t i = 4; i < data.coef_names.size(); ++i) fit.control_names.push_back(data.coef_names[i]);

  bool hpj_applies = spec.bias_correction && spec.fixed_effects != FixedEffects::time && panel.t() >= 8;
  if (hpj_applies) {
    int half = panel.t() / 2;
    DsdmData d1 = build_dsdm_data(detail::slice_quarters(panel, 0, half), spec, w);
    DsdmData d2 = build_dsdm_data(detail::slice_quarters(panel, half, panel.t() - half), spec, w);
    // coefficients the halves cannot identify (a treatment switching on at
    // one date is constant inside each half) keep their full-sample values
    std::vector<bool> alive1 = detail::live_columns(d1);
    std::vector<bool> alive2 = detail::live_columns(d2);
    std::vector<bool> alive(alive1.size());
    for (std::size_t c = 0; c < alive.size(); ++c) alive[c] = alive1[c] && alive2[c];
    detail::RawPoint r1 = detail::fit_point_raw(detail::select_columns(d1, alive), w);
    detail::RawPoint r2 = detail::fit_point_raw(detail::select_columns(d2, alive), w);

    const int k = static_cast<int>(alive.size());
    auto expand_delta = [&](const Vector& reduced) {
      Vector delta = Vector::Zero(k);
      int r = 0;
      for (int c = 0; c < k; ++c)
        if (alive[static_cast<std::size_t>(c)]) delta(c) = reduced(r++);
      return delta;
    };
    Vector h1 = expand_delta(r1.delta), h2 = expand_delta(r2.delta);
    Vector full_delta = detail::delta_from_params(full);
    Vector corrected_delta = full_delta;
    for (int c = 0; c < k; ++c)
      if (alive[static_cast<std::size_t>(c)])
        corrected_delta(c) = 2.0 * full_delta(c) - 0.5 * (h1(c) + h2(c));
    double corrected_rho = 2.0 * full(1) - 0.5 * (r1.rho + r2.rho);
    double corrected_s2 = 2.0 * full(full.size() - 1) - 0.5 * (r1.sigma2 + r2.sigma2);
    corrected_rho = std::clamp(corrected_rho, iv.lo + 1e-8, iv.hi - 1e-8);
    corrected_s2 = std::max(corrected_s2, 1e-12);
    fit.estimates = detail::params_from(corrected_delta, corrected_rho, corrected_s2);
  }
  fit.loglik = dsdm_loglik(full, data, w);

  Matrix hess = detail::fd_hessian(full, data, w);
  bool pseudo = false;
  fit.vcov = detail::invert_negative_hessian(hess, &pseudo);
  if (pseudo) fit.diagnostics.warnings.push_back("hessian numerically singular; pseudo-inverse used for vcov");
  const int m = static_cast<int>(fit.estimates.size());
  fit.ses.resize(m);
  fit.ci.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    fit.ses(i) = std::sqrt(std::max(0.0, fit.vcov(i, i)));
    fit.ci(i, 0) = fit.estimates(i) - 1.959963984540054 * fit.ses(i);
    fit.ci(i, 1) = fit.estimates(i) + 1.959963984540054 * fit.ses(i);
  }
  if (std::abs(fit.tau()) + std::abs(fit.rho()) + std::abs(fit.eta()) >= 1.0)
    fit.diagnostics.warnings.push_back("tau + |rho| + |eta| >= 1: joint stationarity is not guaranteed");
  return fit;
}

// ---------------------------------------------------------------------------
// QMLE: identical point estimates, sandwich H^{-1} G H^{-1} covariance with
// per-quarter score contributions.
// ---------------------------------------------------------------------------
inline DsdmFit fit_qmle(const DsdmSpec& spec, const PanelDataset& panel, const WeightMatrix& w) {
  DsdmFit fit = fit_mle(spec, panel, w);
  fit.estimator = DsdmEstimator::qmle;
  DsdmData data = build_dsdm_data(panel, spec, w);
  const int m = static_cast<int>(fit.estimates.size());
  const RhoInterval iv = w.rho_interval();

  // scores at the full-sample optimum, where they sum to ~zero
  const Vector& at = fit.uncorrected;
  Vector h(m);
  for (int i = 0; i < m; ++i) {
    double step = 1e-5 * std::max(1.0, std::abs(at(i)));
    if (i == 1) step = std::min({step, 0.45 * (iv.hi - at(1)), 0.45 * (at(1) - iv.lo)});
    if (i == m - 1) step = std::min(step, 0.45 * at(m - 1));
    h(i) = std::max(step, 1e-12);
  }
  Matrix g_sum = Matrix::Zero(m, m);
  for (int t = 0; t < data.t_eff; ++t) {
    Vector score(m);
    for (int i = 0; i < m; ++i) {
      Vector up = at, dn = at;
      up(i) += h(i);
      dn(i) -= h(i);
      score(i) =
          (detail::fit_objective_quarter(up, data, w, t) - detail::fit_objective_quarter(dn, data, w, t)) /
          (2.0 * h(i));
    }
    g_sum += score * score.transpose();
  }
  Matrix hess = detail::fd_hessian(at, data, w);
  bool pseudo = false;
  Matrix hinv = detail::invert_negative_hessian(hess, &pseudo);
  if (pseudo) fit.diagnostics.warnings.push_back("hessian numerically singular; pseudo-inverse used in sandwich");
  fit.vcov = hinv * g_sum * hinv;
  fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose()).eval();
  for (int i = 0; i < m; ++i) {
    fit.ses(i) = std::sqrt(std::max(0.0, fit.vcov(i, i)));
    fit.ci(i, 0) = fit.estimates(i) - 1.959963984540054 * fit.ses(i);
    fit.ci(i, 1) = fit.estimates(i) + 1.959963984540054 * fit.ses(i);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Bayesian estimation by Metropolis-within-Gibbs.
//
//   priors: tau, rho, eta ~ Uniform(-1, 1) (rho further restricted to the
//           admissible interval), beta, theta, gamma ~ Normal(0, variance 10),
//           sigma2 ~ Inverse-Gamma(0.01, 0.01) in the shape/scale convention.
//
// The linear block (tau, eta, beta, theta, gamma) is conjugate given rho and
// sigma2; the uniform supports on tau and eta are enforced by rejection. rho
// moves by an adaptive random walk carrying the Jacobian term; sigma2 is a
// conjugate inverse-gamma draw.
// ---------------------------------------------------------------------------
inline DsdmFit fit_bayes(const DsdmSpec& spec, const PanelDataset& panel, const WeightMatrix& w,
                         const McmcConfig& cfg = {}) {
  require(cfg.burn_in < cfg.iterations, "dsdm", "burn_in must be smaller than iterations");
  DsdmData data = build_dsdm_data(panel, spec, w);
  if (!cfg.prior_only) detail::check_collinearity(data);
  const int k = static_cast<int>(data.coef_names.size());
  const int m = k + 2;
  const double nt = static_cast<double>(data.n) * data.t_eff;
  const RhoInterval iv = w.rho_interval();
  const double rho_lo = iv.lo, rho_hi = iv.hi;

  // prior precision on the linear block: flat for tau/eta, 1/10 for the rest
  Vector prior_prec = Vector::Constant(k, 1.0 / 10.0);
  prior_prec(0) = 0.0;
  prior_prec(1) = 0.0;
  const double ig_shape = 0.01, ig_scale = 0.01;

  Rng rng(cfg.seed);

  // deterministic start: GLS at rho = 0
  Vector delta;
  double rho = 0.0, sigma2 = 1.0;
  if (cfg.prior_only) {
    delta = Vector::Zero(k);
  } else {
    ConcentratedFit start = dsdm_gls_at_rho(data, 0.0);
    delta = start.delta;
    sigma2 = std::max(start.sigma2, 1e-8);
    delta(0) = std::clamp(delta(0), -0.99, 0.99);
    delta(1) = std::clamp(delta(1), -0.99, 0.99);
  }

  double step = cfg.rho_step;
  const int kept_n = cfg.iterations - cfg.burn_in;
  Matrix draws(kept_n, m);
  int accept_window = 0, window_size = 0;
  int accept_post = 0, post_proposals = 0;

  auto rho_log_target = [&](double r, const Vector& d, double s2) {
    double rss = detail::rss_of(data, d, r);
    if (cfg.prior_only) return 0.0;
    return data.t_eff * w.log_det(r) - rss / (2.0 * s2);
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    // --- linear block ---
    if (cfg.prior_only) {
      delta(0) = rng.uniform(-1.0, 1.0);
      delta(1) = rng.uniform(-1.0, 1.0);
      for (int i = 2; i < k; ++i) delta(i) = rng.normal(0.0, std::sqrt(10.0));
    } else {
      Matrix prec = data.zz / sigma2;
      prec.diagonal() += prior_prec;
      Eigen::LLT<Matrix> llt(prec);
      require(llt.info() == Eigen::Success, "dsdm", "conditional precision not positive definite");
      Vector rhs = (data.zy0 - rho * data.zy1) / sigma2;
      Vector mean = llt.solve(rhs);
      Matrix lmat = llt.matrixL();
      bool ok = false;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        Vector zdraw(k);
        for (int i = 0; i < k; ++i) zdraw(i) = rng.normal();
        Vector cand = mean + lmat.transpose().triangularView<Eigen::Upper>().solve(zdraw);
        if (std::abs(cand(0)) < 1.0 && std::abs(cand(1)) < 1.0) {
          delta = cand;
          ok = true;
        }
      }
      require(ok, "dsdm", "could not draw tau/eta inside (-1, 1) after 1000 attempts");
    }

    // --- rho: random-walk Metropolis ---
    {
      double proposal = rho + step * rng.normal();
      bool in_support = proposal > rho_lo && proposal < rho_hi;
      bool accepted = false;
      if (in_support) {
        double log_alpha = rho_log_target(proposal, delta, sigma2) - rho_log_target(rho, delta, sigma2);
        if (std::log(1.0 - rng.uniform()) < log_alpha) {  // 1-u in (0,1]
          rho = proposal;
          accepted = true;
        }
      }
      if (it < cfg.burn_in) {
        ++window_size;
        if (accepted) ++accept_window;
        if (cfg.adapt && window_size == 50) {
          double rate = static_cast<double>(accept_window) / window_size;
          step = std::clamp(step * std::exp(rate - 0.3), 1e-6, rho_hi - rho_lo);
          accept_window = 0;
          window_size = 0;
        }
      } else {
        ++post_proposals;
        if (accepted) ++accept_post;
      }
    }

    // --- sigma2: conjugate inverse-gamma ---
    {
      double shape = ig_shape, scale = ig_scale;
      if (!cfg.prior_only) {
        shape += 0.5 * nt;
        scale += 0.5 * detail::rss_of(data, delta, rho);
      }
      double g = rng.gamma(shape);
      for (int guard = 0; guard < 100 && !(g > 0.0 && std::isfinite(g)); ++guard) g = rng.gamma(shape);
      require(g > 0.0 && std::isfinite(g), "dsdm", "inverse-gamma draw degenerated");
      sigma2 = scale / g;
    }

    if (it >= cfg.burn_in) draws.row(it - cfg.burn_in) = detail::params_from(delta, rho, sigma2).transpose();
  }

  DsdmFit fit;
  fit.estimator = DsdmEstimator::bayes;
  fit.param_names = detail::param_names_for(data);
  fit.rho_interval = iv;
  fit.n = data.n;
  fit.t_eff = data.t_eff;
  for (std::size_t i = 4; i < data.coef_names.size(); ++i) fit.control_names.push_back(data.coef_names[i]);
  fit.draws = draws;
  fit.estimates.resize(m);
  fit.ses.resize(m);
  fit.ci.resize(m, 2);
  double rhat_max = 1.0;
  for (int j = 0; j < m; ++j) {
    std::vector<double> col(draws.col(j).data(), draws.col(j).data() + kept_n);
    fit.estimates(j) = mean_of(col);
    fit.ses(j) = sample_sd(col);
    fit.ci(j, 0) = quantile(col, 0.025);
    fit.ci(j, 1) = quantile(col, 0.975);
    // split-chain potential scale reduction
    int half = kept_n / 2;
    if (half >= 2) {
      std::vector<double> h1(col.begin(), col.begin() + half);
      std::vector<double> h2(col.begin() + half, col.begin() + 2 * half);
      double m1 = mean_of(h1), m2 = mean_of(h2);
      double s1 = sample_sd(h1), s2 = sample_sd(h2);
      double within = 0.5 * (s1 * s1 + s2 * s2);
      if (within > 1e-300) {
        double grand = 0.5 * (m1 + m2);
        double between = static_cast<double>(half) * ((m1 - grand) * (m1 - grand) + (m2 - grand) * (m2 - grand));
        double var_plus = (static_cast<double>(half - 1) / half) * within + between / half;
        rhat_max = std::max(rhat_max, std::sqrt(var_plus / within));
      }
    }
  }
  fit.diagnostics.rhat_max = rhat_max;
  if (post_proposals > 0)
    fit.diagnostics.rho_accept_rate = static_cast<double>(accept_post) / post_proposals;
  if (fit.diagnostics.rho_accept_rate < 0.1 || fit.diagnostics.rho_accept_rate > 0.6)
    fit.diagnostics.warnings.push_back("rho acceptance rate " + std::to_string(fit.diagnostics.rho_accept_rate) +
                                       " outside [0.1, 0.6] after adaptation");
  if (rhat_max > 1.1)
    fit.diagnostics.warnings.push_back("split-chain diagnostic " + std::to_string(rhat_max) + " > 1.1");
  if (std::abs(fit.tau()) + std::abs(fit.rho()) + std::abs(fit.eta()) >= 1.0)
    fit.diagnostics.warnings.push_back("tau + |rho| + |eta| >= 1: joint stationarity is not guaranteed");
  if (!cfg.prior_only) {
    Vector at_mean = fit.estimates;
    at_mean(1) = std::clamp(at_mean(1), rho_lo + 1e-9, rho_hi - 1e-9);
    fit.loglik = dsdm_loglik(at_mean, data, w);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Algorithmic-coupling correlation: baseline plus the extra correlation from
// shared AI systems when both entities have adopted, clamped to [-1, 1].
// ---------------------------------------------------------------------------
struct CouplingResult {
  double value = 0.0;
  bool clamped = false;
};

inline CouplingResult coupling_correlation(double base, double delta, int d_i, int d_j, double vendor_overlap) {
  require(base >= -1.0 && base <= 1.0, "dsdm", "baseline correlation must lie in [-1, 1]");
  require(vendor_overlap >= 0.0 && vendor_overlap <= 1.0, "dsdm", "vendor overlap must lie in [0, 1]");
  CouplingResult out;
  out.value = base + delta * (d_i != 0 ? 1.0 : 0.0) * (d_j != 0 ? 1.0 : 0.0) * vendor_overlap;
  if (out.value > 1.0) {
    out.value = 1.0;
    out.clamped = true;
  } else if (out.value < -1.0) {
    out.value = -1.0;
    out.clamped = true;
  }
  return out;
}

}  // namespace spillover
