#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spillover/panel.hpp"

namespace spillover {

// ---------------------------------------------------------------------------
// Synthetic difference-in-differences.
//
// Unit weights make a convex combination of control trajectories track the
// treated average over pre-periods; time weights make a convex combination of
// pre-periods track control post-means. The estimator combines the four
// weighted means:
//
//   att = (Y1_post - Y1_pre^lambda) - (Y0_post^omega - Y0_pre^{omega,lambda})
//
// Default regularization follows the canonical estimator: the ridge strength
// zeta enters the quadratic program as zeta^2 * (#rows), with
// zeta_unit = (n_treated * t_post)^{1/4} * sd(first differences of control
// outcomes over pre-periods) and zeta_time = 1e-6 * that sd as a tie-breaker.
// This squared convention is what keeps the estimator scale-equivariant.
// ---------------------------------------------------------------------------

struct SdidProblem {
  Matrix y;                  // N x T outcomes
  std::vector<int> treated;  // row indices of treated entities
  int t0 = 0;                // first post-treatment column
  std::optional<double> zeta_unit;  // strength; default rule when unset
  std::optional<double> zeta_time;
  bool with_intercept = false;  // center the unit program (off: program as printed)
};

struct SdidResult {
  double att = kMissing;
  double se = kMissing;
  double ci_lower = kMissing, ci_upper = kMissing;
  Vector omega;   // per-control weights, simplex
  Vector lambda;  // per-pre-period weights, simplex
  Vector bootstrap_draws;
  std::vector<int> control_rows;  // rows omega refers to
};

// ---------------------------------------------------------------------------
// min_{w in simplex} ||A w - b||^2 + zeta ||w||^2 by projected gradient with
// fixed step 1/L, uniform start. zeta here is the literal quadratic
// coefficient. Converges to relative objective tolerance 1e-10.
// ---------------------------------------------------------------------------
namespace detail {

inline Vector project_simplex(Vector v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  int support = 0;
  for (int i = 0; i < n; ++i) {
    cum += u[static_cast<std::size_t>(i)];
    double candidate = (cum - 1.0) / (i + 1);
    if (u[static_cast<std::size_t>(i)] - candidate > 0.0) {
      tau = candidate;
      support = i + 1;
    }
  }
  (void)support;
  for (int i = 0; i < n; ++i) v(i) = std::max(0.0, v(i) - tau);
  return v;
}

inline void assert_simplex(const Vector& w, const char* label) {
  double sum = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    require(w(i) >= -1e-12, "sdid", std::string(label) + " weight went negative");
    sum += w(i);
  }
  require(std::abs(sum - 1.0) <= 1e-10, "sdid", std::string(label) + " weights do not sum to 1");
}

}  // namespace detail

namespace detail {

// Active-set solve from a warm-start support: solve the equality-constrained
// subproblem on the support, drop coordinates pushed negative, add the most
// violating outside coordinate, until the KKT conditions certify optimality.
// This is what terminates rank-deficient instances (duplicated bootstrap
// controls under a tiny tie-breaker ridge) where a fixed-step gradient
// crawls; it also leaves clean instances at machine precision. Returns false
// when no certificate is reached.
inline bool active_set_solve(const Matrix& g, const Vector& h, const Vector& start, Vector& out) {
  const int j = static_cast<int>(start.size());
  std::vector<bool> in_support(static_cast<std::size_t>(j), false);
  int support_size = 0;
  for (int i = 0; i < j; ++i)
    if (start(i) > 1e-10) {
      in_support[static_cast<std::size_t>(i)] = true;
      ++support_size;
    }
  if (support_size == 0) in_support.assign(static_cast<std::size_t>(j), true);
  for (int round = 0; round < 4 * j + 8; ++round) {
    std::vector<int> support;
    for (int i = 0; i < j; ++i)
      if (in_support[static_cast<std::size_t>(i)]) support.push_back(i);
    const int s = static_cast<int>(support.size());
    if (s == 0) return false;
    Matrix kkt = Matrix::Zero(s + 1, s + 1);
    Vector rhs(s + 1);
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c)
        kkt(r, c) = 2.0 * g(support[static_cast<std::size_t>(r)], support[static_cast<std::size_t>(c)]);
      kkt(r, s) = 1.0;
      kkt(s, r) = 1.0;
      rhs(r) = 2.0 * h(support[static_cast<std::size_t>(r)]);
    }
    rhs(s) = 1.0;
    Vector sol = kkt.fullPivLu().solve(rhs);
    if (!sol.allFinite()) return false;
    // feasibility: drop the most negative support coordinate first
    int worst = -1;
    double worst_val = -1e-12;
    for (int r = 0; r < s; ++r)
      if (sol(r) < worst_val) {
        worst_val = sol(r);
        worst = r;
      }
    if (worst >= 0) {
      in_support[static_cast<std::size_t>(support[static_cast<std::size_t>(worst)])] = false;
      continue;
    }
    Vector candidate = Vector::Zero(j);
    for (int r = 0; r < s; ++r) candidate(support[static_cast<std::size_t>(r)]) = std::max(0.0, sol(r));
    if (std::abs(candidate.sum() - 1.0) > 1e-9) return false;
    candidate /= candidate.sum();
    // optimality: on-support gradients share the multiplier, off-support
    // gradients may not undercut it
    Vector grad = 2.0 * (g * candidate - h);
    double nu = 0.0;
    for (int r = 0; r < s; ++r) nu += grad(support[static_cast<std::size_t>(r)]);
    nu /= s;
    double tol = 1e-9 * std::max(1.0, grad.cwiseAbs().maxCoeff());
    for (int r = 0; r < s; ++r)
      if (std::abs(grad(support[static_cast<std::size_t>(r)]) - nu) > tol) return false;
    int add = -1;
    double add_violation = tol;
    for (int i = 0; i < j; ++i) {
      if (in_support[static_cast<std::size_t>(i)]) continue;
      double violation = nu - grad(i);
      if (violation > add_violation) {
        add_violation = violation;
        add = i;
      }
    }
    if (add >= 0) {
      in_support[static_cast<std::size_t>(add)] = true;
      continue;
    }
    out = candidate;
    return true;
  }
  return false;
}

}  // namespace detail

inline Vector solve_simplex_ridge(const Matrix& a, const Vector& b, double zeta, int max_iter = 50000,
                                  double tol = 1e-10) {
  const int j = static_cast<int>(a.cols());
  require(j >= 1, "sdid", "no candidate columns to weight");
  require(a.rows() == b.size(), "sdid", "target length does not match candidate trajectories");
  require(zeta >= 0.0, "sdid", "regularization must be nonnegative");

  Matrix g = a.transpose() * a;
  g.diagonal().array() += zeta;
  Vector h = a.transpose() * b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  double lipschitz = 2.0 * std::max(es.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lipschitz;
  const double b2 = b.squaredNorm();

  Vector w = Vector::Constant(j, 1.0 / j);
  auto objective = [&](const Vector& x) { return x.dot(g * x) - 2.0 * h.dot(x) + b2; };
  double f = objective(w);
  for (int it = 0; it < max_iter; ++it) {
    Vector grad = 2.0 * (g * w - h);
    Vector next = detail::project_simplex(w - step * grad);
    double f_next = objective(next);
    w = next;
    bool within_tol = std::abs(f - f_next) <= tol * std::max(1.0, std::abs(f));
    // attempt the exact finisher at convergence and periodically on slow
    // (ill-conditioned) instances
    if (within_tol || (it + 1) % 500 == 0) {
      Vector finished;
      if (detail::active_set_solve(g, h, w, finished) && objective(finished) <= f_next + tol) {
        detail::assert_simplex(finished, "solved");
        return finished;
      }
      if (within_tol) {
        detail::assert_simplex(w, "solved");
        return w;
      }
    }
    f = f_next;
  }
  fail("sdid", "simplex solver hit the iteration cap (" + std::to_string(max_iter) +
                   "); final objective " + std::to_string(std::abs(f)));
}

// ---------------------------------------------------------------------------
// fit_sdid
// ---------------------------------------------------------------------------
namespace detail {

struct SdidPieces {
  std::vector<int> controls;
  Matrix y0_pre;    // controls x pre
  Vector y0_post;   // control post means
  Vector y1_pre;    // treated mean per pre-period
  double y1_post = 0;
  double sigma_hat = 0;
  int t_pre = 0, t_post = 0, n_treated = 0;
};

inline SdidPieces split_problem(const SdidProblem& p) {
  const int n = static_cast<int>(p.y.rows()), t = static_cast<int>(p.y.cols());
  require(!p.treated.empty(), "sdid", "no treated entities");
  std::set<int> treated_set(p.treated.begin(), p.treated.end());
  require(static_cast<int>(treated_set.size()) == static_cast<int>(p.treated.size()), "sdid",
          "duplicate treated indices");
  for (int i : p.treated) require(i >= 0 && i < n, "sdid", "treated index out of range");
  require(p.t0 >= 1 && p.t0 <= t - 1, "sdid", "t0 must leave at least one pre and one post period");

  SdidPieces out;
  out.t_pre = p.t0;
  out.t_post = t - p.t0;
  out.n_treated = static_cast<int>(p.treated.size());
  for (int i = 0; i < n; ++i)
    if (!treated_set.count(i)) out.controls.push_back(i);
  require(static_cast<int>(out.controls.size()) >= 2, "sdid", "need at least 2 control entities");
  require(out.t_pre >= 2, "sdid", "need at least 2 pre-treatment periods");

  const int nc = static_cast<int>(out.controls.size());
  out.y0_pre.resize(nc, out.t_pre);
  out.y0_post.resize(nc);
  for (int c = 0; c < nc; ++c) {
    int row = out.controls[static_cast<std::size_t>(c)];
    out.y0_pre.row(c) = p.y.row(row).head(out.t_pre);
    out.y0_post(c) = p.y.row(row).tail(out.t_post).mean();
  }
  out.y1_pre = Vector::Zero(out.t_pre);
  out.y1_post = 0.0;
  for (int i : p.treated) {
    out.y1_pre += p.y.row(i).head(out.t_pre).transpose();
    out.y1_post += p.y.row(i).tail(out.t_post).mean();
  }
  out.y1_pre /= out.n_treated;
  out.y1_post /= out.n_treated;

  for (int c = 0; c < nc; ++c)
    for (int j = 0; j < static_cast<int>(p.y.cols()); ++j)
      require(!is_missing(p.y(out.controls[static_cast<std::size_t>(c)], j)), "sdid",
              "missing outcome cell; SDID uses listwise-complete entities only");
  for (int i : p.treated)
    for (int j = 0; j < static_cast<int>(p.y.cols()); ++j)
      require(!is_missing(p.y(i, j)), "sdid", "missing outcome cell; SDID uses listwise-complete entities only");

  // noise scale: sd of first-differenced control outcomes over pre-periods
  std::vector<double> diffs;
  for (int c = 0; c < nc; ++c)
    for (int j = 1; j < out.t_pre; ++j) diffs.push_back(out.y0_pre(c, j) - out.y0_pre(c, j - 1));
  double sd = diffs.size() >= 2 ? sample_sd(diffs) : 0.0;
  out.sigma_hat = std::isfinite(sd) ? sd : 0.0;
  return out;
}

}  // namespace detail

inline SdidResult fit_sdid(const SdidProblem& problem) {
  auto pieces = detail::split_problem(problem);
  const int nc = static_cast<int>(pieces.controls.size());

  double zeta_unit_strength = problem.zeta_unit
                                  ? *problem.zeta_unit
                                  : std::pow(static_cast<double>(pieces.n_treated) * pieces.t_post, 0.25) *
                                        pieces.sigma_hat;
  double zeta_time_strength = problem.zeta_time ? *problem.zeta_time : 1e-6 * pieces.sigma_hat;
  require(zeta_unit_strength >= 0.0 && zeta_time_strength >= 0.0, "sdid", "zeta must be nonnegative");

  // unit weights: columns are control pre trajectories, target the treated mean
  Matrix a_unit = pieces.y0_pre.transpose();  // t_pre x controls
  Vector b_unit = pieces.y1_pre;
  if (problem.with_intercept) {
    Eigen::RowVectorXd col_means = a_unit.colwise().mean();
    a_unit.rowwise() -= col_means;
    b_unit.array() -= b_unit.mean();
  }
  double zeta_unit_eff = zeta_unit_strength * zeta_unit_strength * pieces.t_pre;
  Vector omega = solve_simplex_ridge(a_unit, b_unit, zeta_unit_eff);

  // time weights: rows are control pre values, target control post means
  double zeta_time_eff = zeta_time_strength * zeta_time_strength * nc;
  Vector lambda = solve_simplex_ridge(pieces.y0_pre, pieces.y0_post, zeta_time_eff);

  detail::assert_simplex(omega, "unit");
  detail::assert_simplex(lambda, "time");

  SdidResult out;
  out.omega = omega;
  out.lambda = lambda;
  out.control_rows = pieces.controls;
  double y1_pre_l = lambda.dot(pieces.y1_pre);
  double y0_post_w = omega.dot(pieces.y0_post);
  double y0_pre_wl = omega.dot(pieces.y0_pre * lambda);
  out.att = (pieces.y1_post - y1_pre_l) - (y0_post_w - y0_pre_wl);
  return out;
}

// Classical two-by-two difference-in-differences on group x period means.
inline double classic_did(const SdidProblem& problem) {
  auto pieces = detail::split_problem(problem);
  double y1_pre = pieces.y1_pre.mean();
  double y0_pre = pieces.y0_pre.mean();
  double y0_post = pieces.y0_post.mean();
  return (pieces.y1_post - y1_pre) - (y0_post - y0_pre);
}

// ---------------------------------------------------------------------------
// Placebo bootstrap: resample entities with replacement within the treated
// and control strata, refit weights and the estimator per draw. Deterministic
// given the seed; draws with fewer than 2 distinct controls are redrawn.
// ---------------------------------------------------------------------------
struct BootstrapResult {
  double se = kMissing;
  Vector draws;
};

inline BootstrapResult bootstrap_se(const SdidProblem& problem, int b = 200, std::uint64_t seed = 0,
                                    int workers = 1) {
  require(b >= 2, "sdid", "need at least 2 bootstrap replications");
  auto pieces = detail::split_problem(problem);
  const int nc = static_cast<int>(pieces.controls.size());
  const int ntr = pieces.n_treated;
  const int t = static_cast<int>(problem.y.cols());

  BootstrapResult out;
  out.draws.resize(b);
  std::vector<long> redraws(static_cast<std::size_t>(b), 0);
  parallel_for(static_cast<std::size_t>(b), workers, [&](std::size_t rep) {
    Rng rng(derive_seed(seed, rep));
    const long cap = 10;  // per-draw share of the global 10B redraw budget
    for (long attempt = 0;; ++attempt) {
      if (attempt > cap) fail("sdid", "bootstrap redraw cap exceeded (too few distinct controls)");
      std::vector<int> treated_rows, control_rows;
      std::set<int> distinct;
      for (int i = 0; i < ntr; ++i) treated_rows.push_back(problem.treated[rng.index(static_cast<std::size_t>(ntr))]);
      for (int i = 0; i < nc; ++i) {
        int pick = pieces.controls[rng.index(static_cast<std::size_t>(nc))];
        control_rows.push_back(pick);
        distinct.insert(pick);
      }
      if (static_cast<int>(distinct.size()) < 2) {
        ++redraws[rep];
        continue;
      }
      SdidProblem resampled;
      resampled.t0 = problem.t0;
      resampled.zeta_unit = problem.zeta_unit;
      resampled.zeta_time = problem.zeta_time;
      resampled.with_intercept = problem.with_intercept;
      resampled.y.resize(ntr + nc, t);
      int r = 0;
      for (int row : treated_rows) {
        resampled.y.row(r) = problem.y.row(row);
        resampled.treated.push_back(r);
        ++r;
      }
      for (int row : control_rows) resampled.y.row(r++) = problem.y.row(row);
      out.draws(static_cast<int>(rep)) = fit_sdid(resampled).att;
      return;
    }
  });

  double mean = out.draws.mean();
  double ss = (out.draws.array() - mean).square().sum();
  out.se = std::sqrt(ss / (b - 1));
  return out;
}

// Convenience: point estimate plus bootstrap inference in one call.
inline SdidResult fit_sdid_with_inference(const SdidProblem& problem, int b = 200, std::uint64_t seed = 0,
                                          int workers = 1) {
  SdidResult result = fit_sdid(problem);
  BootstrapResult boot = bootstrap_se(problem, b, seed, workers);
  result.se = boot.se;
  result.bootstrap_draws = boot.draws;
  result.ci_lower = result.att - 1.96 * result.se;
  result.ci_upper = result.att + 1.96 * result.se;
  return result;
}

// ---------------------------------------------------------------------------
// Event study across staggered adoption cohorts. Horizon k re-fits SDID with
// the post set restricted to the single column t* + k; negative horizons are
// placebo fits that pretend adoption at t* + k using only earlier periods.
// Cohort estimates aggregate weighted by treated counts. Confidence bands
// come from the stratified entity bootstrap of the whole aggregation.
// ---------------------------------------------------------------------------
struct EventStudyConfig {
  int k_min = -4, k_max = 4;
  int bootstrap = 200;
  std::uint64_t seed = 0;
  int workers = 1;
  std::optional<double> zeta_unit, zeta_time;
};

struct EventStudyResult {
  std::vector<int> horizons;
  Vector att;           // per horizon (NaN when no cohort supports it)
  Vector se;
  Vector ci_lower, ci_upper;
  std::vector<int> cohort_count;  // cohorts contributing per horizon
  std::vector<int> treated_count; // treated entities contributing per horizon
};

namespace detail {

struct CohortLayout {
  std::map<int, std::vector<int>> cohorts;  // adoption column -> treated rows
  std::vector<int> never_treated;
};

inline CohortLayout cohort_layout(const std::vector<int>& first_treated) {
  CohortLayout out;
  for (std::size_t i = 0; i < first_treated.size(); ++i) {
    if (first_treated[i] < 0)
      out.never_treated.push_back(static_cast<int>(i));
    else
      out.cohorts[first_treated[i]].push_back(static_cast<int>(i));
  }
  return out;
}

// One cohort-horizon SDID value; returns NaN when the window does not fit.
inline double cohort_horizon_att(const Matrix& y, const std::vector<int>& treated_rows,
                                 const std::vector<int>& donor_rows, int t_star, int k,
                                 const std::optional<double>& zu, const std::optional<double>& zt) {
  const int t = static_cast<int>(y.cols());
  int col = t_star + k;
  if (col < 0 || col >= t) return kMissing;
  int pre_end = k >= 0 ? t_star : col;  // placebo horizons only use earlier data
  if (pre_end < 2 || static_cast<int>(donor_rows.size()) < 2) return kMissing;

  SdidProblem sub;
  sub.t0 = pre_end;
  sub.zeta_unit = zu;
  sub.zeta_time = zt;
  const int rows = static_cast<int>(treated_rows.size() + donor_rows.size());
  sub.y.resize(rows, pre_end + 1);
  int r = 0;
  for (int row : treated_rows) {
    sub.y.row(r).head(pre_end) = y.row(row).head(pre_end);
    sub.y(r, pre_end) = y(row, col);
    sub.treated.push_back(r);
    ++r;
  }
  for (int row : donor_rows) {
    sub.y.row(r).head(pre_end) = y.row(row).head(pre_end);
    sub.y(r, pre_end) = y(row, col);
    ++r;
  }
  return fit_sdid(sub).att;
}

struct EventPoint {
  Vector att;
  std::vector<int> cohort_count, treated_count;
};

inline EventPoint event_point(const Matrix& y, const CohortLayout& layout, const EventStudyConfig& cfg) {
  const int nk = cfg.k_max - cfg.k_min + 1;
  EventPoint out;
  out.att = Vector::Constant(nk, kMissing);
  out.cohort_count.assign(static_cast<std::size_t>(nk), 0);
  out.treated_count.assign(static_cast<std::size_t>(nk), 0);
  for (int ki = 0; ki < nk; ++ki) {
    int k = cfg.k_min + ki;
    double weighted = 0.0;
    int weight_sum = 0, cohorts_used = 0;
    for (const auto& [t_star, rows] : layout.cohorts) {
      // donors: never treated plus cohorts adopting after the horizon window
      std::vector<int> donors = layout.never_treated;
      for (const auto& [other_star, other_rows] : layout.cohorts)
        if (other_star > t_star + cfg.k_max)
          donors.insert(donors.end(), other_rows.begin(), other_rows.end());
      double att = cohort_horizon_att(y, rows, donors, t_star, k, cfg.zeta_unit, cfg.zeta_time);
      if (is_missing(att)) continue;
      weighted += att * static_cast<double>(rows.size());
      weight_sum += static_cast<int>(rows.size());
      ++cohorts_used;
    }
    if (weight_sum > 0) {
      out.att(ki) = weighted / weight_sum;
      out.cohort_count[static_cast<std::size_t>(ki)] = cohorts_used;
      out.treated_count[static_cast<std::size_t>(ki)] = weight_sum;
    }
  }
  return out;
}

}  // namespace detail

inline EventStudyResult event_study(const Matrix& y, const std::vector<int>& first_treated,
                                    const EventStudyConfig& cfg = {}) {
  require(static_cast<std::size_t>(y.rows()) == first_treated.size(), "sdid",
          "first_treated length does not match the panel");
  require(cfg.k_min <= 0 && cfg.k_max >= 0, "sdid", "horizon range must include 0");
  auto layout = detail::cohort_layout(first_treated);
  require(!layout.cohorts.empty(), "sdid", "no treated cohorts");

  auto base = detail::event_point(y, layout, cfg);
  bool any = false;
  for (int i = 0; i < base.att.size(); ++i)
    if (!is_missing(base.att(i))) any = true;
  require(any, "sdid", "no cohort satisfies the event-study preconditions");

  const int nk = cfg.k_max - cfg.k_min + 1;
  EventStudyResult out;
  for (int k = cfg.k_min; k <= cfg.k_max; ++k) out.horizons.push_back(k);
  out.att = base.att;
  out.cohort_count = base.cohort_count;
  out.treated_count = base.treated_count;
  out.se = Vector::Constant(nk, kMissing);
  out.ci_lower = Vector::Constant(nk, kMissing);
  out.ci_upper = Vector::Constant(nk, kMissing);

  // stratified entity bootstrap of the whole aggregation
  Matrix boot(cfg.bootstrap, nk);
  parallel_for(static_cast<std::size_t>(cfg.bootstrap), cfg.workers, [&](std::size_t rep) {
    Rng rng(derive_seed(cfg.seed, rep));
    std::vector<int> rows;
    std::vector<int> ft;
    for (const auto& [t_star, members] : layout.cohorts)
      for (std::size_t i = 0; i < members.size(); ++i) {
        rows.push_back(members[rng.index(members.size())]);
        ft.push_back(t_star);
      }
    for (std::size_t i = 0; i < layout.never_treated.size(); ++i) {
      rows.push_back(layout.never_treated[rng.index(layout.never_treated.size())]);
      ft.push_back(-1);
    }
    Matrix yb(rows.size(), y.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) yb.row(static_cast<int>(r)) = y.row(rows[r]);
    auto lb = detail::cohort_layout(ft);
    auto pt = detail::event_point(yb, lb, cfg);
    boot.row(static_cast<int>(rep)) = pt.att.transpose();
  });
  for (int ki = 0; ki < nk; ++ki) {
    std::vector<double> vals;
    for (int r = 0; r < boot.rows(); ++r)
      if (!is_missing(boot(r, ki))) vals.push_back(boot(r, ki));
    if (vals.size() >= 2 && !is_missing(out.att(ki))) {
      out.se(ki) = sample_sd(vals);
      out.ci_lower(ki) = out.att(ki) - 1.96 * out.se(ki);
      out.ci_upper(ki) = out.att(ki) + 1.96 * out.se(ki);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Placebo with a shifted treatment date: keep only data from before the true
// adoption, pretend treatment started at fake_t0, refit with inference. A
// valid design produces an ATT near zero.
// ---------------------------------------------------------------------------
inline SdidResult placebo_shift(const SdidProblem& problem, const std::vector<int>& first_treated,
                                int fake_t0, int b = 200, std::uint64_t seed = 0, int workers = 1) {
  int true_start = std::numeric_limits<int>::max();
  for (int i : problem.treated) {
    int ft = first_treated.empty() ? -1 : first_treated[static_cast<std::size_t>(i)];
    if (ft >= 0) true_start = std::min(true_start, ft);
  }
  if (true_start == std::numeric_limits<int>::max()) true_start = problem.t0;
  true_start = std::min(true_start, static_cast<int>(problem.y.cols()));
  require(fake_t0 < true_start, "sdid", "placebo date must precede every true adoption");
  require(fake_t0 >= 2, "sdid", "insufficient pre-periods before the placebo date");

  SdidProblem shifted;
  shifted.y = problem.y.leftCols(true_start);
  shifted.treated = problem.treated;
  shifted.t0 = fake_t0;
  shifted.zeta_unit = problem.zeta_unit;
  shifted.zeta_time = problem.zeta_time;
  shifted.with_intercept = problem.with_intercept;
  return fit_sdid_with_inference(shifted, b, seed, workers);
}

// ---------------------------------------------------------------------------
// Placebo by random reassignment: permute the treated label across entities
// and collect the permutation distribution of the estimator. The p-value is
// the rank of |actual| within 1 + |draws|.
// ---------------------------------------------------------------------------
struct PlaceboRandomResult {
  double actual_att = kMissing;
  double p_value = kMissing;
  Vector draws;
};

inline PlaceboRandomResult placebo_random(const SdidProblem& problem, std::uint64_t seed, int reps = 100,
                                          int workers = 1) {
  require(reps >= 100, "sdid", "need at least 100 permutation replications");
  PlaceboRandomResult out;
  out.actual_att = fit_sdid(problem).att;
  out.draws.resize(reps);
  const int n = static_cast<int>(problem.y.rows());
  const int ntr = static_cast<int>(problem.treated.size());
  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t rep) {
    Rng rng(derive_seed(seed, rep));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    SdidProblem permuted = problem;
    permuted.treated.assign(order.begin(), order.begin() + ntr);
    out.draws(static_cast<int>(rep)) = fit_sdid(permuted).att;
  });
  int at_least = 0;
  for (int r = 0; r < reps; ++r)
    if (std::abs(out.draws(r)) >= std::abs(out.actual_att)) ++at_least;
  out.p_value = static_cast<double>(1 + at_least) / (reps + 1);
  return out;
}

}  // namespace spillover
