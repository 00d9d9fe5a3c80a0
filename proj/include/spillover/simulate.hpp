#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "spillover/dsdm.hpp"
#include "spillover/panel.hpp"
#include "spillover/weights.hpp"

namespace spillover {

// ---------------------------------------------------------------------------
// Synthetic data-generating processes. These are the verification oracle for
// the estimators: panels come with their ground truth attached.
//
// Draw order is part of the contract (tests replay it): entity effects, time
// effects (burn-in first), controls column-by-column over all periods, then
// innovations period by period. Treatment assignment draws come before any
// outcome innovation.
// ---------------------------------------------------------------------------

enum class TreatmentRule { none, random_share, logit_selection };
enum class ErrorDist { normal, student_t5 };
enum class SdidVariant { parallel, heterogeneous_trends };

struct DgpSpec {
  int n = 50;
  int t = 40;
  // outcome equation
  double tau = 0, rho = 0, eta = 0, beta = 0, theta = 0;
  Vector gamma;  // one coefficient per generated control
  double sigma = 1.0;
  double fe_scale = 1.0;
  ErrorDist errors = ErrorDist::normal;
  // treatment
  TreatmentRule rule = TreatmentRule::random_share;
  double treat_share = 0.2;
  int treat_t0 = -1;  // retained-period column; default t/2
  double selection_strength = 1.0;
  // SDID outcome model
  SdidVariant variant = SdidVariant::parallel;
  double effect = 0.0;       // constant treatment effect added post-adoption
  double trend_scale = 0.0;  // entity trend slopes drawn from [0, trend_scale]
  std::array<double, 2> treated_trend_quantiles = {0.5, 0.9};  // inside the control span
  // weight-matrix construction for the recursion: 0 = Gaussian size kernel
  // at the default bandwidth, k > 0 = k-nearest-neighbor graph on the size
  // ladder (much sharper rows, which is what identifies rho well)
  int w_neighbors = 0;
  // machinery
  int burn_in = 50;
  std::uint64_t seed = 1;

  int t0_column() const { return treat_t0 >= 0 ? treat_t0 : t / 2; }
};

// k-nearest-neighbor adjacency on a scalar size ladder, row-normalized.
inline WeightMatrix size_neighbor_weights(const Vector& sizes, int k) {
  const int n = static_cast<int>(sizes.size());
  require(k >= 1 && k < n, "simulate", "neighbor count must be in [1, n)");
  Matrix raw = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    for (int j = 0; j < n; ++j)
      if (j != i) dist.push_back({std::abs(sizes(i) - sizes(j)), j});
    std::sort(dist.begin(), dist.end());
    for (int kk = 0; kk < k; ++kk) raw(i, dist[static_cast<std::size_t>(kk)].second) = 1.0;
  }
  return row_normalize(raw, WeightKind::network);
}

struct DgpTruth {
  double tau = 0, rho = 0, eta = 0, beta = 0, theta = 0, sigma = 0;
  Vector gamma;
  double att = 0;
  std::vector<int> treated;
  int t0 = 0;
};

struct SimulatedPanel {
  PanelDataset panel;
  DgpTruth truth;
  WeightMatrix w;  // the exact matrix used by the recursion
};

namespace detail {

inline double draw_error(Rng& rng, ErrorDist dist, double sigma) {
  if (dist == ErrorDist::student_t5) {
    // t(5) rescaled to variance sigma^2 (t(5) variance is 5/3)
    return sigma * std::sqrt(3.0 / 5.0) * rng.student_t(5.0);
  }
  return sigma * rng.normal();
}

inline std::vector<int> assign_treatment(Rng& rng, const DgpSpec& spec, const Vector& entity_effects) {
  std::vector<int> treated;
  if (spec.rule == TreatmentRule::none) return treated;
  if (spec.rule == TreatmentRule::random_share) {
    for (int i = 0; i < spec.n; ++i)
      if (rng.uniform() < spec.treat_share) treated.push_back(i);
  } else {
    // selection on the entity effect through a logit, centered so the
    // expected share stays near treat_share
    double scale = spec.fe_scale > 0 ? spec.fe_scale : 1.0;
    double intercept = std::log(spec.treat_share / (1.0 - spec.treat_share));
    for (int i = 0; i < spec.n; ++i) {
      double score = intercept + spec.selection_strength * entity_effects(i) / scale;
      double prob = 1.0 / (1.0 + std::exp(-score));
      if (rng.uniform() < prob) treated.push_back(i);
    }
  }
  // estimation needs both groups inhabited
  if (treated.empty()) treated.push_back(0);
  if (static_cast<int>(treated.size()) >= spec.n) treated.pop_back();
  return treated;
}

inline std::vector<Quarter> synthetic_quarters(int t) {
  // label backwards from 2025Q4 so any T fits the closed YYYYQn vocabulary
  std::vector<Quarter> out;
  int last = Quarter{2025, 4}.index();
  for (int j = t - 1; j >= 0; --j) out.push_back(Quarter::from_index(last - j));
  return out;
}

inline PanelDataset panel_shell(const DgpSpec& spec, const Matrix& y, const Matrix& d,
                                const std::vector<Matrix>& controls, const Vector& avg_log_assets) {
  PanelDataset p;
  for (int i = 0; i < spec.n; ++i) {
    std::string id = "B" + std::string(i < 9 ? "00" : i < 99 ? "0" : "") + std::to_string(i + 1);
    p.entity_ids.push_back(id);
  }
  p.quarters = synthetic_quarters(spec.t);
  p.roa = y;
  p.roe = y;  // synthetic panels carry a single outcome, mirrored
  p.treatment = d;
  p.mentions = Matrix::Constant(spec.n, spec.t, kMissing);
  for (std::size_t c = 0; c < controls.size(); ++c) p.controls["x" + std::to_string(c + 1)] = controls[c];
  p.controls["log_assets"] = avg_log_assets.replicate(1, spec.t);
  p.avg_log_assets = avg_log_assets;
  p.first_treated.assign(static_cast<std::size_t>(spec.n), -1);
  p.sdid_excluded.assign(static_cast<std::size_t>(spec.n), 0);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j < spec.t; ++j)
      if (d(i, j) > 0) {
        p.first_treated[static_cast<std::size_t>(i)] = j;
        break;
      }
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen_dsdm: forward-simulate the spatial panel recursion
//
//   Y_t = (I - rho W)^{-1} (tau Y_{t-1} + eta W Y_{t-1} + beta D_t
//         + theta W D_t + Gamma X_t + mu + delta_t 1 + eps_t)
//
// Burn-in periods run with D = 0 and are discarded; treatment switches on at
// the configured retained-period column.
// ---------------------------------------------------------------------------
inline SimulatedPanel gen_dsdm(const DgpSpec& spec, std::optional<WeightMatrix> w_in = {}) {
  require(std::abs(spec.tau) < 1.0, "simulate", "|tau| must be < 1");
  require(spec.sigma > 0.0, "simulate", "sigma must be positive");
  require(spec.burn_in >= 50, "simulate", "burn-in must be at least 50 periods");
  require(spec.n >= 2 && spec.t >= 3, "simulate", "panel too small");
  Rng rng(spec.seed);

  // size ladder for the network kernel (also stored as the log_assets control)
  Vector avg_log_assets(spec.n);
  for (int i = 0; i < spec.n; ++i) avg_log_assets(i) = 14.0 + 6.0 * rng.uniform();
  WeightMatrix w = w_in                   ? std::move(*w_in)
                   : spec.w_neighbors > 0 ? size_neighbor_weights(avg_log_assets, spec.w_neighbors)
                                          : network_weights(avg_log_assets);
  require(w.n() == spec.n, "simulate", "weight matrix dimension mismatch");
  require(w.rho_interval().contains(spec.rho), "simulate", "rho outside the admissible interval for W");

  const int total = spec.burn_in + spec.t;
  Vector mu(spec.n), delta(total);
  for (int i = 0; i < spec.n; ++i) mu(i) = spec.fe_scale * rng.normal();
  for (int s = 0; s < total; ++s) delta(s) = spec.fe_scale * rng.normal();

  const int kx = static_cast<int>(spec.gamma.size());
  std::vector<Matrix> x_total;
  for (int c = 0; c < kx; ++c) {
    Matrix m(spec.n, total);
    for (int i = 0; i < spec.n; ++i)
      for (int s = 0; s < total; ++s) m(i, s) = rng.normal();
    x_total.push_back(std::move(m));
  }

  std::vector<int> treated = detail::assign_treatment(rng, spec, mu);
  const int t0 = spec.t0_column();
  require(spec.rule == TreatmentRule::none || (t0 >= 0 && t0 < spec.t), "simulate",
          "treatment start outside the retained window");
  Matrix d_total = Matrix::Zero(spec.n, total);
  for (int i : treated)
    for (int s = spec.burn_in + t0; s < total; ++s) d_total(i, s) = 1.0;

  Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(spec.n, spec.n) - spec.rho * w.w());
  Matrix y_total(spec.n, total);
  Vector y_prev = Vector::Zero(spec.n);
  for (int s = 0; s < total; ++s) {
    Vector rhs = spec.tau * y_prev + spec.eta * (w.w() * y_prev) + spec.beta * d_total.col(s) +
                 spec.theta * (w.w() * d_total.col(s)) + mu + Vector::Constant(spec.n, delta(s));
    for (int c = 0; c < kx; ++c) rhs += spec.gamma(c) * x_total[static_cast<std::size_t>(c)].col(s);
    Vector eps(spec.n);
    for (int i = 0; i < spec.n; ++i) eps(i) = detail::draw_error(rng, spec.errors, spec.sigma);
    rhs += eps;
    y_prev = lu.solve(rhs);
    require(y_prev.cwiseAbs().maxCoeff() < 1e8, "simulate",
            "trajectory explosive at period " + std::to_string(s) + "; move (tau, rho, eta) toward stationarity");
    y_total.col(s) = y_prev;
  }

  std::vector<Matrix> x_kept;
  for (int c = 0; c < kx; ++c) x_kept.push_back(x_total[static_cast<std::size_t>(c)].rightCols(spec.t));
  SimulatedPanel out{detail::panel_shell(spec, y_total.rightCols(spec.t), d_total.rightCols(spec.t), x_kept,
                                         avg_log_assets),
                     DgpTruth{}, std::move(w)};
  out.truth.tau = spec.tau;
  out.truth.rho = spec.rho;
  out.truth.eta = spec.eta;
  out.truth.beta = spec.beta;
  out.truth.theta = spec.theta;
  out.truth.sigma = spec.sigma;
  out.truth.gamma = spec.gamma;
  out.truth.treated = treated;
  out.truth.t0 = t0;
  return out;
}

// ---------------------------------------------------------------------------
// gen_sdid: potential-outcomes panel. Untreated outcome = entity effect +
// time effect + optional entity-specific trend + noise; treated cells add a
// constant effect from the adoption column on. Treated trend slopes are drawn
// from an interior band of the control slope distribution so a convex
// combination of controls can reproduce the treated trajectory.
// ---------------------------------------------------------------------------
inline SimulatedPanel gen_sdid(const DgpSpec& spec) {
  require(spec.sigma >= 0.0, "simulate", "sigma must be nonnegative");
  require(spec.n >= 4 && spec.t >= 3, "simulate", "panel too small");
  Rng rng(spec.seed);

  Vector avg_log_assets(spec.n);
  for (int i = 0; i < spec.n; ++i) avg_log_assets(i) = 14.0 + 6.0 * rng.uniform();

  Vector mu(spec.n), delta(spec.t);
  for (int i = 0; i < spec.n; ++i) mu(i) = spec.fe_scale * rng.normal();
  for (int s = 0; s < spec.t; ++s) delta(s) = spec.fe_scale * rng.normal();

  std::vector<int> treated = detail::assign_treatment(rng, spec, mu);
  std::vector<std::uint8_t> is_treated(static_cast<std::size_t>(spec.n), 0);
  for (int i : treated) is_treated[static_cast<std::size_t>(i)] = 1;

  Vector slope = Vector::Zero(spec.n);
  if (spec.variant == SdidVariant::heterogeneous_trends && spec.trend_scale != 0.0) {
    if (spec.rule == TreatmentRule::logit_selection) {
      // trends ride on the entity effect, so selection on levels drags
      // trends along with it; controls still span the treated slopes
      double scale = spec.fe_scale > 0 ? spec.fe_scale : 1.0;
      for (int i = 0; i < spec.n; ++i)
        slope(i) = spec.trend_scale / (1.0 + std::exp(-mu(i) / scale));
    } else {
      double lo = spec.treated_trend_quantiles[0], hi = spec.treated_trend_quantiles[1];
      for (int i = 0; i < spec.n; ++i) {
        double u = is_treated[static_cast<std::size_t>(i)] ? lo + (hi - lo) * rng.uniform() : rng.uniform();
        slope(i) = spec.trend_scale * u;
      }
    }
  }

  const int t0 = spec.t0_column();
  require(t0 >= 1 && t0 < spec.t, "simulate", "treatment start outside the panel");
  Matrix y(spec.n, spec.t), d = Matrix::Zero(spec.n, spec.t);
  for (int i = 0; i < spec.n; ++i)
    for (int s = 0; s < spec.t; ++s) {
      double value = mu(i) + delta(s) + slope(i) * s;
      if (is_treated[static_cast<std::size_t>(i)] && s >= t0) {
        value += spec.effect;
        d(i, s) = 1.0;
      }
      y(i, s) = value + (spec.sigma > 0 ? detail::draw_error(rng, spec.errors, spec.sigma) : 0.0);
    }

  SimulatedPanel out{detail::panel_shell(spec, y, d, {}, avg_log_assets), DgpTruth{},
                     network_weights(avg_log_assets)};
  out.truth.att = spec.effect;
  out.truth.sigma = spec.sigma;
  out.truth.treated = treated;
  out.truth.t0 = t0;
  return out;
}

}  // namespace spillover
