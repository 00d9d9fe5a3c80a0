#include <catch2/catch_amalgamated.hpp>

#include "spillover/dsdm.hpp"
#include "spillover/simulate.hpp"

using namespace spillover;

namespace {

// a small panel with reproducible numbers and a known 3x3 weight matrix
SimulatedPanel toy_panel(int n, int t, std::uint64_t seed) {
  DgpSpec spec;
  spec.n = n;
  spec.t = t;
  spec.tau = 0.4;
  spec.rho = 0.3;
  spec.eta = -0.1;
  spec.beta = 0.25;
  spec.theta = 0.3;
  spec.gamma = Vector::Constant(1, 0.6);
  spec.treat_share = 0.5;
  spec.treat_t0 = t / 2;
  spec.w_neighbors = std::min(4, n - 1);
  spec.seed = seed;
  return gen_dsdm(spec);
}

// scalar-by-scalar evaluation of the printed likelihood formula: plain loops
// for the demeaning, residuals, and sums; the Jacobian from an LU determinant
double loglik_oracle(const Vector& params, const PanelDataset& panel, const std::vector<std::string>& controls,
                     const Matrix& w) {
  const int n = panel.n(), t = panel.t(), te = t - 1;
  double tau = params(0), rho = params(1), eta = params(2), beta = params(3), theta = params(4);
  std::vector<double> gamma;
  for (int c = 0; c < static_cast<int>(controls.size()); ++c) gamma.push_back(params(5 + c));
  double sigma2 = params(params.size() - 1);

  // spatial lags on raw data
  auto spatial = [&](const Matrix& m) {
    Matrix out = Matrix::Zero(n, t);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int s = 0; s < t; ++s) out(i, s) += w(i, j) * m(j, s);
    return out;
  };
  Matrix wy = spatial(panel.roa);
  Matrix wd = spatial(panel.treatment);

  // slice to quarters 2..T, demean with loops
  auto demean_window = [&](const Matrix& m, int shift) {
    Matrix win(n, te);
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < te; ++s) win(i, s) = m(i, s + 1 - shift);
    std::vector<double> rowm(static_cast<std::size_t>(n), 0.0), colm(static_cast<std::size_t>(te), 0.0);
    double grand = 0.0;
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < te; ++s) {
        rowm[static_cast<std::size_t>(i)] += win(i, s);
        colm[static_cast<std::size_t>(s)] += win(i, s);
        grand += win(i, s);
      }
    for (int i = 0; i < n; ++i) rowm[static_cast<std::size_t>(i)] /= te;
    for (int s = 0; s < te; ++s) colm[static_cast<std::size_t>(s)] /= n;
    grand /= n * te;
    Matrix out(n, te);
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < te; ++s)
        out(i, s) = win(i, s) - rowm[static_cast<std::size_t>(i)] - colm[static_cast<std::size_t>(s)] + grand;
    return out;
  };
  Matrix yt = demean_window(panel.roa, 0), wyt = demean_window(wy, 0);
  Matrix ylag = demean_window(panel.roa, 1), wylag = demean_window(wy, 1);
  Matrix dt = demean_window(panel.treatment, 0), wdt = demean_window(wd, 0);
  std::vector<Matrix> xs;
  for (const auto& name : controls) xs.push_back(demean_window(panel.controls.at(name), 0));

  double rss = 0.0;
  for (int s = 0; s < te; ++s)
    for (int i = 0; i < n; ++i) {
      double eps = yt(i, s) - rho * wyt(i, s) - tau * ylag(i, s) - eta * wylag(i, s) - beta * dt(i, s) -
                   theta * wdt(i, s);
      for (std::size_t c = 0; c < xs.size(); ++c) eps -= gamma[c] * xs[c](i, s);
      rss += eps * eps;
    }
  Matrix a = Matrix::Identity(n, n) - rho * w;
  double logdet = std::log(Eigen::PartialPivLU<Matrix>(a).determinant());
  return -0.5 * n * te * std::log(2.0 * 3.14159265358979323846 * sigma2) + te * logdet - rss / (2.0 * sigma2);
}

}  // namespace

TEST_CASE("demean_two_way kills constants and entity effects") {
  CHECK(demean_two_way(Matrix::Constant(4, 6, 3.7)).cwiseAbs().maxCoeff() < 1e-14);
  Matrix entity_constants = Vector::LinSpaced(4, 1.0, 4.0).replicate(1, 6);
  CHECK(demean_two_way(entity_constants).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("demean_two_way zeroes row and column means") {
  Rng rng(13);
  Matrix m(4, 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) m(i, j) = rng.normal();
  Matrix d = demean_two_way(m);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(d.row(i).mean()) < 1e-12);
  for (int j = 0; j < 6; ++j) CHECK(std::abs(d.col(j).mean()) < 1e-12);
}

TEST_CASE("loglik at the null parameter point is the iid Gaussian density") {
  SimulatedPanel sim = toy_panel(5, 8, 3);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  Vector params = Vector::Zero(5 + 1 + 1);
  params(params.size() - 1) = 1.3;  // sigma2
  double got = dsdm_loglik(params, data, sim.w);
  // by hand: -(N T'/2) ln(2 pi s2) - sum(demeaned Y^2)/(2 s2)
  Matrix yd = demean_two_way(sim.panel.roa.rightCols(7));
  double want = -0.5 * 5 * 7 * std::log(2.0 * 3.14159265358979323846 * 1.3) - yd.squaredNorm() / (2.0 * 1.3);
  CHECK(got == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("loglik matches the scalar-by-scalar oracle on a toy panel") {
  SimulatedPanel sim = toy_panel(3, 5, 7);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  Vector params(7);
  params << 0.35, 0.25, -0.15, 0.2, 0.4, 0.55, 0.9;
  double got = dsdm_loglik(params, data, sim.w);
  double want = loglik_oracle(params, sim.panel, {"x1"}, sim.w.w());
  CHECK(got == Catch::Approx(want).epsilon(1e-10));
}

TEST_CASE("loglik rejects rho outside the admissible interval") {
  SimulatedPanel sim = toy_panel(4, 6, 9);
  DsdmSpec spec;
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  Vector params = Vector::Zero(7);
  params(params.size() - 1) = 1.0;
  params(1) = 1.5;
  CHECK_THROWS_AS(dsdm_loglik(params, data, sim.w), Error);
}

TEST_CASE("loglik is invariant to entity relabeling") {
  SimulatedPanel sim = toy_panel(6, 7, 11);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  Vector params(7);
  params << 0.3, 0.2, -0.1, 0.15, 0.25, 0.5, 1.1;
  double base = dsdm_loglik(params, data, sim.w);

  // permute entities: conjugate W, permute all data rows
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  PanelDataset permuted = sim.panel;
  Matrix pw(6, 6);
  for (int i = 0; i < 6; ++i) {
    permuted.roa.row(i) = sim.panel.roa.row(perm[static_cast<std::size_t>(i)]);
    permuted.roe.row(i) = sim.panel.roe.row(perm[static_cast<std::size_t>(i)]);
    permuted.treatment.row(i) = sim.panel.treatment.row(perm[static_cast<std::size_t>(i)]);
    permuted.controls["x1"].row(i) = sim.panel.controls.at("x1").row(perm[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 6; ++j) pw(i, j) = sim.w.w()(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  WeightMatrix wperm = WeightMatrix::from_normalized(pw, WeightKind::custom);
  DsdmData pdata = build_dsdm_data(permuted, spec, wperm);
  CHECK(dsdm_loglik(params, pdata, wperm) == Catch::Approx(base).epsilon(1e-10));
}

TEST_CASE("concentration at rho = 0 equals a direct least-squares fit") {
  SimulatedPanel sim = toy_panel(8, 10, 15);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  ConcentratedFit fit = dsdm_gls_at_rho(data, 0.0);
  // independent least squares on the same demeaned arrays
  Vector direct = (data.z.transpose() * data.z).ldlt().solve(data.z.transpose() * data.y0);
  CHECK((fit.delta - direct).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("the optimizer reaches a stationary point of its objective") {
  SimulatedPanel sim = toy_panel(20, 24, 19);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmFit fit = fit_mle(spec, sim.panel, sim.w);
  DsdmData data = build_dsdm_data(sim.panel, spec, sim.w);
  const Vector& at = fit.uncorrected;
  for (int i = 0; i < at.size(); ++i) {
    double h = 1e-6 * std::max(1.0, std::abs(at(i)));
    Vector up = at, dn = at;
    up(i) += h;
    dn(i) -= h;
    double grad =
        (detail::fit_objective(up, data, sim.w) - detail::fit_objective(dn, data, sim.w)) / (2.0 * h);
    // scale by the objective's curvature to make the tolerance meaningful
    double scale = std::max(1.0, std::abs(detail::fit_objective(at, data, sim.w)));
    CHECK(std::abs(grad) / scale < 1e-5);
  }
}

TEST_CASE("single-panel recovery lands within three reported standard errors") {
  DgpSpec spec;
  spec.n = 50;
  spec.t = 40;
  spec.tau = 0.5;
  spec.rho = 0.4;
  spec.eta = -0.2;
  spec.beta = 0.3;
  spec.theta = 0.5;
  spec.gamma = Vector::Constant(2, 0.8);
  spec.gamma(1) = -0.4;
  spec.treat_share = 0.5;
  spec.treat_t0 = 20;
  spec.w_neighbors = 4;
  spec.seed = 202;
  SimulatedPanel sim = gen_dsdm(spec);
  DsdmSpec ds;
  ds.controls = {"x1", "x2"};
  DsdmFit fit = fit_mle(ds, sim.panel, sim.w);
  double truth[] = {0.5, 0.4, -0.2, 0.3, 0.5, 0.8, -0.4, 1.0};
  for (int i = 0; i < 8; ++i)
    CHECK(std::abs(fit.estimates(i) - truth[i]) < 3.0 * fit.ses(i));
}

TEST_CASE("null-spillover DGP puts rho near zero") {
  double mean_rho = 0.0, mean_se = 0.0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    DgpSpec spec;
    spec.n = 40;
    spec.t = 30;
    spec.tau = 0.4;
    spec.rho = 0.0;
    spec.beta = 0.3;
    spec.treat_share = 0.5;
    spec.treat_t0 = 15;
    spec.w_neighbors = 4;
    spec.seed = derive_seed(300, static_cast<std::uint64_t>(rep));
    SimulatedPanel sim = gen_dsdm(spec);
    DsdmSpec ds;
    DsdmFit fit = fit_mle(ds, sim.panel, sim.w);
    mean_rho += fit.rho();
    mean_se += fit.ses(1);
  }
  mean_rho /= reps;
  mean_se /= reps;
  CHECK(std::abs(mean_rho) < mean_se);
}

TEST_CASE("beta = 0 stays insignificant at the nominal size") {
  int significant = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    DgpSpec spec;
    spec.n = 30;
    spec.t = 20;
    spec.tau = 0.4;
    spec.rho = 0.3;
    spec.beta = 0.0;
    spec.theta = 0.0;
    spec.treat_share = 0.5;
    spec.treat_t0 = 10;
    spec.w_neighbors = 4;
    spec.seed = derive_seed(400, static_cast<std::uint64_t>(rep));
    SimulatedPanel sim = gen_dsdm(spec);
    DsdmSpec ds;
    DsdmFit fit = fit_mle(ds, sim.panel, sim.w);
    double z = fit.beta() / fit.ses(3);
    if (std::abs(z) > 1.959963984540054) ++significant;
  }
  CHECK(reps - significant >= 90);
}

TEST_CASE("collinear regressors are rejected by name") {
  SimulatedPanel sim = toy_panel(6, 8, 23);
  PanelDataset panel = sim.panel;
  panel.controls["x_dup"] = panel.controls.at("x1");
  DsdmSpec spec;
  spec.controls = {"x1", "x_dup"};
  try {
    fit_mle(spec, panel, sim.w);
    FAIL("expected collinearity rejection");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("collinear") != std::string::npos);
    CHECK((msg.find("x_dup") != std::string::npos || msg.find("x1") != std::string::npos));
  }
}

TEST_CASE("qmle reproduces mle point estimates bit for bit") {
  SimulatedPanel sim = toy_panel(15, 16, 27);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmFit mle = fit_mle(spec, sim.panel, sim.w);
  DsdmFit qmle = fit_qmle(spec, sim.panel, sim.w);
  CHECK((mle.estimates - qmle.estimates).cwiseAbs().maxCoeff() == 0.0);
  // sandwich vcov differs but stays positive on the diagonal
  for (int i = 0; i < qmle.estimates.size(); ++i) CHECK(qmle.vcov(i, i) >= 0.0);
}

TEST_CASE("bayes draws are reproducible and respect supports") {
  SimulatedPanel sim = toy_panel(10, 12, 31);
  DsdmSpec spec;
  spec.controls = {"x1"};
  McmcConfig cfg;
  cfg.iterations = 800;
  cfg.burn_in = 400;
  cfg.seed = 99;
  DsdmFit a = fit_bayes(spec, sim.panel, sim.w, cfg);
  DsdmFit b = fit_bayes(spec, sim.panel, sim.w, cfg);
  CHECK((*a.draws - *b.draws).cwiseAbs().maxCoeff() == 0.0);
  int rho_col = a.index_of("rho"), s2_col = a.index_of("sigma2");
  int tau_col = a.index_of("tau"), eta_col = a.index_of("eta");
  for (int r = 0; r < a.draws->rows(); ++r) {
    CHECK(a.rho_interval.contains((*a.draws)(r, rho_col)));
    CHECK((*a.draws)(r, s2_col) > 0.0);
    CHECK(std::abs((*a.draws)(r, tau_col)) < 1.0);
    CHECK(std::abs((*a.draws)(r, eta_col)) < 1.0);
  }
}

TEST_CASE("prior-only sampling reproduces the prior moments") {
  SimulatedPanel sim = toy_panel(6, 8, 35);
  DsdmSpec spec;
  spec.controls = {"x1"};
  McmcConfig cfg;
  cfg.iterations = 11000;
  cfg.burn_in = 1000;
  cfg.seed = 7;
  cfg.prior_only = true;
  DsdmFit fit = fit_bayes(spec, sim.panel, sim.w, cfg);
  // beta, theta, gamma ~ Normal(0, variance 10): sd = sqrt(10)
  for (const char* name : {"beta", "theta", "x1"}) {
    double sd = fit.ses(fit.index_of(name));
    CHECK(sd == Catch::Approx(std::sqrt(10.0)).epsilon(0.10));
  }
  // tau, eta ~ Uniform(-1, 1): sd = 1/sqrt(3)
  for (const char* name : {"tau", "eta"}) {
    double sd = fit.ses(fit.index_of(name));
    CHECK(sd == Catch::Approx(1.0 / std::sqrt(3.0)).epsilon(0.10));
  }
}

TEST_CASE("posterior concentrates near the likelihood maximizer") {
  SimulatedPanel sim = toy_panel(25, 30, 41);
  DsdmSpec spec;
  spec.controls = {"x1"};
  DsdmFit mle = fit_mle(spec, sim.panel, sim.w);
  McmcConfig cfg;
  cfg.iterations = 4000;
  cfg.burn_in = 2000;
  cfg.seed = 5;
  DsdmFit bayes = fit_bayes(spec, sim.panel, sim.w, cfg);
  for (int i = 0; i < bayes.estimates.size(); ++i) {
    double sd = bayes.ses(i);
    REQUIRE(sd > 0.0);
    CHECK(std::abs(bayes.estimates(i) - mle.uncorrected(i)) < 2.0 * sd);
  }
}

TEST_CASE("coupling correlation follows the adoption-overlap rule") {
  auto r = coupling_correlation(0.3, 0.2, 1, 1, 0.5);
  CHECK(r.value == Catch::Approx(0.4));
  CHECK_FALSE(r.clamped);
  CHECK(coupling_correlation(0.3, 0.2, 0, 1, 0.5).value == Catch::Approx(0.3));
  CHECK(coupling_correlation(0.3, 0.2, 1, 0, 0.5).value == Catch::Approx(0.3));
  auto clamped = coupling_correlation(0.9, 0.5, 1, 1, 1.0);
  CHECK(clamped.value == 1.0);
  CHECK(clamped.clamped);
  CHECK_THROWS_AS(coupling_correlation(1.5, 0.0, 0, 0, 0.0), Error);
  CHECK_THROWS_AS(coupling_correlation(0.0, 0.0, 0, 0, 2.0), Error);
}
