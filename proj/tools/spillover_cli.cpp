// spillover: spatial panel spillover estimation and synthetic
// difference-in-differences, with a synthetic-panel oracle for verification.

#include <CLI11.hpp>
#include <iostream>

#include "spillover/netrisk.hpp"
#include "spillover/report.hpp"
#include "spillover/simulate.hpp"

namespace sp = spillover;
using sp::Json;

namespace {

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

sp::IngestSchema schema_from_json(const std::string& path) {
  Json j = sp::read_json(path);
  sp::IngestSchema s;
  s.entity_col = j.value("entity", "entity");
  s.quarter_col = j.value("quarter", "quarter");
  s.roa_col = j.value("roa", "");
  s.roe_col = j.value("roe", "");
  s.treatment_col = j.value("treatment", "");
  s.mentions_col = j.value("mentions", "");
  s.text_col = j.value("text", "");
  s.lat_col = j.value("lat", "");
  s.lon_col = j.value("lon", "");
  if (j.contains("controls"))
    for (auto& [name, col] : j["controls"].items()) s.control_cols[name] = col.get<std::string>();
  return s;
}

int column_of_quarter(const sp::PanelDataset& panel, const std::string& label, const std::string& what) {
  int col = panel.quarter_column(sp::Quarter::parse(label));
  if (col < 0) sp::fail("cli", what + " " + label + " outside the panel range");
  return col;
}

// --weights accepts either a matrix file or a construction kind built from
// the panel on the fly ("network" / "geographic")
sp::WeightMatrix resolve_weights(const std::string& arg, const sp::PanelDataset* panel) {
  if (arg == "network") {
    if (!panel) sp::fail("cli", "network weights need a panel");
    return sp::network_weights(panel->avg_log_assets);
  }
  if (arg == "geographic") {
    if (!panel) sp::fail("cli", "geographic weights need a panel");
    return sp::geographic_weights(panel->coordinates);
  }
  return sp::load_weight_matrix(arg, ',', /*normalize=*/false);
}

// treated = entities whose first treated quarter is at or after t0;
// adopters before t0 (or flagged at ingest) have no clean pre-period
struct SdidSample {
  sp::SdidProblem problem;
  std::vector<int> first_treated;
  std::vector<std::string> excluded_entities;
};

SdidSample sdid_sample(const sp::PanelDataset& panel, const std::string& outcome, int t0_col) {
  SdidSample out;
  out.problem.y = panel.outcome(outcome);
  out.problem.t0 = t0_col;
  std::vector<int> ft = panel.first_treated;
  if (ft.empty()) {
    ft.assign(static_cast<std::size_t>(panel.n()), -1);
    for (int i = 0; i < panel.n(); ++i)
      for (int j = 0; j < panel.t(); ++j)
        if (!sp::is_missing(panel.treatment(i, j)) && panel.treatment(i, j) > 0) {
          ft[static_cast<std::size_t>(i)] = j;
          break;
        }
  }
  out.first_treated = ft;
  for (int i = 0; i < panel.n(); ++i) {
    bool flagged = !panel.sdid_excluded.empty() && panel.sdid_excluded[static_cast<std::size_t>(i)];
    int first = ft[static_cast<std::size_t>(i)];
    if (flagged || (first >= 0 && first < t0_col)) {
      out.excluded_entities.push_back(panel.entity_ids[static_cast<std::size_t>(i)]);
    } else if (first >= t0_col) {
      out.problem.treated.push_back(i);
    }
  }
  if (!out.excluded_entities.empty()) {
    // drop excluded rows entirely: they are neither treated nor clean controls
    std::vector<int> keep;
    std::set<std::string> excluded(out.excluded_entities.begin(), out.excluded_entities.end());
    for (int i = 0; i < panel.n(); ++i)
      if (!excluded.count(panel.entity_ids[static_cast<std::size_t>(i)])) keep.push_back(i);
    sp::Matrix y(keep.size(), panel.t());
    std::vector<int> ft_kept;
    std::vector<int> treated_kept;
    std::set<int> treated_set(out.problem.treated.begin(), out.problem.treated.end());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      y.row(static_cast<int>(r)) = out.problem.y.row(keep[r]);
      ft_kept.push_back(ft[static_cast<std::size_t>(keep[r])]);
      if (treated_set.count(keep[r])) treated_kept.push_back(static_cast<int>(r));
    }
    out.problem.y = y;
    out.problem.treated = treated_kept;
    out.first_treated = ft_kept;
  }
  return out;
}

Json sdid_result_json(const sp::SdidResult& r) {
  Json j;
  j["att"] = r.att;
  j["se"] = r.se;
  j["ci_lower"] = r.ci_lower;
  j["ci_upper"] = r.ci_upper;
  if (!sp::is_missing(r.se) && r.se > 0) {
    double p = sp::two_sided_p(r.att / r.se);
    j["p_value"] = p;
    j["stars"] = sp::stars_for_p(p);
  }
  Json omega = Json::array(), lambda = Json::array();
  for (int i = 0; i < r.omega.size(); ++i) omega.push_back(r.omega(i));
  for (int i = 0; i < r.lambda.size(); ++i) lambda.push_back(r.lambda(i));
  j["omega"] = omega;
  j["lambda"] = lambda;
  return j;
}

// ---------------------------------------------------------------------------

struct GlobalOpts {
  int workers = sp::default_workers();
  char delimiter = ',';
};

int run_simulate_dsdm(const Json& cfg) {
  sp::DgpSpec spec;
  spec.n = cfg["n"];
  spec.t = cfg["t"];
  spec.tau = cfg["tau"];
  spec.rho = cfg["rho"];
  spec.eta = cfg["eta"];
  spec.beta = cfg["beta"];
  spec.theta = cfg["theta"];
  spec.sigma = cfg["sigma"];
  std::vector<double> gammas = cfg["gamma"];
  spec.gamma = Eigen::Map<sp::Vector>(gammas.data(), static_cast<long>(gammas.size()));
  spec.fe_scale = cfg["fe_scale"];
  std::string rule = cfg["rule"];
  spec.rule = rule == "none" ? sp::TreatmentRule::none
              : rule == "logit" ? sp::TreatmentRule::logit_selection
                                : sp::TreatmentRule::random_share;
  spec.treat_share = cfg["share"];
  spec.treat_t0 = cfg["t0_col"];
  spec.errors = cfg["errors"] == "t5" ? sp::ErrorDist::student_t5 : sp::ErrorDist::normal;
  spec.w_neighbors = cfg["w_neighbors"];
  spec.burn_in = cfg["burn_in"];
  spec.seed = cfg["seed"].get<std::uint64_t>();

  sp::SimulatedPanel sim = sp::gen_dsdm(spec);
  std::string out = cfg["out"];
  sp::write_panel(sim.panel, out, ',');
  if (cfg.contains("weights_out") && !cfg["weights_out"].get<std::string>().empty())
    sp::write_weight_matrix(sim.w, cfg["weights_out"]);
  if (cfg.contains("truth") && !cfg["truth"].get<std::string>().empty()) {
    Json t;
    t["model"] = "dsdm";
    t["tau"] = sim.truth.tau;
    t["rho"] = sim.truth.rho;
    t["eta"] = sim.truth.eta;
    t["beta"] = sim.truth.beta;
    t["theta"] = sim.truth.theta;
    t["sigma"] = sim.truth.sigma;
    Json g = Json::array();
    for (int i = 0; i < sim.truth.gamma.size(); ++i) g.push_back(sim.truth.gamma(i));
    t["gamma"] = g;
    t["t0_column"] = sim.truth.t0;
    t["treated_rows"] = sim.truth.treated;
    sp::write_json(t, cfg["truth"]);
  }
  Json hashable = cfg;  // output locations are not part of the computation
  hashable.erase("out");
  hashable.erase("truth");
  hashable.erase("weights_out");
  sp::write_manifest(out, "simulate dsdm", hashable, {});
  std::cout << "wrote " << out << " (" << sim.panel.n() << " entities x " << sim.panel.t() << " quarters)\n";
  return 0;
}

int run_simulate_sdid(const Json& cfg) {
  sp::DgpSpec spec;
  spec.n = cfg["n"];
  spec.t = cfg["t"];
  spec.effect = cfg["effect"];
  spec.sigma = cfg["noise"];
  spec.fe_scale = cfg["fe_scale"];
  spec.variant = cfg["variant"] == "trends" ? sp::SdidVariant::heterogeneous_trends : sp::SdidVariant::parallel;
  spec.trend_scale = cfg["trend_scale"];
  std::string rule = cfg["rule"];
  spec.rule = rule == "logit" ? sp::TreatmentRule::logit_selection : sp::TreatmentRule::random_share;
  spec.selection_strength = cfg["selection_strength"];
  spec.treat_share = cfg["share"];
  spec.treat_t0 = cfg["t0_col"];
  spec.seed = cfg["seed"].get<std::uint64_t>();

  sp::SimulatedPanel sim = sp::gen_sdid(spec);
  std::string out = cfg["out"];
  sp::write_panel(sim.panel, out, ',');
  if (cfg.contains("truth") && !cfg["truth"].get<std::string>().empty()) {
    Json t;
    t["model"] = "sdid";
    t["att"] = sim.truth.att;
    t["t0_column"] = sim.truth.t0;
    t["treated_rows"] = sim.truth.treated;
    sp::write_json(t, cfg["truth"]);
  }
  Json hashable = cfg;
  hashable.erase("out");
  hashable.erase("truth");
  sp::write_manifest(out, "simulate sdid", hashable, {});
  std::cout << "wrote " << out << " (" << sim.panel.n() << " entities x " << sim.panel.t() << " quarters)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spillover: spatial panel spillovers and synthetic difference-in-differences"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  GlobalOpts global;
  app.add_option("--workers", global.workers, "worker threads (default: SPILLOVER_WORKERS or hardware)");

  // ---------------------------------------------------------- simulate ----
  auto* sim = app.add_subcommand("simulate", "generate synthetic panels with known ground truth");
  sim->require_subcommand(1);

  auto* simd = sim->add_subcommand("dsdm", "spatial dynamic panel DGP");
  struct {
    int n = 50, t = 40, t0_col = -1, burn_in = 50, w_neighbors = 0;
    double tau = 0, rho = 0, eta = 0, beta = 0, theta = 0, sigma = 1, fe_scale = 1, share = 0.2;
    std::vector<double> gamma;
    std::string rule = "random", errors = "normal", out = "panel.csv", truth, weights_out;
    std::uint64_t seed = 1;
  } sd;
  simd->add_option("--n", sd.n, "entities");
  simd->add_option("--t", sd.t, "retained quarters");
  simd->add_option("--tau", sd.tau, "temporal lag");
  simd->add_option("--rho", sd.rho, "spatial lag");
  simd->add_option("--eta", sd.eta, "spatial-temporal lag");
  simd->add_option("--beta", sd.beta, "own treatment effect");
  simd->add_option("--theta", sd.theta, "treatment spillover");
  simd->add_option("--sigma", sd.sigma, "innovation sd");
  simd->add_option("--gamma", sd.gamma, "control coefficients (repeatable)");
  simd->add_option("--fe-scale", sd.fe_scale, "entity/time effect sd");
  simd->add_option("--rule", sd.rule, "treatment rule: random|logit|none");
  simd->add_option("--share", sd.share, "treated share");
  simd->add_option("--t0-col", sd.t0_col, "treatment start column (default t/2)");
  simd->add_option("--errors", sd.errors, "innovation distribution: normal|t5");
  simd->add_option("--w-neighbors", sd.w_neighbors, "k-nearest-neighbor W instead of the size kernel");
  simd->add_option("--burn-in", sd.burn_in, "burn-in periods (>= 50)");
  simd->add_option("--seed", sd.seed, "rng seed");
  simd->add_option("--out", sd.out, "panel output file")->required();
  simd->add_option("--truth", sd.truth, "ground-truth JSON output");
  simd->add_option("--weights-out", sd.weights_out, "write the W used by the DGP");

  auto* sims = sim->add_subcommand("sdid", "potential-outcomes DGP");
  struct {
    int n = 40, t = 16, t0_col = -1;
    double effect = 0, noise = 0.5, fe_scale = 1, trend_scale = 0, share = 0.25, selection_strength = 1;
    std::string variant = "parallel", rule = "random", out = "panel.csv", truth;
    std::uint64_t seed = 1;
  } ss;
  sims->add_option("--n", ss.n, "entities");
  sims->add_option("--t", ss.t, "quarters");
  sims->add_option("--t0-col", ss.t0_col, "treatment start column (default t/2)");
  sims->add_option("--effect", ss.effect, "true constant ATT");
  sims->add_option("--noise", ss.noise, "outcome noise sd");
  sims->add_option("--fe-scale", ss.fe_scale, "entity/time effect sd");
  sims->add_option("--variant", ss.variant, "parallel|trends");
  sims->add_option("--trend-scale", ss.trend_scale, "entity trend slope scale");
  sims->add_option("--rule", ss.rule, "treatment rule: random|logit");
  sims->add_option("--selection-strength", ss.selection_strength, "logit selection strength");
  sims->add_option("--share", ss.share, "treated share");
  sims->add_option("--seed", ss.seed, "rng seed");
  sims->add_option("--out", ss.out, "panel output file")->required();
  sims->add_option("--truth", ss.truth, "ground-truth JSON output");

  // ------------------------------------------------------------ ingest ----
  auto* ing = app.add_subcommand("ingest", "read a raw delimited file into a canonical panel");
  struct {
    std::string input, schema, out, missing_report, dict, winsorize_list, required = "roa,roe";
    std::string treatment = "", earliest = "";
    std::string delimiter = ",";
    double winsor_lo = 1.0, winsor_hi = 99.0;
    int min_quarters = 0;
    bool impute = false;
  } in;
  ing->add_option("--input", in.input, "raw delimited file")->required();
  ing->add_option("--schema", in.schema, "column-map JSON")->required();
  ing->add_option("--delimiter", in.delimiter, "field delimiter (default ,)");
  ing->add_option("--out", in.out, "canonical panel output")->required();
  ing->add_option("--missing-report", in.missing_report, "missing-cell sidecar CSV");
  ing->add_option("--dict", in.dict, "keyword dictionary (plain text, [category] headers)");
  ing->add_option("--winsorize", in.winsorize_list, "comma list of variables to winsorize");
  ing->add_option("--winsor-lo", in.winsor_lo, "lower percentile (default 1)");
  ing->add_option("--winsor-hi", in.winsor_hi, "upper percentile (default 99)");
  ing->add_option("--min-quarters", in.min_quarters, "sample filter: minimum observed quarters");
  ing->add_option("--required", in.required, "sample filter: required variables (comma list)");
  ing->add_option("--treatment", in.treatment, "build treatment from mentions: raw|absorbing");
  ing->add_option("--earliest", in.earliest, "earliest adoption quarter (absorbing mode)");
  ing->add_flag("--impute", in.impute, "mean-impute remaining gaps (flags recorded)");

  // ------------------------------------------------------------ weights ----
  auto* wgt = app.add_subcommand("weights", "build or load a spatial weight matrix");
  struct {
    std::string panel, kind = "network", input, out;
    double bandwidth = -1, threshold = -1;
    bool no_normalize = false;
  } wo;
  wgt->add_option("--panel", wo.panel, "canonical panel (for network/geographic)");
  wgt->add_option("--kind", wo.kind, "network|geographic|custom");
  wgt->add_option("--input", wo.input, "raw N x N file (custom)");
  wgt->add_option("--bandwidth", wo.bandwidth, "kernel bandwidth (default: sd of log assets)");
  wgt->add_flag("--no-normalize", wo.no_normalize, "accept pre-normalized custom input");
  wgt->add_option("--out", wo.out, "weight matrix output")->required();

  // -------------------------------------------------------------- dsdm ----
  auto* dsd = app.add_subcommand("dsdm", "estimate the dynamic spatial panel model");
  struct {
    std::string panel, weights, outcome = "roa", estimator = "mle", controls, fe = "both", out = "fit.json";
    std::string draws_out;
    int iterations = 10000, burn_in = 5000;
    std::uint64_t seed = 42;
  } dfl;
  dsd->add_option("--panel", dfl.panel, "canonical panel")->required();
  dsd->add_option("--weights", dfl.weights, "weight matrix file, or network|geographic to build from the panel")->required();
  dsd->add_option("--outcome", dfl.outcome, "roa|roe");
  dsd->add_option("--estimator", dfl.estimator, "mle|qmle|bayes");
  dsd->add_option("--controls", dfl.controls, "comma list (default: every panel control)");
  dsd->add_option("--fe", dfl.fe, "fixed effects: entity|time|both");
  dsd->add_option("--iterations", dfl.iterations, "MCMC iterations");
  dsd->add_option("--burn-in", dfl.burn_in, "MCMC burn-in");
  dsd->add_option("--seed", dfl.seed, "rng seed");
  dsd->add_option("--out", dfl.out, "fit output JSON")->required();
  dsd->add_option("--draws-out", dfl.draws_out, "posterior draw sidecar CSV (bayes)");

  // ------------------------------------------------------------ effects ----
  auto* eff = app.add_subcommand("effects", "direct/indirect/total decomposition of a fit");
  struct {
    std::string fit, weights, draws, out = "effects.json";
    int reps = 1000;
    std::uint64_t seed = 0;
  } ef;
  eff->add_option("--fit", ef.fit, "fit JSON from the dsdm command")->required();
  eff->add_option("--weights", ef.weights, "weight matrix file (default: the one recorded in the fit)");
  eff->add_option("--draws", ef.draws, "posterior draw sidecar (bayes fits)");
  eff->add_option("--reps", ef.reps, "delta-method replications");
  eff->add_option("--seed", ef.seed, "rng seed");
  eff->add_option("--out", ef.out, "output JSON");

  // -------------------------------------------------------------- sdid ----
  auto* sdi = app.add_subcommand("sdid", "synthetic difference-in-differences");
  struct {
    std::string panel, outcome = "roe", t0, out = "sdid.json";
    int bootstrap = 200;
    std::uint64_t seed = 42;
    double zeta_unit = -1, zeta_time = -1;
    bool size_split = false, with_intercept = false;
  } sf;
  sdi->add_option("--panel", sf.panel, "canonical panel");
  sdi->add_option("--outcome", sf.outcome, "roa|roe");
  sdi->add_option("--t0", sf.t0, "treatment quarter, e.g. 2023Q1");
  sdi->add_option("--bootstrap", sf.bootstrap, "bootstrap replications");
  sdi->add_option("--seed", sf.seed, "rng seed");
  sdi->add_option("--zeta-unit", sf.zeta_unit, "unit-weight regularization strength (default rule)");
  sdi->add_option("--zeta-time", sf.zeta_time, "time-weight regularization strength (default rule)");
  sdi->add_flag("--size-split", sf.size_split, "also fit large/small subsamples");
  sdi->add_flag("--with-intercept", sf.with_intercept, "center the unit-weight program");
  sdi->add_option("--out", sf.out, "output JSON");

  auto* sde = sdi->add_subcommand("event-study", "horizon-specific treatment effects");
  struct {
    std::string panel, outcome = "roe", horizons = "-4:4", out = "event_study.json";
    int bootstrap = 200;
    std::uint64_t seed = 42;
  } ev;
  sde->add_option("--panel", ev.panel, "canonical panel")->required();
  sde->add_option("--outcome", ev.outcome, "roa|roe");
  sde->add_option("--horizons", ev.horizons, "k_min:k_max (default -4:4)");
  sde->add_option("--bootstrap", ev.bootstrap, "bootstrap replications");
  sde->add_option("--seed", ev.seed, "rng seed");
  sde->add_option("--out", ev.out, "output JSON");

  // ------------------------------------------------------------ netrisk ----
  auto* net = app.add_subcommand("netrisk", "network topology statistics over a thresholded graph");
  struct {
    std::string panel, weights, threshold = "auto", out = "graph_stats.json", edges_out;
    double coupling_base = -2, coupling_delta = 0, coupling_overlap = 0;
  } nt;
  net->add_option("--panel", nt.panel, "canonical panel (adoption and size attributes)");
  net->add_option("--weights", nt.weights, "weight matrix file, or network|geographic to build from the panel")->required();
  net->add_option("--threshold", nt.threshold, "binarization threshold, or 'auto' (median positive)");
  net->add_option("--out", nt.out, "output JSON");
  net->add_option("--edges-out", nt.edges_out, "edge list CSV for visualization");
  net->add_option("--coupling-base", nt.coupling_base, "baseline decision correlation (optional summary)");
  net->add_option("--coupling-delta", nt.coupling_delta, "coupling increment");
  net->add_option("--coupling-overlap", nt.coupling_overlap, "vendor overlap in [0,1]");

  // ------------------------------------------------------------ placebo ----
  struct {
    std::string panel, outcome = "roe", t0, shift, out = "placebo.json";
    bool random = false;
    int reps = 500, bootstrap = 200;
    std::uint64_t seed = 42;
  } pl;
  auto* plc = app.add_subcommand("placebo", "placebo robustness tests for the SDID design");
  auto* sdp = sdi->add_subcommand("placebo", "placebo robustness tests (alias)");
  for (CLI::App* target : {plc, sdp}) {
    target->add_option("--panel", pl.panel, "canonical panel")->required();
    target->add_option("--outcome", pl.outcome, "roa|roe");
    target->add_option("--t0", pl.t0, "true treatment quarter")->required();
    target->add_option("--shift", pl.shift, "placebo treatment quarter (shift test)");
    target->add_flag("--random", pl.random, "random-reassignment permutation test");
    target->add_option("--reps", pl.reps, "permutation replications");
    target->add_option("--bootstrap", pl.bootstrap, "bootstrap replications (shift test)");
    target->add_option("--seed", pl.seed, "rng seed");
    target->add_option("--out", pl.out, "output JSON");
  }

  try {
    app.parse(argc, argv);

    // ---- simulate ----
    if (simd->parsed()) {
      Json cfg;
      cfg["n"] = sd.n;
      cfg["t"] = sd.t;
      cfg["tau"] = sd.tau;
      cfg["rho"] = sd.rho;
      cfg["eta"] = sd.eta;
      cfg["beta"] = sd.beta;
      cfg["theta"] = sd.theta;
      cfg["sigma"] = sd.sigma;
      cfg["gamma"] = sd.gamma;
      cfg["fe_scale"] = sd.fe_scale;
      cfg["rule"] = sd.rule;
      cfg["share"] = sd.share;
      cfg["t0_col"] = sd.t0_col;
      cfg["errors"] = sd.errors;
      cfg["w_neighbors"] = sd.w_neighbors;
      cfg["burn_in"] = sd.burn_in;
      cfg["seed"] = sd.seed;
      cfg["out"] = sd.out;
      cfg["truth"] = sd.truth;
      cfg["weights_out"] = sd.weights_out;
      return run_simulate_dsdm(cfg);
    }
    if (sims->parsed()) {
      Json cfg;
      cfg["n"] = ss.n;
      cfg["t"] = ss.t;
      cfg["t0_col"] = ss.t0_col;
      cfg["effect"] = ss.effect;
      cfg["noise"] = ss.noise;
      cfg["fe_scale"] = ss.fe_scale;
      cfg["variant"] = ss.variant;
      cfg["trend_scale"] = ss.trend_scale;
      cfg["rule"] = ss.rule;
      cfg["selection_strength"] = ss.selection_strength;
      cfg["share"] = ss.share;
      cfg["seed"] = ss.seed;
      cfg["out"] = ss.out;
      cfg["truth"] = ss.truth;
      return run_simulate_sdid(cfg);
    }

    // ---- ingest ----
    if (ing->parsed()) {
      sp::IngestSchema schema = schema_from_json(in.schema);
      if (!in.delimiter.empty()) schema.delimiter = in.delimiter[0];
      if (!in.dict.empty()) schema.dictionary = sp::load_keyword_dictionary(in.dict);
      sp::IngestReport report;
      sp::PanelDataset panel = sp::ingest_panel(in.input, schema, &report);

      if (!in.treatment.empty()) {
        sp::TreatmentMode mode = in.treatment == "raw" ? sp::TreatmentMode::raw : sp::TreatmentMode::absorbing;
        int earliest = in.earliest.empty() ? 0 : column_of_quarter(panel, in.earliest, "earliest quarter");
        sp::apply_treatment(panel, sp::build_treatment(panel.mentions, mode, earliest));
      }
      // sample filter runs before winsorization, so the percentile pool is
      // the estimation sample
      sp::FilterReport freport;
      if (in.min_quarters > 0) {
        sp::SampleFilter filter;
        filter.min_quarters = in.min_quarters;
        filter.required_fields = split_csv_list(in.required);
        panel = sp::apply_filter(panel, filter, &freport);
        std::cout << "filter: retained " << freport.retained << ", dropped " << freport.dropped << " ("
                  << freport.adopters << " adopters / " << freport.controls << " controls)\n";
      }
      for (const auto& var : split_csv_list(in.winsorize_list)) {
        if (var == "roa")
          panel.roa = sp::winsorize(panel.roa, in.winsor_lo, in.winsor_hi);
        else if (var == "roe")
          panel.roe = sp::winsorize(panel.roe, in.winsor_lo, in.winsor_hi);
        else if (panel.controls.count(var))
          panel.controls[var] = sp::winsorize(panel.controls[var], in.winsor_lo, in.winsor_hi);
        else
          sp::fail("cli", "cannot winsorize unknown variable '" + var + "'");
      }
      if (in.impute) sp::mean_impute(panel, panel.variable_names());
      sp::write_panel(panel, in.out, schema.delimiter, in.missing_report);
      Json cfg;
      cfg["input"] = in.input;
      cfg["schema"] = in.schema;
      cfg["winsorize"] = in.winsorize_list;
      cfg["min_quarters"] = in.min_quarters;
      cfg["required"] = in.required;
      cfg["treatment"] = in.treatment;
      cfg["earliest"] = in.earliest;
      cfg["impute"] = in.impute;
      sp::write_manifest(in.out, "ingest", cfg, {in.input, in.schema});
      std::cout << "wrote " << in.out << " (" << panel.n() << " entities x " << panel.t()
                << " quarters, " << report.missing.size() << " missing cells at ingest)\n";
      return 0;
    }

    // ---- weights ----
    if (wgt->parsed()) {
      sp::WeightMatrix w;
      std::vector<std::string> inputs;
      if (wo.kind == "custom") {
        if (wo.input.empty()) sp::fail("cli", "custom weights need --input");
        w = sp::load_weight_matrix(wo.input, ',', !wo.no_normalize);
        inputs.push_back(wo.input);
      } else {
        if (wo.panel.empty()) sp::fail("cli", wo.kind + " weights need --panel");
        sp::PanelDataset panel = sp::read_panel(wo.panel);
        inputs.push_back(wo.panel);
        if (wo.kind == "network") {
          std::optional<double> bw;
          if (wo.bandwidth > 0) bw = wo.bandwidth;
          w = sp::network_weights(panel.avg_log_assets, bw);
        } else if (wo.kind == "geographic") {
          w = sp::geographic_weights(panel.coordinates);
        } else {
          sp::fail("cli", "unknown weight kind '" + wo.kind + "'");
        }
      }
      sp::write_weight_matrix(w, wo.out);
      Json cfg;
      cfg["kind"] = wo.kind;
      cfg["bandwidth"] = wo.bandwidth;
      cfg["no_normalize"] = wo.no_normalize;
      sp::write_manifest(wo.out, "weights", cfg, inputs);
      std::cout << "wrote " << wo.out << " (" << w.n() << " x " << w.n() << " " << sp::weight_kind_name(w.kind())
                << ")\n";
      return 0;
    }

    // ---- dsdm ----
    if (dsd->parsed() ) {
      sp::PanelDataset panel = sp::read_panel(dfl.panel);
      sp::WeightMatrix w = resolve_weights(dfl.weights, &panel);
      sp::DsdmSpec spec;
      spec.outcome = dfl.outcome;
      if (dfl.controls.empty()) {
        // default: every panel control that the fixed effects do not absorb
        for (const auto& [name, m] : panel.controls) {
          sp::Matrix within = m;
          within.colwise() -= m.rowwise().mean().eval();
          within.rowwise() -= within.colwise().mean().eval();
          if (within.cwiseAbs().maxCoeff() > 1e-10)
            spec.controls.push_back(name);
          else
            std::cout << "note: control '" << name << "' has no within variation; absorbed by fixed effects\n";
        }
      } else {
        spec.controls = split_csv_list(dfl.controls);
      }
      spec.fixed_effects = dfl.fe == "entity" ? sp::FixedEffects::entity
                           : dfl.fe == "time" ? sp::FixedEffects::time
                                              : sp::FixedEffects::both;
      sp::DsdmFit fit;
      if (dfl.estimator == "mle") {
        spec.estimator = sp::DsdmEstimator::mle;
        fit = sp::fit_mle(spec, panel, w);
      } else if (dfl.estimator == "qmle") {
        spec.estimator = sp::DsdmEstimator::qmle;
        fit = sp::fit_qmle(spec, panel, w);
      } else if (dfl.estimator == "bayes") {
        spec.estimator = sp::DsdmEstimator::bayes;
        sp::McmcConfig mcfg;
        mcfg.iterations = dfl.iterations;
        mcfg.burn_in = dfl.burn_in;
        mcfg.seed = dfl.seed;
        fit = sp::fit_bayes(spec, panel, w, mcfg);
      } else {
        sp::fail("cli", "unknown estimator '" + dfl.estimator + "'");
      }
      Json out = sp::fit_to_json(fit);
      out["outcome"] = dfl.outcome;
      if (dfl.weights != "network" && dfl.weights != "geographic") out["weights_file"] = dfl.weights;
      if (fit.vcov.size() > 0) out["vcov"] = sp::vcov_to_json(fit.vcov);
      sp::write_json(out, dfl.out);
      if (!dfl.draws_out.empty() && fit.draws) {
        sp::Table t;
        t.header = fit.param_names;
        for (int r = 0; r < fit.draws->rows(); ++r) {
          std::vector<std::string> row;
          for (int c = 0; c < fit.draws->cols(); ++c) row.push_back(sp::format_double((*fit.draws)(r, c)));
          t.rows.push_back(std::move(row));
        }
        sp::write_delimited(dfl.draws_out, t);
      }
      Json cfg;
      cfg["outcome"] = dfl.outcome;
      cfg["estimator"] = dfl.estimator;
      cfg["controls"] = dfl.controls;
      cfg["fe"] = dfl.fe;
      cfg["iterations"] = dfl.iterations;
      cfg["burn_in"] = dfl.burn_in;
      cfg["seed"] = dfl.seed;
      cfg["weights"] = dfl.weights;
      std::vector<std::string> manifest_inputs = {dfl.panel};
      if (dfl.weights != "network" && dfl.weights != "geographic") manifest_inputs.push_back(dfl.weights);
      sp::write_manifest(dfl.out, "dsdm", cfg, manifest_inputs);
      std::cout << sp::format_fit_table(fit);
      for (const auto& warning : fit.diagnostics.warnings) std::cout << "warning: " << warning << "\n";
      std::cout << "wrote " << dfl.out << "\n";
      return 0;
    }

    // ---- effects ----
    if (eff->parsed()) {
      Json fj = sp::read_json(ef.fit);
      sp::DsdmFit fit = sp::fit_from_json(fj);
      std::string weights_path = ef.weights.empty() ? fj.value("weights_file", "") : ef.weights;
      if (weights_path.empty()) sp::fail("cli", "fit records no weights file; pass --weights");
      sp::WeightMatrix w = sp::load_weight_matrix(weights_path, ',', /*normalize=*/false);
      if (fit.estimator == sp::DsdmEstimator::bayes) {
        if (ef.draws.empty()) sp::fail("cli", "bayesian fits need --draws (posterior sidecar)");
        sp::Table t = sp::read_delimited(ef.draws);
        sp::Matrix draws(t.rows.size(), t.header.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r)
          for (std::size_t c = 0; c < t.header.size(); ++c) {
            double v;
            sp::parse_double(t.rows[r][c], v);
            draws(static_cast<int>(r), static_cast<int>(c)) = v;
          }
        fit.draws = draws;
      }
      sp::EffectsDecomposition dec = sp::effects_uncertainty(fit, w, ef.reps, ef.seed);
      Json out;
      out["direct"] = dec.direct;
      out["direct_se"] = dec.direct_se;
      out["indirect"] = dec.indirect;
      out["indirect_se"] = dec.indirect_se;
      out["total"] = dec.total;
      out["total_se"] = dec.total_se;
      out["indirect_total_ratio"] = dec.ratio_indirect_total;
      out["method"] = dec.method == sp::EffectsMethod::delta ? "delta" : "posterior_sim";
      sp::write_json(out, ef.out);
      Json cfg;
      cfg["fit"] = ef.fit;
      cfg["reps"] = ef.reps;
      cfg["seed"] = ef.seed;
      sp::write_manifest(ef.out, "effects", cfg, {ef.fit, weights_path});
      auto line = [&](const char* label, double v, double se) {
        std::cout << std::left << std::setw(10) << label << v << " (" << se << ")\n";
      };
      line("direct", dec.direct, dec.direct_se);
      line("indirect", dec.indirect, dec.indirect_se);
      line("total", dec.total, dec.total_se);
      std::cout << "indirect/total ratio: " << dec.ratio_indirect_total << "\nwrote " << ef.out << "\n";
      return 0;
    }

    // ---- sdid event-study ----
    if (sde->parsed()) {
      sp::PanelDataset panel = sp::read_panel(ev.panel);
      auto colon = ev.horizons.find(':');
      if (colon == std::string::npos) sp::fail("cli", "--horizons expects k_min:k_max");
      sp::EventStudyConfig cfg;
      cfg.k_min = std::stoi(ev.horizons.substr(0, colon));
      cfg.k_max = std::stoi(ev.horizons.substr(colon + 1));
      cfg.bootstrap = ev.bootstrap;
      cfg.seed = ev.seed;
      cfg.workers = global.workers;
      sp::EventStudyResult res = sp::event_study(panel.outcome(ev.outcome), panel.first_treated, cfg);
      Json out;
      Json series = Json::array();
      for (std::size_t i = 0; i < res.horizons.size(); ++i) {
        Json row;
        row["horizon"] = res.horizons[i];
        row["att"] = res.att(static_cast<int>(i));
        row["se"] = res.se(static_cast<int>(i));
        row["ci_lower"] = res.ci_lower(static_cast<int>(i));
        row["ci_upper"] = res.ci_upper(static_cast<int>(i));
        row["cohorts"] = res.cohort_count[i];
        row["treated"] = res.treated_count[i];
        series.push_back(row);
      }
      out["event_study"] = series;
      sp::write_json(out, ev.out);
      Json mcfg;
      mcfg["outcome"] = ev.outcome;
      mcfg["horizons"] = ev.horizons;
      mcfg["bootstrap"] = ev.bootstrap;
      mcfg["seed"] = ev.seed;
      sp::write_manifest(ev.out, "sdid event-study", mcfg, {ev.panel});
      std::cout << "wrote " << ev.out << "\n";
      return 0;
    }

    // ---- sdid ----
    if (sdi->parsed() && !sdp->parsed()) {
      if (sf.panel.empty() || sf.t0.empty()) sp::fail("cli", "sdid needs --panel and --t0");
      sp::PanelDataset panel = sp::read_panel(sf.panel);
      int t0_col = column_of_quarter(panel, sf.t0, "t0");
      auto run_one = [&](const sp::PanelDataset& p) {
        SdidSample sample = sdid_sample(p, sf.outcome, t0_col);
        if (sf.zeta_unit >= 0) sample.problem.zeta_unit = sf.zeta_unit;
        if (sf.zeta_time >= 0) sample.problem.zeta_time = sf.zeta_time;
        sample.problem.with_intercept = sf.with_intercept;
        sp::SdidResult r = sp::fit_sdid_with_inference(sample.problem, sf.bootstrap, sf.seed, global.workers);
        Json j = sdid_result_json(r);
        j["treated"] = sample.problem.treated.size();
        j["controls"] = sample.problem.y.rows() - static_cast<long>(sample.problem.treated.size());
        j["excluded"] = sample.excluded_entities;
        return j;
      };
      Json out;
      out["t0"] = sf.t0;
      out["outcome"] = sf.outcome;
      out["full_sample"] = run_one(panel);
      if (sf.size_split) {
        auto [large, small] = sp::size_split(panel);
        out["large"] = run_one(large);
        out["small"] = run_one(small);
      }
      sp::write_json(out, sf.out);
      Json cfg;
      cfg["outcome"] = sf.outcome;
      cfg["t0"] = sf.t0;
      cfg["bootstrap"] = sf.bootstrap;
      cfg["seed"] = sf.seed;
      cfg["size_split"] = sf.size_split;
      cfg["with_intercept"] = sf.with_intercept;
      sp::write_manifest(sf.out, "sdid", cfg, {sf.panel});
      std::cout << "att " << out["full_sample"]["att"] << " (se " << out["full_sample"]["se"] << ")\nwrote "
                << sf.out << "\n";
      return 0;
    }

    // ---- netrisk ----
    if (net->parsed()) {
      std::optional<sp::PanelDataset> panel;
      std::vector<std::string> inputs;
      if (!nt.panel.empty()) {
        panel = sp::read_panel(nt.panel);
        inputs.push_back(nt.panel);
      }
      sp::WeightMatrix w = resolve_weights(nt.weights, panel ? &*panel : nullptr);
      if (nt.weights != "network" && nt.weights != "geographic") inputs.push_back(nt.weights);
      std::optional<double> threshold;
      if (nt.threshold != "auto") threshold = std::stod(nt.threshold);
      sp::BankGraph g = sp::binarize(w, threshold);
      if (panel) {
        if (panel->n() != g.n()) sp::fail("cli", "panel and weight matrix dimensions differ");
        g.adopter.assign(static_cast<std::size_t>(panel->n()), 0);
        for (int i = 0; i < panel->n(); ++i)
          for (int j = 0; j < panel->t(); ++j)
            if (!sp::is_missing(panel->treatment(i, j)) && panel->treatment(i, j) > 0)
              g.adopter[static_cast<std::size_t>(i)] = 1;
        if (panel->avg_log_assets.size() == panel->n()) g.size = panel->avg_log_assets;
      }
      auto cl = sp::clustering_coefficients(g);
      auto paths = sp::path_lengths(g);
      auto hubs = sp::hub_nodes(g);
      Json out;
      out["threshold"] = g.threshold;
      out["edges"] = g.edge_count;
      out["density"] = g.density();
      if (g.empty_warning) out["warning"] = "threshold produced an empty graph";
      out["clustering"] = {{"overall_mean", cl.overall_mean},
                           {"adopter_mean", cl.adopter_mean},
                           {"non_adopter_mean", cl.non_adopter_mean}};
      out["path_length"] = {{"mean_all", paths.mean_all},
                            {"mean_adopters", paths.mean_adopters},
                            {"connected_pairs", paths.connected_pairs},
                            {"disconnected_pairs", paths.disconnected_pairs}};
      out["hubs"] = hubs;
      if (nt.coupling_base >= -1.0 && !g.adopter.empty()) {
        // mean pairwise decision correlation implied by the coupling equation
        double sum = 0;
        long pairs = 0;
        bool clamped = false;
        for (int i = 0; i < g.n(); ++i)
          for (int j = i + 1; j < g.n(); ++j) {
            auto c = sp::coupling_correlation(nt.coupling_base, nt.coupling_delta,
                                              g.adopter[static_cast<std::size_t>(i)],
                                              g.adopter[static_cast<std::size_t>(j)], nt.coupling_overlap);
            sum += c.value;
            clamped = clamped || c.clamped;
            ++pairs;
          }
        out["coupling"] = {{"mean_pairwise", pairs ? sum / pairs : sp::kMissing}, {"clamped", clamped}};
      }
      sp::write_json(out, nt.out);
      if (!nt.edges_out.empty()) {
        sp::Table t;
        t.header = {"source", "target", "weight", "both_adopters"};
        for (int i = 0; i < g.n(); ++i)
          for (int j : g.adjacency[static_cast<std::size_t>(i)])
            if (j > i) {
              bool both = !g.adopter.empty() && g.adopter[static_cast<std::size_t>(i)] &&
                          g.adopter[static_cast<std::size_t>(j)];
              t.rows.push_back({std::to_string(i), std::to_string(j),
                                sp::format_double(std::max(w.w()(i, j), w.w()(j, i))), both ? "1" : "0"});
            }
        sp::write_delimited(nt.edges_out, t);
      }
      Json cfg;
      cfg["threshold"] = nt.threshold;
      sp::write_manifest(nt.out, "netrisk", cfg, inputs);
      std::cout << "edges " << g.edge_count << ", density " << g.density() << "\nwrote " << nt.out << "\n";
      return 0;
    }

    // ---- placebo ----
    if (plc->parsed() || sdp->parsed()) {
      sp::PanelDataset panel = sp::read_panel(pl.panel);
      int t0_col = column_of_quarter(panel, pl.t0, "t0");
      SdidSample sample = sdid_sample(panel, pl.outcome, t0_col);
      Json out;
      if (!pl.shift.empty()) {
        int fake_col = column_of_quarter(panel, pl.shift, "placebo quarter");
        sp::SdidResult r = sp::placebo_shift(sample.problem, sample.first_treated, fake_col, pl.bootstrap,
                                             pl.seed, global.workers);
        out["mode"] = "shift";
        out["fake_t0"] = pl.shift;
        out["result"] = sdid_result_json(r);
        std::cout << "placebo att " << r.att << " (se " << r.se << ")\n";
      } else if (pl.random) {
        sp::PlaceboRandomResult r = sp::placebo_random(sample.problem, pl.seed, pl.reps, global.workers);
        out["mode"] = "random";
        out["actual_att"] = r.actual_att;
        out["p_value"] = r.p_value;
        Json draws = Json::array();
        for (int i = 0; i < r.draws.size(); ++i) draws.push_back(r.draws(i));
        out["permutation_draws"] = draws;
        std::cout << "actual att " << r.actual_att << ", permutation p-value " << r.p_value << "\n";
      } else {
        sp::fail("cli", "placebo needs --shift <quarter> or --random");
      }
      sp::write_json(out, pl.out);
      Json cfg;
      cfg["outcome"] = pl.outcome;
      cfg["t0"] = pl.t0;
      cfg["shift"] = pl.shift;
      cfg["random"] = pl.random;
      cfg["reps"] = pl.reps;
      cfg["seed"] = pl.seed;
      sp::write_manifest(pl.out, "placebo", cfg, {pl.panel});
      std::cout << "wrote " << pl.out << "\n";
      return 0;
    }

    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const sp::Error& e) {
    std::cerr << "error " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [cli] " << e.what() << "\n";
    return 1;
  }
}
