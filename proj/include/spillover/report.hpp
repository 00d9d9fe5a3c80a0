#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spillover/csv.hpp"
#include "spillover/dsdm.hpp"
#include "spillover/effects.hpp"
#include "spillover/sdid.hpp"

namespace spillover {

using Json = nlohmann::ordered_json;

// significance stars: *** p<0.01, ** p<0.05, * p<0.1
inline std::string stars_for_p(double p) {
  if (is_missing(p)) return "";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

// Bayesian convention: stars when the central credible interval at the
// matching level excludes zero.
inline std::string stars_for_draws(const std::vector<double>& draws) {
  auto excludes_zero = [&](double alpha) {
    double lo = quantile(draws, alpha / 2.0), hi = quantile(draws, 1.0 - alpha / 2.0);
    return lo > 0.0 || hi < 0.0;
  };
  if (excludes_zero(0.01)) return "***";
  if (excludes_zero(0.05)) return "**";
  if (excludes_zero(0.10)) return "*";
  return "";
}

inline Json fit_to_json(const DsdmFit& fit) {
  Json out;
  out["model"] = "dsdm";
  out["estimator"] = fit.estimator == DsdmEstimator::mle    ? "mle"
                     : fit.estimator == DsdmEstimator::qmle ? "qmle"
                                                            : "bayes";
  out["n"] = fit.n;
  out["t_effective"] = fit.t_eff;
  out["loglik"] = fit.loglik;
  out["rho_interval"] = {fit.rho_interval.lo, fit.rho_interval.hi};
  Json params = Json::array();
  for (std::size_t i = 0; i < fit.param_names.size(); ++i) {
    int idx = static_cast<int>(i);
    Json p;
    p["name"] = fit.param_names[i];
    p["estimate"] = fit.estimates(idx);
    p["se"] = fit.ses(idx);
    p["ci_lower"] = fit.ci(idx, 0);
    p["ci_upper"] = fit.ci(idx, 1);
    if (fit.estimator == DsdmEstimator::bayes) {
      std::vector<double> col(fit.draws->col(idx).data(), fit.draws->col(idx).data() + fit.draws->rows());
      p["stars"] = stars_for_draws(col);
      p["significant_95"] = fit.ci(idx, 0) > 0.0 || fit.ci(idx, 1) < 0.0;
    } else {
      double z = fit.ses(idx) > 0 ? fit.estimates(idx) / fit.ses(idx) : kMissing;
      double pv = is_missing(z) ? kMissing : two_sided_p(z);
      p["p_value"] = pv;
      p["stars"] = stars_for_p(pv);
    }
    params.push_back(p);
  }
  out["parameters"] = params;
  Json diag;
  if (!is_missing(fit.diagnostics.rho_accept_rate)) diag["rho_accept_rate"] = fit.diagnostics.rho_accept_rate;
  if (!is_missing(fit.diagnostics.rhat_max)) diag["rhat_max"] = fit.diagnostics.rhat_max;
  diag["warnings"] = fit.diagnostics.warnings;
  out["diagnostics"] = diag;
  return out;
}

inline DsdmFit fit_from_json(const Json& j) {
  DsdmFit fit;
  std::string est = j.at("estimator");
  fit.estimator = est == "mle" ? DsdmEstimator::mle : est == "qmle" ? DsdmEstimator::qmle : DsdmEstimator::bayes;
  fit.n = j.at("n");
  fit.t_eff = j.at("t_effective");
  fit.loglik = j.value("loglik", kMissing);
  fit.rho_interval.lo = j.at("rho_interval")[0];
  fit.rho_interval.hi = j.at("rho_interval")[1];
  const auto& params = j.at("parameters");
  const int m = static_cast<int>(params.size());
  fit.estimates.resize(m);
  fit.ses.resize(m);
  fit.ci.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    fit.param_names.push_back(params[static_cast<std::size_t>(i)].at("name"));
    fit.estimates(i) = params[static_cast<std::size_t>(i)].at("estimate");
    fit.ses(i) = params[static_cast<std::size_t>(i)].at("se");
    fit.ci(i, 0) = params[static_cast<std::size_t>(i)].at("ci_lower");
    fit.ci(i, 1) = params[static_cast<std::size_t>(i)].at("ci_upper");
  }
  for (int i = 5; i < m - 1; ++i) fit.control_names.push_back(fit.param_names[static_cast<std::size_t>(i)]);
  if (j.contains("vcov")) {
    fit.vcov.resize(m, m);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k) fit.vcov(i, k) = j["vcov"][static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return fit;
}

inline Json vcov_to_json(const Matrix& v) {
  Json rows = Json::array();
  for (int i = 0; i < v.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < v.cols(); ++j) row.push_back(v(i, j));
    rows.push_back(row);
  }
  return rows;
}

// Fixed-width parameter table mirroring the usual regression layout.
inline std::string format_fit_table(const DsdmFit& fit) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "parameter" << std::right << std::setw(12) << "estimate" << std::setw(12)
     << (fit.estimator == DsdmEstimator::bayes ? "post.sd" : "se") << std::setw(22) << "95% interval"
     << "  signif\n";
  for (std::size_t i = 0; i < fit.param_names.size(); ++i) {
    int idx = static_cast<int>(i);
    std::string stars;
    if (fit.estimator == DsdmEstimator::bayes) {
      std::vector<double> col(fit.draws->col(idx).data(), fit.draws->col(idx).data() + fit.draws->rows());
      stars = stars_for_draws(col);
    } else if (fit.ses(idx) > 0) {
      stars = stars_for_p(two_sided_p(fit.estimates(idx) / fit.ses(idx)));
    }
    os << std::left << std::setw(14) << fit.param_names[i] << std::right << std::fixed << std::setprecision(4)
       << std::setw(12) << fit.estimates(idx) << std::setw(12) << fit.ses(idx) << "   [" << std::setw(8)
       << fit.ci(idx, 0) << ", " << std::setw(8) << fit.ci(idx, 1) << "]"
       << "  " << stars << "\n";
  }
  return os.str();
}

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open '" + path + "'");
  Json j;
  in >> j;
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest: resolved config, its hash, and input checksums. Written
// beside every result file; no timestamps, so reruns stay byte-identical.
// ---------------------------------------------------------------------------
inline void write_manifest(const std::string& out_path, const std::string& command, const Json& config,
                           const std::vector<std::string>& input_paths) {
  Json m;
  m["tool"] = "spillover " + std::string("0.1.0");
  m["command"] = command;
  m["config"] = config;
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  m["config_hash"] = std::string(hash_hex);
  Json inputs = Json::array();
  for (const auto& p : input_paths) {
    Json e;
    e["path"] = p;
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_file_bytes(p))));
    e["fnv1a64"] = std::string(hash_hex);
    inputs.push_back(e);
  }
  m["inputs"] = inputs;
  write_json(m, out_path + ".manifest.json");
}

}  // namespace spillover
