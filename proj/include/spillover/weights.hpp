#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spillover/csv.hpp"

namespace spillover {

enum class WeightKind { network, geographic, custom };

inline std::string weight_kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::network: return "network";
    case WeightKind::geographic: return "geographic";
    default: return "custom";
  }
}

// Admissible interval for the spatial autoregressive coefficient: the
// intersection of (1/lambda_min, 1) with (-1, 1), lambda_min being the most
// negative real eigenvalue of the row-normalized weight matrix.
struct RhoInterval {
  double lo = -1.0;
  double hi = 1.0;
  bool contains(double rho) const { return rho > lo && rho < hi; }
};

// ---------------------------------------------------------------------------
// Row-normalized spatial weight matrix with its spectrum cached eagerly at
// construction. Immutable afterwards, so it is safe to share across
// estimation threads; the checksum ties the cache to the entries it was
// computed from.
// ---------------------------------------------------------------------------
class WeightMatrix {
public:
  WeightMatrix() = default;

  static WeightMatrix from_normalized(Matrix w, WeightKind kind) {
    WeightMatrix out;
    out.w_ = std::move(w);
    out.kind_ = kind;
    out.row_normalized_ = true;
    out.compute_spectrum();
    return out;
  }

  const Matrix& w() const { return w_; }
  WeightKind kind() const { return kind_; }
  bool row_normalized() const { return row_normalized_; }
  int n() const { return static_cast<int>(w_.rows()); }

  const ComplexVector& spectrum() const {
    require(checksum_ == fnv1a64(w_.data(), sizeof(double) * static_cast<std::size_t>(w_.size())),
            "spatial_weights", "eigenvalue cache does not match the stored matrix");
    return eigenvalues_;
  }

  RhoInterval rho_interval() const {
    RhoInterval iv;
    double lambda_min = 0.0;
    for (int i = 0; i < eigenvalues_.size(); ++i) {
      const auto& ev = eigenvalues_(i);
      if (std::abs(ev.imag()) < 1e-8 && ev.real() < lambda_min) lambda_min = ev.real();
    }
    if (lambda_min < -1e-12) iv.lo = std::max(-1.0, 1.0 / lambda_min);
    return iv;
  }

  // ln|I - rho W| via the cached spectrum: sum of ln(1 - rho lambda_i) over
  // complex eigenvalues, which must produce a real value. Also asserts that
  // (I - rho W) is nonsingular.
  double log_det(double rho) const {
    const ComplexVector& ev = spectrum();
    std::complex<double> sum(0.0, 0.0);
    for (int i = 0; i < ev.size(); ++i) {
      std::complex<double> factor = 1.0 - rho * ev(i);
      require(std::abs(factor) > 1e-14, "spatial_weights",
              "(I - rho W) singular at rho = " + std::to_string(rho));
      sum += std::log(factor);
    }
    require(std::abs(sum.imag()) <= 1e-10 * std::max(1.0, std::abs(sum.real())), "spatial_weights",
            "log-determinant came out complex; eigenvalue pairing is broken");
    return sum.real();
  }

private:
  void compute_spectrum() {
    Eigen::EigenSolver<Matrix> solver(w_, /*computeEigenvectors=*/false);
    require(solver.info() == Eigen::Success, "spatial_weights", "eigenvalue solver did not converge");
    eigenvalues_ = solver.eigenvalues();
    checksum_ = fnv1a64(w_.data(), sizeof(double) * static_cast<std::size_t>(w_.size()));
    if (row_normalized_) {
      double max_mod = 0.0;
      for (int i = 0; i < eigenvalues_.size(); ++i) max_mod = std::max(max_mod, std::abs(eigenvalues_(i)));
      require(max_mod <= 1.0 + 1e-8, "spatial_weights",
              "row-normalized matrix has spectral radius " + std::to_string(max_mod) + " > 1");
    }
  }

  Matrix w_;
  WeightKind kind_ = WeightKind::custom;
  bool row_normalized_ = false;
  ComplexVector eigenvalues_;
  std::uint64_t checksum_ = 0;
};

// ---------------------------------------------------------------------------
// Row normalization: w_ij = raw_ij / sum_k raw_ik. Requires a zero diagonal,
// nonnegative entries, and no isolated rows.
// ---------------------------------------------------------------------------
inline WeightMatrix row_normalize(const Matrix& raw, WeightKind kind = WeightKind::custom,
                                  const std::vector<std::string>* entity_ids = nullptr) {
  const int n = static_cast<int>(raw.rows());
  require(raw.cols() == n, "spatial_weights", "weight matrix must be square");
  require(n >= 2, "spatial_weights", "need at least 2 entities");
  auto name_of = [&](int i) {
    return entity_ids ? (*entity_ids)[static_cast<std::size_t>(i)] : std::to_string(i);
  };
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    require(raw(i, i) == 0.0, "spatial_weights", "nonzero diagonal at entity " + name_of(i));
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      require(raw(i, j) >= 0.0, "spatial_weights", "negative weight at (" + name_of(i) + ", " + name_of(j) + ")");
      row_sum += raw(i, j);
    }
    if (row_sum <= 0.0)
      fail("spatial_weights", "entity " + name_of(i) + " is isolated (zero weight row); cannot row-normalize");
    for (int j = 0; j < n; ++j) w(i, j) = raw(i, j) / row_sum;
  }
  return WeightMatrix::from_normalized(std::move(w), kind);
}

// ---------------------------------------------------------------------------
// Network weights: Gaussian kernel on average log asset distance,
// w_ij = exp(-(a_i - a_j)^2 / (2 h^2)), default bandwidth the sample standard
// deviation of the asset series.
// ---------------------------------------------------------------------------
inline WeightMatrix network_weights(const Vector& avg_log_assets, std::optional<double> bandwidth = {}) {
  const int n = static_cast<int>(avg_log_assets.size());
  require(n >= 2, "spatial_weights", "need at least 2 entities");
  double h;
  if (bandwidth) {
    require(*bandwidth > 0.0, "spatial_weights", "bandwidth must be positive");
    h = *bandwidth;
  } else {
    std::vector<double> vals(avg_log_assets.data(), avg_log_assets.data() + n);
    h = sample_sd(vals);
    if (!(h > 0.0))
      fail("spatial_weights",
           "log assets have zero variance; the default bandwidth is undefined (pass one explicitly)");
  }
  Matrix raw = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = avg_log_assets(i) - avg_log_assets(j);
      raw(i, j) = std::exp(-d * d / (2.0 * h * h));
    }
  return row_normalize(raw, WeightKind::network);
}

// ---------------------------------------------------------------------------
// Geographic weights: exponential decay in Haversine distance relative to the
// median pairwise distance.
// ---------------------------------------------------------------------------
constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  double phi1 = lat1 * deg, phi2 = lat2 * deg;
  double dphi = (lat2 - lat1) * deg, dlambda = (lon2 - lon1) * deg;
  double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
             std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline WeightMatrix geographic_weights(const std::vector<std::array<double, 2>>& coords) {
  const int n = static_cast<int>(coords.size());
  require(n >= 2, "spatial_weights", "need at least 2 entities");
  for (int i = 0; i < n; ++i) {
    require(!is_missing(coords[static_cast<std::size_t>(i)][0]) && !is_missing(coords[static_cast<std::size_t>(i)][1]),
            "spatial_weights", "missing coordinates for entity " + std::to_string(i));
    require(std::abs(coords[static_cast<std::size_t>(i)][0]) <= 90.0, "spatial_weights",
            "latitude out of range for entity " + std::to_string(i));
    require(std::abs(coords[static_cast<std::size_t>(i)][1]) <= 180.0, "spatial_weights",
            "longitude out of range for entity " + std::to_string(i));
  }
  Matrix dist = Matrix::Zero(n, n);
  std::vector<double> pairwise;
  pairwise.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = haversine_km(coords[static_cast<std::size_t>(i)][0], coords[static_cast<std::size_t>(i)][1],
                              coords[static_cast<std::size_t>(j)][0], coords[static_cast<std::size_t>(j)][1]);
      dist(i, j) = dist(j, i) = d;
      pairwise.push_back(d);
    }
  double d_median = median_of(pairwise);
  if (!(d_median > 0.0)) fail("spatial_weights", "all entities co-located; median distance is zero");
  Matrix raw = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) raw(i, j) = std::exp(-dist(i, j) / d_median);
  return row_normalize(raw, WeightKind::geographic);
}

// ---------------------------------------------------------------------------
// Generic loader for custom weight matrices (loan-portfolio similarity, Fed
// district grouping, ...): a delimited N x N numeric file without header.
// ---------------------------------------------------------------------------
inline WeightMatrix load_weight_matrix(const std::string& path, char delim = ',', bool normalize = true) {
  std::ifstream in(path);
  if (!in) fail("spatial_weights", "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line, delim);
    std::vector<double> row;
    for (const auto& f : fields) {
      double v;
      if (!parse_double(f, v))
        fail("spatial_weights", "unparseable entry '" + f + "' in '" + path + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const int n = static_cast<int>(rows.size());
  require(n >= 2, "spatial_weights", "weight file has fewer than 2 rows");
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    require(static_cast<int>(rows[static_cast<std::size_t>(i)].size()) == n, "spatial_weights",
            "weight file is not square at row " + std::to_string(i + 1));
    for (int j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  if (normalize) return row_normalize(m, WeightKind::custom);
  // pre-normalized input: validate and tidy the rounding residue
  for (int i = 0; i < n; ++i) {
    require(m(i, i) == 0.0, "spatial_weights", "nonzero diagonal at row " + std::to_string(i + 1));
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      require(m(i, j) >= 0.0, "spatial_weights", "negative weight at row " + std::to_string(i + 1));
      row_sum += m(i, j);
    }
    require(std::abs(row_sum - 1.0) <= 1e-9, "spatial_weights",
            "row " + std::to_string(i + 1) + " sums to " + std::to_string(row_sum) + ", not 1 (pass without --no-normalize?)");
    for (int j = 0; j < n; ++j) m(i, j) /= row_sum;
  }
  return WeightMatrix::from_normalized(std::move(m), WeightKind::custom);
}

inline void write_weight_matrix(const WeightMatrix& wm, const std::string& path, char delim = ',') {
  std::ofstream out(path);
  if (!out) fail("spatial_weights", "cannot write '" + path + "'");
  const Matrix& w = wm.w();
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j) {
      if (j) out << delim;
      out << format_double(w(i, j));
    }
    out << '\n';
  }
}

}  // namespace spillover
