#pragma once

#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spillover/csv.hpp"
#include "spillover/quarter.hpp"

namespace spillover {

// ---------------------------------------------------------------------------
// Panel data model: balanced entity x quarter rectangle. Missing cells are
// NaN, never silently zero. All matrices share the same N x T shape.
// ---------------------------------------------------------------------------
struct PanelDataset {
  std::vector<std::string> entity_ids;  // sorted, unique
  std::vector<Quarter> quarters;        // contiguous ascending range
  Matrix roa;                           // N x T, percentage points
  Matrix roe;                           // N x T, percentage points
  Matrix treatment;                     // N x T, 0/1 (NaN when never set)
  Matrix mentions;                      // N x T keyword counts (NaN when absent)
  std::map<std::string, Matrix> controls;
  std::vector<std::array<double, 2>> coordinates;  // (lat, lon); empty if unavailable
  Vector avg_log_assets;                           // per entity; NaN if unavailable

  // set by build_treatment in absorbing mode
  std::vector<int> first_treated;           // column index of first treated quarter, -1 if never
  std::vector<std::uint8_t> sdid_excluded;  // pre-window mentioners: no clean pre-period

  // set by mean_impute
  std::map<std::string, Matrix> imputed;  // 0/1 flags per variable

  int n() const { return static_cast<int>(entity_ids.size()); }
  int t() const { return static_cast<int>(quarters.size()); }

  int quarter_column(const Quarter& q) const {
    if (quarters.empty()) return -1;
    int idx = q.index() - quarters.front().index();
    if (idx < 0 || idx >= t()) return -1;
    return idx;
  }

  const Matrix& outcome(const std::string& name) const {
    if (name == "roa") return roa;
    if (name == "roe") return roe;
    fail("panel", "unknown outcome '" + name + "' (expected roa or roe)");
  }

  // variable lookup across outcomes, treatment, and controls
  const Matrix* variable(const std::string& name) const {
    if (name == "roa") return &roa;
    if (name == "roe") return &roe;
    if (name == "treatment") return &treatment;
    if (name == "mentions") return &mentions;
    auto it = controls.find(name);
    return it == controls.end() ? nullptr : &it->second;
  }

  std::vector<std::string> variable_names() const {
    std::vector<std::string> out = {"roa", "roe"};
    for (const auto& [name, mat] : controls) out.push_back(name);
    return out;
  }

  // recompute avg_log_assets from the log_assets control (time mean over
  // observed cells)
  void refresh_avg_log_assets() {
    auto it = controls.find("log_assets");
    if (it == controls.end()) return;
    avg_log_assets = Vector::Constant(n(), kMissing);
    for (int i = 0; i < n(); ++i) {
      double sum = 0.0;
      int count = 0;
      for (int tt = 0; tt < t(); ++tt) {
        double v = it->second(i, tt);
        if (!is_missing(v)) {
          sum += v;
          ++count;
        }
      }
      if (count > 0) avg_log_assets(i) = sum / count;
    }
  }
};

// ---------------------------------------------------------------------------
// Keyword dictionary: named categories of case-insensitive phrases.
// ---------------------------------------------------------------------------
struct KeywordDictionary {
  std::map<std::string, std::vector<std::string>> categories;

  std::vector<std::string> all_phrases() const {
    std::vector<std::string> out;
    for (const auto& [cat, phrases] : categories) out.insert(out.end(), phrases.begin(), phrases.end());
    return out;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& [cat, phrases] : categories) {
      for (const auto& p : phrases) {
        if (p.empty()) fail("panel", "empty keyword phrase in category '" + cat + "'");
        std::string lower = p;
        for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (!seen.insert(lower).second) fail("panel", "duplicate keyword phrase '" + p + "' across categories");
      }
    }
  }
};

// Plain-text dictionary config: "[category]" headers, one phrase per line,
// '#' comments and blank lines ignored.
inline KeywordDictionary load_keyword_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("panel", "cannot open keyword dictionary '" + path + "'");
  KeywordDictionary dict;
  std::string line, category = "default";
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      category = line.substr(1, line.size() - 2);
      dict.categories[category];
    } else {
      dict.categories[category].push_back(line);
    }
  }
  dict.validate();
  return dict;
}

// ---------------------------------------------------------------------------
// count_mentions: total non-overlapping case-insensitive occurrences over all
// dictionary phrases, whole-phrase matches on word boundaries only ("LLM"
// does not match inside "LLMs").
// ---------------------------------------------------------------------------
namespace detail {

inline bool word_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0;
}

inline std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline int count_phrase(const std::string& doc_lower, const std::string& phrase_lower) {
  if (phrase_lower.empty()) return 0;
  int count = 0;
  std::size_t pos = 0;
  while ((pos = doc_lower.find(phrase_lower, pos)) != std::string::npos) {
    std::size_t end = pos + phrase_lower.size();
    bool left_ok = pos == 0 || !word_char(doc_lower[pos - 1]);
    bool right_ok = end == doc_lower.size() || !word_char(doc_lower[end]);
    if (left_ok && right_ok) {
      ++count;
      pos = end;  // non-overlapping
    } else {
      ++pos;
    }
  }
  return count;
}

}  // namespace detail

inline int count_mentions(const std::string& document, const KeywordDictionary& dict) {
  std::string doc_lower = detail::to_lower(document);
  int total = 0;
  for (const auto& [cat, phrases] : dict.categories)
    for (const auto& phrase : phrases) total += detail::count_phrase(doc_lower, detail::to_lower(phrase));
  return total;
}

// ---------------------------------------------------------------------------
// Ingestion from delimited files.
// ---------------------------------------------------------------------------
struct IngestSchema {
  std::string entity_col = "entity";
  std::string quarter_col = "quarter";
  std::string roa_col = "roa";        // empty string disables a column
  std::string roe_col = "roe";
  std::string treatment_col;
  std::string mentions_col;
  std::string text_col;               // raw document text, counted against a dictionary
  std::string lat_col, lon_col;
  std::map<std::string, std::string> control_cols;  // control name -> file column
  char delimiter = ',';
  std::optional<KeywordDictionary> dictionary;      // required when text_col set
};

struct MissingCell {
  std::string entity;
  std::string quarter;
  std::string variable;
};

struct IngestReport {
  std::vector<MissingCell> missing;
  int rows_read = 0;
};

namespace detail {

inline double parse_cell(const std::string& raw, int row_number, const std::string& column) {
  if (field_missing(raw)) return kMissing;
  double v;
  if (!parse_double(raw, v))
    fail("panel", "unparseable numeric '" + raw + "' at row " + std::to_string(row_number) + ", column '" +
                      column + "'");
  return v;
}

}  // namespace detail

inline PanelDataset ingest_panel(const std::string& path, const IngestSchema& schema,
                                 IngestReport* report = nullptr) {
  Table table = read_delimited(path, schema.delimiter);

  auto col_of = [&](const std::string& name, bool required) {
    if (name.empty()) return -1;
    int c = table.column(name);
    if (c < 0 && required) fail("panel", "column '" + name + "' not found in '" + path + "'");
    return c;
  };
  const int entity_c = col_of(schema.entity_col, true);
  const int quarter_c = col_of(schema.quarter_col, true);
  const int roa_c = col_of(schema.roa_col, false);
  const int roe_c = col_of(schema.roe_col, false);
  const int treat_c = col_of(schema.treatment_col, false);
  const int mentions_c = col_of(schema.mentions_col, false);
  const int text_c = col_of(schema.text_col, false);
  const int lat_c = col_of(schema.lat_col, false);
  const int lon_c = col_of(schema.lon_col, false);
  if (text_c >= 0 && !schema.dictionary) fail("panel", "text column given without a keyword dictionary");
  std::vector<std::pair<std::string, int>> control_c;
  for (const auto& [name, col] : schema.control_cols) control_c.emplace_back(name, col_of(col, true));

  // first pass: collect entities and the quarter range, reject duplicates
  std::set<std::string> entity_set;
  int q_min = std::numeric_limits<int>::max(), q_max = std::numeric_limits<int>::min();
  std::map<std::pair<std::string, int>, int> seen;  // (entity, quarter index) -> row number
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    int row_number = static_cast<int>(r) + 2;  // 1-based, after the header
    if (static_cast<int>(row.size()) <= std::max(entity_c, quarter_c))
      fail("panel", "row " + std::to_string(row_number) + " has too few fields");
    const std::string& entity = row[static_cast<std::size_t>(entity_c)];
    if (entity.empty()) fail("panel", "empty entity key at row " + std::to_string(row_number));
    Quarter q = Quarter::parse(row[static_cast<std::size_t>(quarter_c)]);
    auto key = std::make_pair(entity, q.index());
    auto [it, inserted] = seen.emplace(key, row_number);
    if (!inserted)
      fail("panel", "duplicate (entity, quarter) = (" + entity + ", " + q.str() + ") at rows " +
                        std::to_string(it->second) + " and " + std::to_string(row_number));
    entity_set.insert(entity);
    q_min = std::min(q_min, q.index());
    q_max = std::max(q_max, q.index());
  }
  if (entity_set.empty()) fail("panel", "'" + path + "' contains no data rows");

  PanelDataset panel;
  panel.entity_ids.assign(entity_set.begin(), entity_set.end());  // set is sorted
  for (int qi = q_min; qi <= q_max; ++qi) panel.quarters.push_back(Quarter::from_index(qi));

  const int n = panel.n(), t = panel.t();
  panel.roa = Matrix::Constant(n, t, kMissing);
  panel.roe = Matrix::Constant(n, t, kMissing);
  panel.treatment = Matrix::Constant(n, t, kMissing);
  panel.mentions = Matrix::Constant(n, t, kMissing);
  for (const auto& [name, col] : control_c) panel.controls[name] = Matrix::Constant(n, t, kMissing);
  if (lat_c >= 0 && lon_c >= 0)
    panel.coordinates.assign(static_cast<std::size_t>(n), {kMissing, kMissing});

  std::map<std::string, int> entity_row;
  for (int i = 0; i < n; ++i) entity_row[panel.entity_ids[static_cast<std::size_t>(i)]] = i;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    int row_number = static_cast<int>(r) + 2;
    int i = entity_row[row[static_cast<std::size_t>(entity_c)]];
    int j = Quarter::parse(row[static_cast<std::size_t>(quarter_c)]).index() - q_min;
    auto cell = [&](int c, const std::string& colname) {
      if (c < 0 || static_cast<std::size_t>(c) >= row.size()) return kMissing;
      return detail::parse_cell(row[static_cast<std::size_t>(c)], row_number, colname);
    };
    if (roa_c >= 0) panel.roa(i, j) = cell(roa_c, schema.roa_col);
    if (roe_c >= 0) panel.roe(i, j) = cell(roe_c, schema.roe_col);
    if (treat_c >= 0) panel.treatment(i, j) = cell(treat_c, schema.treatment_col);
    if (mentions_c >= 0) panel.mentions(i, j) = cell(mentions_c, schema.mentions_col);
    if (text_c >= 0 && static_cast<std::size_t>(text_c) < row.size())
      panel.mentions(i, j) = count_mentions(row[static_cast<std::size_t>(text_c)], *schema.dictionary);
    for (const auto& [name, c] : control_c) panel.controls[name](i, j) = cell(c, name);
    if (lat_c >= 0 && lon_c >= 0) {
      panel.coordinates[static_cast<std::size_t>(i)][0] = cell(lat_c, schema.lat_col);
      panel.coordinates[static_cast<std::size_t>(i)][1] = cell(lon_c, schema.lon_col);
    }
  }

  panel.refresh_avg_log_assets();

  if (report) {
    report->rows_read = static_cast<int>(table.rows.size());
    auto scan = [&](const Matrix& m, const std::string& var) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < t; ++j)
          if (is_missing(m(i, j)))
            report->missing.push_back({panel.entity_ids[static_cast<std::size_t>(i)],
                                       panel.quarters[static_cast<std::size_t>(j)].str(), var});
    };
    if (roa_c >= 0) scan(panel.roa, "roa");
    if (roe_c >= 0) scan(panel.roe, "roe");
    for (const auto& [name, col] : control_c) scan(panel.controls[name], name);
  }
  return panel;
}

// ---------------------------------------------------------------------------
// Treatment construction from mention counts.
// ---------------------------------------------------------------------------
enum class TreatmentMode { raw, absorbing };

struct TreatmentBuild {
  Matrix d;                                 // N x T binary
  std::vector<int> first_treated;           // column of first treated quarter, -1 if never
  std::vector<std::uint8_t> excluded_flag;  // first mention precedes the earliest quarter
};

inline TreatmentBuild build_treatment(const Matrix& mentions, TreatmentMode mode, int earliest_column) {
  const int n = static_cast<int>(mentions.rows()), t = static_cast<int>(mentions.cols());
  require(earliest_column >= 0 && earliest_column < t, "panel", "earliest quarter outside panel range");
  TreatmentBuild out;
  out.d = Matrix::Zero(n, t);
  out.first_treated.assign(static_cast<std::size_t>(n), -1);
  out.excluded_flag.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    if (mode == TreatmentMode::raw) {
      for (int j = 0; j < t; ++j)
        if (!is_missing(mentions(i, j)) && mentions(i, j) > 0) {
          out.d(i, j) = 1.0;
          if (out.first_treated[static_cast<std::size_t>(i)] < 0) out.first_treated[static_cast<std::size_t>(i)] = j;
        }
      continue;
    }
    // absorbing: first positive-mention quarter at or after the earliest
    // window opens treatment for good; earlier mentioners have no clean
    // pre-period and are flagged out of SDID
    int first = -1;
    for (int j = 0; j < t; ++j) {
      if (is_missing(mentions(i, j)) || mentions(i, j) <= 0) continue;
      if (j < earliest_column) {
        out.excluded_flag[static_cast<std::size_t>(i)] = 1;
        continue;
      }
      first = j;
      break;
    }
    if (first >= 0) {
      out.first_treated[static_cast<std::size_t>(i)] = first;
      for (int j = first; j < t; ++j) out.d(i, j) = 1.0;
    }
  }
  return out;
}

// Attach a treatment build to the panel in place.
inline void apply_treatment(PanelDataset& panel, const TreatmentBuild& build) {
  panel.treatment = build.d;
  panel.first_treated = build.first_treated;
  panel.sdid_excluded = build.excluded_flag;
}

// ---------------------------------------------------------------------------
// Winsorization at pooled percentiles (type-7 quantiles over the pooled
// non-missing sample). Idempotent.
// ---------------------------------------------------------------------------
inline Matrix winsorize(const Matrix& series, double lower_pct = 1.0, double upper_pct = 99.0) {
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(series.size()));
  for (int i = 0; i < series.rows(); ++i)
    for (int j = 0; j < series.cols(); ++j)
      if (!is_missing(series(i, j))) pooled.push_back(series(i, j));
  if (pooled.size() < 2) fail("panel", "winsorize needs at least 2 non-missing values");
  double lo = quantile(pooled, lower_pct / 100.0);
  double hi = quantile(pooled, upper_pct / 100.0);
  Matrix out = series;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) {
      double& v = out(i, j);
      if (is_missing(v)) continue;
      if (v < lo) v = lo;
      if (v > hi) v = hi;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sample filtering: keep entities with enough fully observed quarters.
// ---------------------------------------------------------------------------
struct SampleFilter {
  int min_quarters = 4;
  std::vector<std::string> required_fields = {"roa", "roe"};
};

struct FilterReport {
  int retained = 0;
  int dropped = 0;
  int adopters = 0;
  int controls = 0;
};

namespace detail {

inline PanelDataset select_entities(const PanelDataset& panel, const std::vector<int>& keep) {
  PanelDataset out;
  const int t = panel.t();
  const int m = static_cast<int>(keep.size());
  out.quarters = panel.quarters;
  auto pick = [&](const Matrix& src) {
    Matrix dst(m, t);
    for (int r = 0; r < m; ++r) dst.row(r) = src.row(keep[static_cast<std::size_t>(r)]);
    return dst;
  };
  out.roa = pick(panel.roa);
  out.roe = pick(panel.roe);
  out.treatment = pick(panel.treatment);
  out.mentions = pick(panel.mentions);
  for (const auto& [name, mat] : panel.controls) out.controls[name] = pick(mat);
  for (const auto& [name, mat] : panel.imputed) out.imputed[name] = pick(mat);
  for (int r : keep) {
    out.entity_ids.push_back(panel.entity_ids[static_cast<std::size_t>(r)]);
    if (!panel.coordinates.empty()) out.coordinates.push_back(panel.coordinates[static_cast<std::size_t>(r)]);
    if (!panel.first_treated.empty()) out.first_treated.push_back(panel.first_treated[static_cast<std::size_t>(r)]);
    if (!panel.sdid_excluded.empty()) out.sdid_excluded.push_back(panel.sdid_excluded[static_cast<std::size_t>(r)]);
  }
  if (panel.avg_log_assets.size() == panel.n()) {
    out.avg_log_assets.resize(m);
    for (int r = 0; r < m; ++r) out.avg_log_assets(r) = panel.avg_log_assets(keep[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace detail

inline PanelDataset apply_filter(const PanelDataset& panel, const SampleFilter& filter,
                                 FilterReport* report = nullptr) {
  require(filter.min_quarters >= 1, "panel", "min_quarters must be >= 1");
  require(filter.min_quarters <= panel.t(), "panel", "min_quarters exceeds panel length");
  std::vector<const Matrix*> required;
  for (const auto& name : filter.required_fields) {
    const Matrix* m = panel.variable(name);
    if (!m) fail("panel", "filter requires unknown variable '" + name + "'");
    required.push_back(m);
  }
  std::vector<int> keep;
  for (int i = 0; i < panel.n(); ++i) {
    int observed = 0;
    for (int j = 0; j < panel.t(); ++j) {
      bool complete = true;
      for (const Matrix* m : required)
        if (is_missing((*m)(i, j))) {
          complete = false;
          break;
        }
      if (complete) ++observed;
    }
    if (observed >= filter.min_quarters) keep.push_back(i);
  }
  if (keep.empty()) fail("panel", "sample filter removed every entity");
  PanelDataset out = detail::select_entities(panel, keep);
  if (report) {
    report->retained = static_cast<int>(keep.size());
    report->dropped = panel.n() - report->retained;
    for (int i = 0; i < out.n(); ++i) {
      bool adopter = false;
      for (int j = 0; j < out.t(); ++j)
        if (!is_missing(out.treatment(i, j)) && out.treatment(i, j) > 0) adopter = true;
      (adopter ? report->adopters : report->controls) += 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Size split at a cross-entity quantile of average log assets; ties go to the
// large group. Returns (large, small).
// ---------------------------------------------------------------------------
inline std::pair<PanelDataset, PanelDataset> size_split(const PanelDataset& panel, double q = 0.75) {
  require(panel.n() >= 4, "panel", "size_split needs at least 4 entities");
  require(panel.avg_log_assets.size() == panel.n(), "panel", "avg_log_assets not populated");
  std::vector<double> sizes;
  for (int i = 0; i < panel.n(); ++i) {
    double v = panel.avg_log_assets(i);
    require(!is_missing(v), "panel", "avg_log_assets missing for entity " + panel.entity_ids[static_cast<std::size_t>(i)]);
    sizes.push_back(v);
  }
  double threshold = quantile(sizes, q);
  std::vector<int> large, small;
  for (int i = 0; i < panel.n(); ++i)
    (panel.avg_log_assets(i) >= threshold ? large : small).push_back(i);
  if (large.empty() || small.empty()) fail("panel", "degenerate size split (one group empty)");
  return {detail::select_entities(panel, large), detail::select_entities(panel, small)};
}

// ---------------------------------------------------------------------------
// Within-entity mean imputation for the estimators that need a rectangle.
// Imputed cells are flagged per variable.
// ---------------------------------------------------------------------------
inline void mean_impute(PanelDataset& panel, const std::vector<std::string>& variables) {
  for (const auto& name : variables) {
    Matrix* m = const_cast<Matrix*>(panel.variable(name));
    if (!m) fail("panel", "cannot impute unknown variable '" + name + "'");
    Matrix flags = Matrix::Zero(panel.n(), panel.t());
    for (int i = 0; i < panel.n(); ++i) {
      double sum = 0.0;
      int count = 0;
      for (int j = 0; j < panel.t(); ++j)
        if (!is_missing((*m)(i, j))) {
          sum += (*m)(i, j);
          ++count;
        }
      if (count == 0)
        fail("panel", "variable '" + name + "' entirely missing for entity " +
                          panel.entity_ids[static_cast<std::size_t>(i)] + "; filter first");
      double mean = sum / count;
      for (int j = 0; j < panel.t(); ++j)
        if (is_missing((*m)(i, j))) {
          (*m)(i, j) = mean;
          flags(i, j) = 1.0;
        }
    }
    panel.imputed[name] = flags;
  }
}

// ---------------------------------------------------------------------------
// Canonical panel dump: fixed column names so downstream commands need no
// schema. A sidecar lists cells that are missing.
// ---------------------------------------------------------------------------
inline void write_panel(const PanelDataset& panel, const std::string& path, char delim = ',',
                        const std::string& missing_report_path = "") {
  Table t;
  t.header = {"entity", "quarter", "roa", "roe", "treatment", "mentions"};
  for (const auto& [name, mat] : panel.controls) t.header.push_back(name);
  bool coords = !panel.coordinates.empty();
  if (coords) {
    t.header.push_back("lat");
    t.header.push_back("lon");
  }
  for (int i = 0; i < panel.n(); ++i)
    for (int j = 0; j < panel.t(); ++j) {
      std::vector<std::string> row = {panel.entity_ids[static_cast<std::size_t>(i)],
                                      panel.quarters[static_cast<std::size_t>(j)].str(),
                                      format_double(panel.roa(i, j)),
                                      format_double(panel.roe(i, j)),
                                      format_double(panel.treatment(i, j)),
                                      format_double(panel.mentions(i, j))};
      for (const auto& [name, mat] : panel.controls) row.push_back(format_double(mat(i, j)));
      if (coords) {
        row.push_back(format_double(panel.coordinates[static_cast<std::size_t>(i)][0]));
        row.push_back(format_double(panel.coordinates[static_cast<std::size_t>(i)][1]));
      }
      t.rows.push_back(std::move(row));
    }
  write_delimited(path, t, delim);

  if (!missing_report_path.empty()) {
    Table miss;
    miss.header = {"entity", "quarter", "variable"};
    auto scan = [&](const Matrix& m, const std::string& var) {
      for (int i = 0; i < panel.n(); ++i)
        for (int j = 0; j < panel.t(); ++j)
          if (is_missing(m(i, j)))
            miss.rows.push_back({panel.entity_ids[static_cast<std::size_t>(i)],
                                 panel.quarters[static_cast<std::size_t>(j)].str(), var});
    };
    scan(panel.roa, "roa");
    scan(panel.roe, "roe");
    for (const auto& [name, mat] : panel.controls) scan(mat, name);
    write_delimited(missing_report_path, miss, delim);
  }
}

inline PanelDataset read_panel(const std::string& path, char delim = ',') {
  Table table = read_delimited(path, delim);
  IngestSchema schema;
  schema.delimiter = delim;
  schema.treatment_col = table.column("treatment") >= 0 ? "treatment" : "";
  schema.mentions_col = table.column("mentions") >= 0 ? "mentions" : "";
  schema.lat_col = table.column("lat") >= 0 ? "lat" : "";
  schema.lon_col = table.column("lon") >= 0 ? "lon" : "";
  for (const auto& name : table.header) {
    if (name == "entity" || name == "quarter" || name == "roa" || name == "roe" || name == "treatment" ||
        name == "mentions" || name == "lat" || name == "lon")
      continue;
    schema.control_cols[name] = name;
  }
  PanelDataset panel = ingest_panel(path, schema);
  // derive absorbing-treatment metadata when a treatment column is present
  if (table.column("treatment") >= 0) {
    panel.first_treated.assign(static_cast<std::size_t>(panel.n()), -1);
    for (int i = 0; i < panel.n(); ++i)
      for (int j = 0; j < panel.t(); ++j)
        if (!is_missing(panel.treatment(i, j)) && panel.treatment(i, j) > 0) {
          panel.first_treated[static_cast<std::size_t>(i)] = j;
          break;
        }
  }
  return panel;
}

}  // namespace spillover
