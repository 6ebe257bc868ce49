#include "rlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rlab/rng.hpp"

namespace rlab {

namespace {

void check_spec(const synthetic_spec& s) {
  if (s.n_per_class < 1) throw config_error("synthetic spec: n_per_class must be >= 1");
  if (s.d < 1) throw config_error("synthetic spec: d must be >= 1");
  if (!(s.noise_std > 0.0)) throw config_error("synthetic spec: noise_std must be > 0");
}

std::vector<int> identity_rows(int n) {
  std::vector<int> r(n);
  for (int i = 0; i < n; ++i) r[i] = i;
  return r;
}

void default_metadata(dataset& ds, bool standardized_flag) {
  int d = ds.d();
  ds.mean = vec::Zero(d);
  ds.std = vec::Ones(d);
  ds.standardized.assign(d, standardized_flag);
  ds.source_rows = identity_rows(ds.n());
}

// population (ddof = 0) column statistics
void column_stats(const mat& X, int j, double& mean, double& sd) {
  mean = X.col(j).mean();
  sd = std::sqrt((X.col(j).array() - mean).square().mean());
}

}  // namespace

dataset make_synthetic(const synthetic_spec& spec) {
  check_spec(spec);
  rng r(spec.seed);
  int n = 2 * spec.n_per_class;
  dataset ds;
  ds.X.resize(n, spec.d);
  ds.y.resize(n);
  double half = spec.class_separation / 2.0;
  for (int c = 0; c < 2; ++c) {
    double center = c == 0 ? +half : -half;  // positives first
    double label = c == 0 ? +1.0 : -1.0;
    for (int i = 0; i < spec.n_per_class; ++i) {
      int row = c * spec.n_per_class + i;
      for (int j = 0; j < spec.d; ++j) ds.X(row, j) = spec.noise_std * r.normal();
      ds.X(row, 0) += center;
      ds.y(row) = label;
    }
  }
  ds.feature_names.resize(spec.d);
  for (int j = 0; j < spec.d; ++j) ds.feature_names[j] = "x" + std::to_string(j);
  for (int j = 0; j < spec.d; ++j)
    ds.schema.push_back({ds.feature_names[j], col_kind::numeric, {}, {}});
  ds.schema.push_back({"label", col_kind::label, {}, "+1"});
  default_metadata(ds, false);
  ds.name = "blobs";
  return ds;
}

dataset make_factor_mixture(const factor_spec& spec) {
  if (spec.n < 2 || spec.d < 1) throw config_error("factor spec: need n >= 2, d >= 1");
  if (!(spec.frac_negative > 0.0 && spec.frac_negative < 1.0))
    throw config_error("factor spec: frac_negative must lie in (0,1)");
  rng r(spec.seed);
  int n = spec.n;
  int n_neg = static_cast<int>(std::llround(n * spec.frac_negative));
  n_neg = std::min(std::max(n_neg, 1), n - 1);
  dataset ds;
  ds.X.resize(n, spec.d);
  ds.y.resize(n);
  vec u(n);
  for (int i = 0; i < n_neg; ++i) u(i) = -spec.factor_mean + spec.sd_negative * r.normal();
  for (int i = n_neg; i < n; ++i) u(i) = +spec.factor_mean + spec.sd_positive * r.normal();
  for (int i = 0; i < n; ++i) {
    ds.y(i) = i < n_neg ? -1.0 : +1.0;
    for (int j = 0; j < spec.d; ++j) ds.X(i, j) = u(i) + spec.feature_noise * r.normal();
  }
  ds.feature_names.resize(spec.d);
  for (int j = 0; j < spec.d; ++j) ds.feature_names[j] = "x" + std::to_string(j);
  for (int j = 0; j < spec.d; ++j)
    ds.schema.push_back({ds.feature_names[j], col_kind::numeric, {}, {}});
  ds.schema.push_back({"label", col_kind::label, {}, "+1"});
  default_metadata(ds, spec.standardize);
  if (spec.standardize) {
    for (int j = 0; j < spec.d; ++j) {
      double m, sd;
      column_stats(ds.X, j, m, sd);
      if (sd == 0.0) throw data_error("constant column " + ds.feature_names[j]);
      ds.mean(j) = m;
      ds.std(j) = sd;
      for (int i = 0; i < n; ++i) ds.X(i, j) = (ds.X(i, j) - m) / sd;
    }
  }
  ds.name = "factor";
  return ds;
}

namespace {

// one RFC-4180-style line -> fields (quotes, embedded commas, "" escapes)
std::vector<std::string> parse_csv_line(const std::string& line, int lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  size_t i = 0;
  bool in_field_quotes = false;  // field began with a quote
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      cur += c;
      ++i;
      continue;
    }
    if (c == '"' && cur.empty() && !in_field_quotes) {
      quoted = true;
      in_field_quotes = true;
      ++i;
      continue;
    }
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      in_field_quotes = false;
      ++i;
      continue;
    }
    cur += c;
    ++i;
  }
  if (quoted)
    throw data_error("unterminated quoted field on line " + std::to_string(lineno));
  fields.push_back(cur);
  return fields;
}

std::string rstrip_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

struct csv_table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

csv_table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open csv file: " + path);
  csv_table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = rstrip_cr(line);
    if (line.empty() && lineno > 1) continue;
    auto fields = parse_csv_line(line, lineno);
    if (lineno == 1)
      t.header = fields;
    else {
      if (fields.size() != t.header.size())
        throw data_error("row " + std::to_string(lineno) + " has " +
                         std::to_string(fields.size()) + " fields, header has " +
                         std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw data_error("csv file has no header row: " + path);
  return t;
}

}  // namespace

dataset load_csv(const std::string& path, const std::vector<column_schema>& schema) {
  int n_label = 0;
  for (const auto& c : schema)
    if (c.kind == col_kind::label) ++n_label;
  if (n_label != 1) throw config_error("schema must contain exactly one label column");

  csv_table t = read_csv_file(path);
  std::map<std::string, int> col_index;
  for (size_t i = 0; i < t.header.size(); ++i) col_index[t.header[i]] = static_cast<int>(i);
  for (const auto& c : schema)
    if (!col_index.count(c.name)) throw data_error("missing column " + c.name);
  int n = static_cast<int>(t.rows.size());
  if (n == 0) throw data_error("csv file has no data rows: " + path);

  dataset ds;
  ds.schema = schema;
  ds.y.resize(n);

  // resolve categorical categories (inferred = sorted unique values)
  for (auto& c : ds.schema) {
    if (c.kind != col_kind::categorical) continue;
    int ci = col_index[c.name];
    if (c.categories.empty()) {
      std::set<std::string> seen;
      for (const auto& row : t.rows) seen.insert(row[ci]);
      c.categories.assign(seen.begin(), seen.end());
    } else {
      std::set<std::string> allowed(c.categories.begin(), c.categories.end());
      for (size_t ri = 0; ri < t.rows.size(); ++ri)
        if (!allowed.count(t.rows[ri][ci]))
          throw data_error("unknown category '" + t.rows[ri][ci] + "' in column " +
                           c.name + " at data row " + std::to_string(ri + 1));
    }
  }

  // expanded feature layout
  std::vector<std::string> names;
  for (const auto& c : ds.schema) {
    if (c.kind == col_kind::numeric)
      names.push_back(c.name);
    else if (c.kind == col_kind::categorical)
      for (const auto& cat : c.categories) names.push_back(c.name + "=" + cat);
  }
  int d = static_cast<int>(names.size());
  if (d == 0) throw config_error("schema declares no feature columns");
  ds.feature_names = names;
  ds.X.resize(n, d);
  ds.mean = vec::Zero(d);
  ds.std = vec::Ones(d);
  ds.standardized.assign(d, false);

  int j = 0;
  for (const auto& c : ds.schema) {
    int ci = col_index[c.name];
    if (c.kind == col_kind::numeric) {
      for (int i = 0; i < n; ++i)
        ds.X(i, j) = parse_double(t.rows[i][ci],
                                  "column " + c.name + ", data row " + std::to_string(i + 1));
      double m, sd;
      column_stats(ds.X, j, m, sd);
      if (sd == 0.0) throw data_error("constant column " + c.name);
      ds.mean(j) = m;
      ds.std(j) = sd;
      for (int i = 0; i < n; ++i) ds.X(i, j) = (ds.X(i, j) - m) / sd;
      ds.standardized[j] = true;
      ++j;
    } else if (c.kind == col_kind::categorical) {
      int k = static_cast<int>(c.categories.size());
      for (int i = 0; i < n; ++i) {
        const std::string& v = t.rows[i][ci];
        int hit = -1;
        for (int q = 0; q < k; ++q)
          if (c.categories[q] == v) {
            hit = q;
            break;
          }
        if (hit < 0)
          throw data_error("unknown category '" + v + "' in column " + c.name +
                           " at data row " + std::to_string(i + 1));
        for (int q = 0; q < k; ++q) ds.X(i, j + q) = q == hit ? 1.0 : 0.0;
      }
      j += k;
    } else {
      for (int i = 0; i < n; ++i) ds.y(i) = t.rows[i][ci] == c.positive_label ? +1.0 : -1.0;
    }
  }
  if (!ds.X.allFinite()) throw data_error("csv produced non-finite feature values");
  ds.source_rows = identity_rows(n);
  ds.name = path;
  return ds;
}

vec apply_preprocessing(const dataset& ds, const std::vector<std::string>& raw_row) {
  size_t want = 0;
  for (const auto& c : ds.schema)
    if (c.kind != col_kind::label) ++want;
  if (raw_row.size() != want && raw_row.size() != ds.schema.size())
    throw data_error("raw row has " + std::to_string(raw_row.size()) +
                     " fields, schema expects " + std::to_string(want) +
                     " feature fields");
  vec out(ds.d());
  int j = 0;
  size_t ri = 0;
  for (const auto& c : ds.schema) {
    // raw_row may include the label column (in schema order); skip it
    if (c.kind == col_kind::label) {
      if (raw_row.size() == ds.schema.size()) ++ri;
      continue;
    }
    const std::string& v = raw_row[ri++];
    if (c.kind == col_kind::numeric) {
      out(j) = (parse_double(v, "column " + c.name) - ds.mean(j)) / ds.std(j);
      ++j;
    } else {
      int k = static_cast<int>(c.categories.size());
      int hit = -1;
      for (int q = 0; q < k; ++q)
        if (c.categories[q] == v) {
          hit = q;
          break;
        }
      if (hit < 0) throw data_error("unknown category '" + v + "' in column " + c.name);
      for (int q = 0; q < k; ++q) out(j + q) = q == hit ? 1.0 : 0.0;
    }
  }
  return out;
}

std::pair<dataset, dataset> split(const dataset& ds, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw config_error("test_fraction must lie in (0,1)");
  if (ds.n() == 0) throw data_error("cannot split an empty dataset");

  std::vector<int> pos, neg;
  for (int i = 0; i < ds.n(); ++i) (ds.y(i) > 0 ? pos : neg).push_back(i);
  for (const auto* cls : {&pos, &neg})
    if (!cls->empty() && cls->size() < 2)
      throw data_error("cannot stratify: a class has fewer than 2 rows");

  rng r(mix_seed({seed, 0x511470ull}));
  std::vector<int> test_idx, train_idx;
  for (auto* cls : {&pos, &neg}) {
    if (cls->empty()) continue;
    std::vector<int> idx = *cls;
    for (size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[r.below(i + 1)]);
    int n_c = static_cast<int>(idx.size());
    int n_test = static_cast<int>(std::llround(n_c * test_fraction));
    n_test = std::min(std::max(n_test, 1), n_c - 1);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + n_test);
    train_idx.insert(train_idx.end(), idx.begin() + n_test, idx.end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  auto take = [&](const std::vector<int>& rows) {
    dataset out;
    out.schema = ds.schema;
    out.feature_names = ds.feature_names;
    out.mean = ds.mean;
    out.std = ds.std;
    out.standardized = ds.standardized;
    out.name = ds.name;
    out.X.resize(static_cast<int>(rows.size()), ds.d());
    out.y.resize(static_cast<int>(rows.size()));
    out.source_rows.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<int>(i)) = ds.X.row(rows[i]);
      out.y(static_cast<int>(i)) = ds.y(rows[i]);
      out.source_rows.push_back(ds.source_rows[rows[i]]);
    }
    return out;
  };
  dataset train = take(train_idx), test = take(test_idx);

  // re-fit standardization on the training split (no leakage); the stored
  // metadata composes so raw -> X still holds (up to float re-rounding)
  for (int j = 0; j < ds.d(); ++j) {
    if (!ds.standardized[j]) continue;
    double m, sd;
    column_stats(train.X, j, m, sd);
    if (sd == 0.0) throw data_error("constant column " + ds.feature_names[j] +
                                    " in training split");
    for (auto* part : {&train, &test}) {
      for (int i = 0; i < part->n(); ++i) part->X(i, j) = (part->X(i, j) - m) / sd;
      part->mean(j) = ds.mean(j) + m * ds.std(j);
      part->std(j) = ds.std(j) * sd;
    }
  }
  return {train, test};
}

}  // namespace rlab
