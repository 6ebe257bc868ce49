#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlab/common.hpp"

namespace rlab {

enum class col_kind { numeric, categorical, label };

struct column_schema {
  std::string name;
  col_kind kind = col_kind::numeric;
  // categorical only; empty means "infer from data (sorted unique values)"
  std::vector<std::string> categories;
  // label column only
  std::string positive_label;
};

struct dataset {
  mat X;   // n x d, after one-hot expansion and standardization
  vec y;   // entries in {-1, +1}
  std::vector<column_schema> schema;
  std::vector<std::string> feature_names;  // expanded names, length d
  // per expanded feature: X_j = (raw_j - mean_j) / std_j where standardized,
  // else mean 0 / std 1 and X_j = raw_j
  vec mean, std;
  std::vector<bool> standardized;
  // row indices into the dataset this one was split from (identity if unsplit)
  std::vector<int> source_rows;
  std::string name = "synthetic";

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
};

struct synthetic_spec {
  int n_per_class = 200;
  int d = 2;
  double class_separation = 0.52;
  double noise_std = 0.15;
  std::uint64_t seed = 0;
};

// imbalanced two-component mixture driven by a shared scalar factor:
// u ~ frac_negative * N(-factor_mean, sd_negative^2)
//     + (1-frac_negative) * N(+factor_mean, sd_positive^2),
// x_j = u + N(0, feature_noise^2) per feature, label = mixture component.
// The cross-feature correlation survives per-column standardization, which
// keeps a unit-variance-likelihood VAE away from posterior collapse, and the
// component imbalance lets adversarial training actually move the boundary.
struct factor_spec {
  int n = 800;
  int d = 4;
  double frac_negative = 0.75;
  double factor_mean = 0.5;
  double sd_negative = 0.5;
  double sd_positive = 0.3;
  double feature_noise = 0.35;
  bool standardize = true;
  std::uint64_t seed = 0;
};

// two isotropic Gaussian blobs with means at +-(class_separation/2) * e1
dataset make_synthetic(const synthetic_spec& spec);

dataset make_factor_mixture(const factor_spec& spec);

// RFC-4180-style CSV (quoted fields supported, no embedded newlines).
// One-hot encodes categoricals, standardizes numerics (recording mean/std),
// maps positive_label -> +1, everything else -> -1.
dataset load_csv(const std::string& path, const std::vector<column_schema>& schema);

// preprocessing metadata applied to one raw CSV row; reproduces X rows exactly
vec apply_preprocessing(const dataset& ds, const std::vector<std::string>& raw_row);

// stratified split; re-standardizes columns marked standardized using
// training-split statistics (composing the stored mean/std metadata)
std::pair<dataset, dataset> split(const dataset& ds, double test_fraction,
                                  std::uint64_t seed);

}  // namespace rlab
