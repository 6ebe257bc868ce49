#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rlab {

using mat = Eigen::MatrixXd;
using vec = Eigen::VectorXd;

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : error {
  using error::error;
};
struct config_error : error {
  using error::error;
};
struct numeric_error : error {
  using error::error;
};
struct io_error : error {
  using error::error;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow for large |z|
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline int label_of(double score) { return score >= 0.0 ? +1 : -1; }

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// default recourse target score: sigmoid^{-1}(0.6), a 0.1 probability margin
// past the decision boundary
inline const double k_default_target = std::log(1.5);

// lossless decimal formatting (17 significant digits)
std::string g17(double v);
// shorter %g formatting for ids / filenames
std::string gshort(double v);
// strict string -> double; `what` names the field in the diagnostic
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

}  // namespace rlab
