#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "rlab/common.hpp"

namespace rlab {

struct prediction {
  double score;
  double prob;  // sigmoid(score)
  int label;    // sign of score, +1 on ties
};

struct predictor {
  virtual ~predictor() = default;
  virtual int dim() const = 0;
  virtual double score(const vec& x) const = 0;
  virtual vec input_gradient(const vec& x) const = 0;
  virtual std::string family() const = 0;
  virtual double eps_train() const = 0;
};

prediction predict(const predictor& m, const vec& x);

// f(x) = w . x, no bias; training trace kept for the weight-difference bound
struct linear_model final : predictor {
  vec w;
  double eps = 0.0;
  int epochs = 0;
  double eta = 0.0;

  int dim() const override { return static_cast<int>(w.size()); }
  double score(const vec& x) const override;
  vec input_gradient(const vec& x) const override;
  std::string family() const override { return "linear"; }
  double eps_train() const override { return eps; }
};

// ReLU MLP, biases on all layers, identity output; depth = hidden layer count
struct mlp_model final : predictor {
  std::vector<mat> W;  // W[l]: out x in
  std::vector<vec> b;
  int depth = 1;
  int width = 0;
  double eps = 0.0;

  int dim() const override { return W.empty() ? 0 : static_cast<int>(W[0].cols()); }
  double score(const vec& x) const override;
  vec scores(const mat& X) const;  // batch forward
  vec input_gradient(const vec& x) const override;
  std::string family() const override { return "mlp"; }
  double eps_train() const override { return eps; }
};

// kernel ridge model on the two-layer ReLU tangent kernel; carries its own
// anchor set so robust (perturbed-anchor) and plain models coexist. The fit
// targets are kept because the weight-gap and validity checks need ||Y||.
struct ntk_model final : predictor {
  mat X_train;  // n x d anchors
  vec y_train;  // fit targets, length n
  vec w;        // kernel weights, length n
  double beta = 0.1;
  double eps = 0.0;

  int dim() const override { return static_cast<int>(X_train.cols()); }
  double score(const vec& x) const override;
  vec input_gradient(const vec& x) const override;
  std::string family() const override { return "ntk"; }
  double eps_train() const override { return eps; }
};

// cosine clamped away from +-1; arccos' is singular there
inline constexpr double k_ntk_clamp = 1e-12;

double ntk_kernel(const vec& xi, const vec& xj);
// d/dx K(x, xj)
vec ntk_kernel_gradient(const vec& x, const vec& xj);
// K(x, B_row) for all rows of B
vec ntk_kernel_vec(const vec& x, const mat& B);
// row j = d/dx K(x, B_row_j); gradient of the score is then G^T w
mat ntk_kernel_vec_gradient(const vec& x, const mat& B);
mat ntk_gram(const mat& A, const mat& B);
// w = (K(X,X) + beta I)^{-1} Y
ntk_model ntk_fit(const mat& X, const vec& y, double beta);

// one-hidden-layer Gaussian VAE: encoder d -> hidden -> (mu, log sigma^2),
// decoder k -> hidden -> d, unit observation variance
struct vae_model {
  mat We1, Wmu, Wlv, Wd1, Wd2;
  vec be1, bmu, blv, bd1, bd2;
  int k = 2;
  int hidden = 4;
  double lipschitz_upper = 0.0;        // product of decoder operator norms
  double val_recon_mean = 0.0;         // validation stats of 0.5||x - xhat||^2
  double val_recon_std = 0.0;

  int dim() const { return static_cast<int>(We1.cols()); }
  // (mu, sigma); sigma = exp(0.5 * logvar) > 0
  std::pair<vec, vec> encode(const vec& x) const;
  vec decode(const vec& z) const;
  mat decode_batch(const mat& Z) const;
  // deterministic reconstruction error 0.5 ||x - decode(mu(x))||^2
  double recon_error(const vec& x) const;
};

// operator 2-norm by power iteration on M^T M (deterministic start)
double spectral_norm(const mat& M, double tol = 1e-12, int max_iters = 100000);
// product of decoder weight operator norms; ReLU is 1-Lipschitz so this
// upper-bounds the decoder's Lipschitz constant
double decoder_lipschitz_upper(const vae_model& v);

// ---- serialization: key/value text, hex-float weights, bit-exact scores ----
void save_model(std::ostream& out, const linear_model& m);
void save_model(std::ostream& out, const mlp_model& m);
void save_model(std::ostream& out, const ntk_model& m);
void save_model(std::ostream& out, const vae_model& m);

using model_variant = std::variant<linear_model, mlp_model, ntk_model, vae_model>;
model_variant load_model(std::istream& in);
model_variant load_model_file(const std::string& path);
void save_model_file(const std::string& path, const model_variant& m);
// view into the variant; throws for a vae (not a predictor)
const predictor& as_predictor(const model_variant& m);

}  // namespace rlab
