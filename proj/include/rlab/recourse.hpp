#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "rlab/model.hpp"

namespace rlab {

enum class method_kind { scfe, gsm, cchvae };

const char* method_name(method_kind m);
method_kind method_from_name(const std::string& name);

struct scfe_params {
  double target = k_default_target;  // score the objective pulls toward
  double lambda_init = 1.0;
  double lambda_decay = 0.5;  // in (0, 1)
  int lambda_rounds = 10;
  int inner_steps = 200;
  double step_size = 0.05;
};

struct gsm_params {
  double r0 = 0.5;       // radius of the first sampling ball
  double growth = 1.2;   // > 1
  int samples_per_shell = 500;
  int max_shells = 40;
  double gamma = 0.0;    // > 0 enables the sparsity post-process
  std::uint64_t seed = 0;
};

struct cchvae_params {
  double r0 = 0.25;      // initial latent-ball radius
  double growth = 1.3;   // > 1
  int samples_per_step = 200;
  int max_steps = 25;
  int norm_p = 2;        // only the euclidean ball is supported
  std::uint64_t seed = 0;
};

struct recourse_outcome {
  method_kind method = method_kind::scfe;
  vec x;
  vec x_cf;  // empty when !found
  bool found = false;
  bool valid = false;
  bool budget_exhausted = false;
  double cost = std::numeric_limits<double>::quiet_NaN();  // ||x_cf - x||_2
  long long iterations = 0;
  // method-specific extras (NaN when not applicable)
  double final_lambda = std::numeric_limits<double>::quiet_NaN();   // scfe
  double latent_radius = std::numeric_limits<double>::quiet_NaN();  // cchvae
};

// Exact minimizer of (w'x' - target)^2 + lambda*||x' - x||^2 for a bias-free
// linear scorer: zeta = (target - w'x) * w / (lambda + ||w||^2).
vec scfe_closed_form_zeta(const vec& w, const vec& x, double lambda,
                          double target = k_default_target);

recourse_outcome scfe_closed_form(const linear_model& m, const vec& x,
                                  double lambda,
                                  double target = k_default_target);

// Gradient descent on (f(x') - target)^2 + lambda*||x' - x||^2 starting at
// x' = x; whenever a round of inner_steps ends still on the negative side,
// lambda is multiplied by lambda_decay and descent continues from the current
// iterate.  The first round ending with label +1 wins (larger lambda means a
// cheaper counterfactual, so it is also the best by cost).
recourse_outcome scfe_search(const predictor& m, const vec& x,
                             const scfe_params& p = {});

// Rejection sampling over concentric shells around x: first a ball of radius
// r0, then annuli grown by `growth`, returning the cheapest positive sample
// of the first shell that contains one.  iterations counts shells sampled.
recourse_outcome gsm_search(const predictor& m, const vec& x,
                            const gsm_params& p = {});

// Latent-space search: candidates are decoded from z(x) + zeta with zeta
// uniform in a euclidean ball whose radius grows until some decoded candidate
// is labeled +1; that step's cheapest (input-space cost) candidate wins and
// its radius is recorded.
recourse_outcome cchvae_search(const predictor& m, const vae_model& vae,
                               const vec& x, const cchvae_params& p = {});

}  // namespace rlab
