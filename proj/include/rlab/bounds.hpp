#pragma once

#include <string>

#include "rlab/model.hpp"

namespace rlab {

enum class theorem_kind { thm1, thm2, thm3 };
enum class condition_kind { thm4, thm5 };

const char* theorem_name(theorem_kind t);
const char* condition_name(condition_kind c);

// Symmetric two-sided bound on a cost difference.  vacuous means the formula
// carries no information for these inputs (it still counts as contained).
struct bound_interval {
  theorem_kind which = theorem_kind::thm1;
  double lower = 0.0;
  double upper = 0.0;
  double empirical = 0.0;
  bool contained = false;
  bool vacuous = false;
};

// One-sided validity-transfer condition: holds iff lhs <= rhs.
struct validity_condition {
  condition_kind which = condition_kind::thm4;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// Weight-drift budget of full-batch robust training after `epochs` steps of
// size eta: epochs * eta * (||x||_2 + eps * sqrt(d)).
double lemma1_delta(const vec& x, int epochs, double eta, double eps);

// |cost_nr - cost_r| <= lambda * (2*||w_nr|| + delta) /
// (||w_nr|| * (||w_nr|| - delta)); vacuous when ||w_nr|| <= delta.
bound_interval thm1_interval(double w_nr_norm, double delta, double lambda,
                             double empirical);
bound_interval thm1_interval(const vec& w_nr, double delta, double lambda,
                             double empirical);

// |cost_nr - cost_r| <= 1/a + 1/b where a, b are the norms of the two
// kernel-weighted score gradients at the factual instance; vacuous when
// either norm is zero.
bound_interval thm2_interval_from_norms(double wbar_nr_norm,
                                        double wbar_r_norm, double empirical);
bound_interval thm2_interval(const ntk_model& nr, const ntk_model& rob,
                             const vec& x, double empirical);

// |cost_nr - cost_r| <= lipschitz * (r_nr + r_r), radii from the two
// latent-ball searches.
bound_interval thm3_interval(double lipschitz, double r_nr, double r_r,
                             double empirical);

// Operator 2-norm of (K_nr + beta*I)^-1 - (K_r + beta*I)^-1.
double lemma2_delta_k(const ntk_model& nr, const ntk_model& rob);

struct lemma2_report {
  double delta_k = 0.0;
  double w_gap = 0.0;        // ||w_nr - w_r||_2
  double w_gap_bound = 0.0;  // delta_k * ||y||_2
  double wnr_norm = 0.0;
  double wr_norm = 0.0;
  bool gap_ok = false;       // w_gap <= w_gap_bound (numeric slack)
  bool sandwich_ok = false;  // wr_norm within w_gap_bound of wnr_norm
};

lemma2_report lemma2_check(const ntk_model& nr, const ntk_model& rob);

// |w_nr'(x_cf_r - x_cf_nr)| <= delta * ||x_cf_r||_2
validity_condition thm4_condition(const linear_model& nr, double delta,
                                  const vec& x_cf_nr, const vec& x_cf_r);

// |k(x_cf_r, X_r)'w_nr - k(x_cf_nr, X_nr)'w_nr| <=
// ||k(x_cf_r, X_r)||_2 * delta_k * ||y||_2
validity_condition thm5_condition(const ntk_model& nr, const ntk_model& rob,
                                  const vec& x_cf_nr, const vec& x_cf_r);
validity_condition thm5_condition(const ntk_model& nr, const ntk_model& rob,
                                  const vec& x_cf_nr, const vec& x_cf_r,
                                  double delta_k);

}  // namespace rlab
