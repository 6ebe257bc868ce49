#include "rlab/bounds.hpp"

#include <cmath>
#include <limits>

namespace rlab {

namespace {
constexpr double k_inf = std::numeric_limits<double>::infinity();

bool inside(double lo, double v, double hi) { return lo <= v && v <= hi; }

void check_pair(const ntk_model& nr, const ntk_model& rob, const char* who,
                bool need_labels) {
  if (nr.X_train.rows() != rob.X_train.rows())
    throw data_error(std::string(who) + ": anchor counts differ (" +
                     std::to_string(nr.X_train.rows()) + " vs " +
                     std::to_string(rob.X_train.rows()) + ")");
  if (nr.beta != rob.beta)
    throw data_error(std::string(who) + ": ridge parameters differ");
  if (need_labels &&
      (nr.y_train.size() != rob.y_train.size() ||
       !(nr.y_train.array() == rob.y_train.array()).all()))
    throw data_error(std::string(who) + ": label vectors differ");
}
}  // namespace

const char* theorem_name(theorem_kind t) {
  switch (t) {
    case theorem_kind::thm1: return "thm1";
    case theorem_kind::thm2: return "thm2";
    case theorem_kind::thm3: return "thm3";
  }
  throw config_error("theorem_name: bad enum value");
}

const char* condition_name(condition_kind c) {
  switch (c) {
    case condition_kind::thm4: return "thm4";
    case condition_kind::thm5: return "thm5";
  }
  throw config_error("condition_name: bad enum value");
}

double lemma1_delta(const vec& x, int epochs, double eta, double eps) {
  if (epochs < 1) throw config_error("lemma1_delta: epochs must be >= 1");
  if (!(eta > 0.0)) throw config_error("lemma1_delta: eta must be > 0");
  if (!(eps >= 0.0)) throw config_error("lemma1_delta: eps must be >= 0");
  return epochs * eta *
         (x.norm() + eps * std::sqrt(static_cast<double>(x.size())));
}

bound_interval thm1_interval(double w_nr_norm, double delta, double lambda,
                             double empirical) {
  if (!(lambda > 0.0)) throw config_error("thm1_interval: lambda must be > 0");
  if (!(w_nr_norm > 0.0))
    throw config_error("thm1_interval: weight norm must be > 0");
  if (!(delta >= 0.0)) throw config_error("thm1_interval: delta must be >= 0");
  bound_interval b;
  b.which = theorem_kind::thm1;
  b.empirical = empirical;
  if (w_nr_norm <= delta) {
    b.vacuous = true;
    b.upper = k_inf;
    b.lower = -k_inf;
    b.contained = true;
    return b;
  }
  b.upper = lambda * (2.0 * w_nr_norm + delta) /
            (w_nr_norm * (w_nr_norm - delta));
  b.lower = -b.upper;
  b.contained = inside(b.lower, empirical, b.upper);
  return b;
}

bound_interval thm1_interval(const vec& w_nr, double delta, double lambda,
                             double empirical) {
  return thm1_interval(w_nr.norm(), delta, lambda, empirical);
}

bound_interval thm2_interval_from_norms(double wbar_nr_norm,
                                        double wbar_r_norm, double empirical) {
  if (!(wbar_nr_norm >= 0.0) || !(wbar_r_norm >= 0.0))
    throw config_error("thm2_interval: gradient norms must be >= 0");
  bound_interval b;
  b.which = theorem_kind::thm2;
  b.empirical = empirical;
  if (wbar_nr_norm == 0.0 || wbar_r_norm == 0.0) {
    b.vacuous = true;
    b.upper = k_inf;
    b.lower = -k_inf;
    b.contained = true;
    return b;
  }
  b.upper = 1.0 / wbar_nr_norm + 1.0 / wbar_r_norm;
  b.lower = -b.upper;
  b.contained = inside(b.lower, empirical, b.upper);
  return b;
}

bound_interval thm2_interval(const ntk_model& nr, const ntk_model& rob,
                             const vec& x, double empirical) {
  if (nr.dim() != rob.dim() || nr.dim() != static_cast<int>(x.size()))
    throw data_error("thm2_interval: dimension mismatch");
  double a = nr.input_gradient(x).norm();
  double b = rob.input_gradient(x).norm();
  return thm2_interval_from_norms(a, b, empirical);
}

bound_interval thm3_interval(double lipschitz, double r_nr, double r_r,
                             double empirical) {
  if (!(lipschitz > 0.0))
    throw config_error("thm3_interval: lipschitz constant must be > 0");
  if (!(r_nr > 0.0) || !(r_r > 0.0))
    throw config_error("thm3_interval: latent radii must be > 0");
  bound_interval b;
  b.which = theorem_kind::thm3;
  b.empirical = empirical;
  b.upper = lipschitz * (r_nr + r_r);
  b.lower = -b.upper;
  b.contained = inside(b.lower, empirical, b.upper);
  return b;
}

double lemma2_delta_k(const ntk_model& nr, const ntk_model& rob) {
  check_pair(nr, rob, "lemma2_delta_k", false);
  const auto n = nr.X_train.rows();
  mat I = mat::Identity(n, n);
  mat A_nr = ntk_gram(nr.X_train, nr.X_train) + nr.beta * I;
  mat A_r = ntk_gram(rob.X_train, rob.X_train) + rob.beta * I;
  mat diff = A_nr.ldlt().solve(I) - A_r.ldlt().solve(I);
  return spectral_norm(diff);
}

lemma2_report lemma2_check(const ntk_model& nr, const ntk_model& rob) {
  check_pair(nr, rob, "lemma2_check", true);
  lemma2_report rep;
  rep.delta_k = lemma2_delta_k(nr, rob);
  rep.w_gap = (nr.w - rob.w).norm();
  rep.w_gap_bound = rep.delta_k * nr.y_train.norm();
  rep.wnr_norm = nr.w.norm();
  rep.wr_norm = rob.w.norm();
  double slack = 1e-9 * (1.0 + rep.w_gap_bound);
  rep.gap_ok = rep.w_gap <= rep.w_gap_bound + slack;
  rep.sandwich_ok = rep.wr_norm >= rep.wnr_norm - rep.w_gap_bound - slack &&
                    rep.wr_norm <= rep.wnr_norm + rep.w_gap_bound + slack;
  return rep;
}

validity_condition thm4_condition(const linear_model& nr, double delta,
                                  const vec& x_cf_nr, const vec& x_cf_r) {
  if (x_cf_nr.size() != x_cf_r.size() ||
      nr.dim() != static_cast<int>(x_cf_nr.size()))
    throw data_error("thm4_condition: dimension mismatch");
  if (!x_cf_nr.allFinite() || !x_cf_r.allFinite() || !std::isfinite(delta))
    throw data_error("thm4_condition: non-finite input");
  validity_condition c;
  c.which = condition_kind::thm4;
  c.lhs = std::abs(nr.w.dot(x_cf_r) - nr.w.dot(x_cf_nr));
  c.rhs = delta * x_cf_r.norm();
  c.holds = c.lhs <= c.rhs;
  return c;
}

validity_condition thm5_condition(const ntk_model& nr, const ntk_model& rob,
                                  const vec& x_cf_nr, const vec& x_cf_r,
                                  double delta_k) {
  check_pair(nr, rob, "thm5_condition", true);
  if (nr.dim() != static_cast<int>(x_cf_nr.size()) ||
      rob.dim() != static_cast<int>(x_cf_r.size()))
    throw data_error("thm5_condition: dimension mismatch");
  vec k_r = ntk_kernel_vec(x_cf_r, rob.X_train);
  vec k_nr = ntk_kernel_vec(x_cf_nr, nr.X_train);
  validity_condition c;
  c.which = condition_kind::thm5;
  c.lhs = std::abs((k_r - k_nr).dot(nr.w));
  c.rhs = k_r.norm() * delta_k * nr.y_train.norm();
  c.holds = c.lhs <= c.rhs;
  return c;
}

validity_condition thm5_condition(const ntk_model& nr, const ntk_model& rob,
                                  const vec& x_cf_nr, const vec& x_cf_r) {
  return thm5_condition(nr, rob, x_cf_nr, x_cf_r, lemma2_delta_k(nr, rob));
}

}  // namespace rlab
