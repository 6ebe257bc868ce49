#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "rlab/bounds.hpp"
#include "rlab/dataset.hpp"
#include "rlab/rng.hpp"
#include "rlab/train.hpp"

using namespace rlab;

namespace {

ntk_model scalar_anchor(double a, double beta, double weight = 1.0) {
  ntk_model m;
  m.X_train = mat(1, 1);
  m.X_train << a;
  m.y_train = vec(1);
  m.y_train << 1.0;
  m.w = vec(1);
  m.w << weight;
  m.beta = beta;
  return m;
}

}  // namespace

TEST_CASE("weight drift budget: exact values and validation") {
  vec x(2);
  x << 3, 4;
  CHECK(lemma1_delta(x, 1, 0.1, 0.0) == 0.5);

  vec ones = vec::Ones(4);  // norm 2, sqrt(d) = 2
  CHECK(lemma1_delta(ones, 10, 0.1, 0.5) == 3.0);

  // scaling in each argument
  CHECK(lemma1_delta(x, 2, 0.1, 0.0) == 2.0 * lemma1_delta(x, 1, 0.1, 0.0));
  CHECK(lemma1_delta(x, 1, 0.2, 0.0) == 2.0 * lemma1_delta(x, 1, 0.1, 0.0));
  CHECK(lemma1_delta(x, 1, 0.1, 1.0) > lemma1_delta(x, 1, 0.1, 0.0));

  CHECK_THROWS_AS(lemma1_delta(x, 0, 0.1, 0.0), config_error);
  CHECK_THROWS_AS(lemma1_delta(x, 1, 0.0, 0.0), config_error);
  CHECK_THROWS_AS(lemma1_delta(x, 1, 0.1, -1.0), config_error);
}

TEST_CASE("cost gap bound, regularized linear: exact interval and vacuity") {
  bound_interval b = thm1_interval(2.0, 1.0, 1.0, 2.5);
  CHECK(b.which == theorem_kind::thm1);
  CHECK(b.upper == 2.5);  // 1 * (4 + 1) / (2 * 1)
  CHECK(b.lower == -2.5);
  CHECK(b.contained);  // boundary counts as inside
  CHECK_FALSE(b.vacuous);
  CHECK_FALSE(thm1_interval(2.0, 1.0, 1.0, 2.5 + 1e-9).contained);
  CHECK(thm1_interval(2.0, 1.0, 1.0, -2.5).contained);

  // the weight-norm overload agrees with the scalar form
  vec w(2);
  w << 3, 4;
  bound_interval bv = thm1_interval(w, 1.0, 2.0, 0.0);
  CHECK(bv.upper == 1.1);  // 2 * (10 + 1) / (5 * 4)
  CHECK(bv.upper == thm1_interval(5.0, 1.0, 2.0, 0.0).upper);

  // drift at or past the weight norm carries no information
  for (double delta : {2.0, 3.0}) {
    bound_interval v = thm1_interval(2.0, delta, 1.0, 1e18);
    CHECK(v.vacuous);
    CHECK(v.upper == std::numeric_limits<double>::infinity());
    CHECK(v.lower == -std::numeric_limits<double>::infinity());
    CHECK(v.contained);
  }

  // looser drift budget, looser interval
  CHECK(thm1_interval(1.0, 0.5, 1.0, 0.0).upper <
        thm1_interval(1.0, 0.9, 1.0, 0.0).upper);

  CHECK_THROWS_AS(thm1_interval(2.0, 1.0, 0.0, 0.0), config_error);
  CHECK_THROWS_AS(thm1_interval(0.0, 1.0, 1.0, 0.0), config_error);
  CHECK_THROWS_AS(thm1_interval(2.0, -0.1, 1.0, 0.0), config_error);
}

TEST_CASE("cost gap bound, kernel gradients: reciprocal-sum interval") {
  bound_interval b = thm2_interval_from_norms(0.5, 0.25, 6.0);
  CHECK(b.which == theorem_kind::thm2);
  CHECK(b.upper == 6.0);  // 1/0.5 + 1/0.25
  CHECK(b.lower == -6.0);
  CHECK(b.contained);
  CHECK_FALSE(thm2_interval_from_norms(0.5, 0.25, 6.0 + 1e-9).contained);

  bound_interval v = thm2_interval_from_norms(0.0, 0.25, 1e18);
  CHECK(v.vacuous);
  CHECK(v.contained);
  CHECK(v.upper == std::numeric_limits<double>::infinity());
  CHECK(thm2_interval_from_norms(0.5, 0.0, 0.0).vacuous);
  CHECK_THROWS_AS(thm2_interval_from_norms(-0.1, 0.25, 0.0), config_error);

  // the model-pair overload feeds the gradient norms at the factual point
  rng rs(42);
  mat X(6, 2);
  vec y(6);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = rs.normal();
    X(i, 1) = rs.normal();
    y(i) = i % 2 == 0 ? 1.0 : -1.0;
  }
  ntk_model nr = ntk_fit(X, y, 0.1);
  ntk_model rob = ntk_fit(1.5 * X, y, 0.1);
  vec x(2);
  x << 0.7, -0.3;
  bound_interval pair = thm2_interval(nr, rob, x, 0.5);
  bound_interval ref = thm2_interval_from_norms(
      nr.input_gradient(x).norm(), rob.input_gradient(x).norm(), 0.5);
  CHECK(pair.upper == ref.upper);
  CHECK(pair.contained == ref.contained);
  vec x3 = vec::Zero(3);
  CHECK_THROWS_AS(thm2_interval(nr, rob, x3, 0.0), data_error);
}

TEST_CASE("cost gap bound, latent search: lipschitz times radii sum") {
  bound_interval b = thm3_interval(2.0, 0.25, 0.5, 1.5);
  CHECK(b.which == theorem_kind::thm3);
  CHECK(b.upper == 1.5);
  CHECK(b.lower == -1.5);
  CHECK(b.contained);
  CHECK(thm3_interval(2.0, 0.25, 0.5, -1.5).contained);
  CHECK_FALSE(thm3_interval(2.0, 0.25, 0.5, 1.5 + 1e-9).contained);
  CHECK_FALSE(b.vacuous);

  CHECK_THROWS_AS(thm3_interval(0.0, 0.25, 0.5, 0.0), config_error);
  CHECK_THROWS_AS(thm3_interval(2.0, 0.0, 0.5, 0.0), config_error);
  CHECK_THROWS_AS(thm3_interval(2.0, 0.25, -0.5, 0.0), config_error);
}

TEST_CASE("kernel drift: scalar hand check and self-difference") {
  // scalar anchors a and b give gram entries a^2/2 and b^2/2, so the
  // resolvent difference is |1/(a^2/2 + beta) - 1/(b^2/2 + beta)|
  ntk_model a = scalar_anchor(1.0, 0.5);
  ntk_model b = scalar_anchor(std::sqrt(0.6), 0.5);
  CHECK(lemma2_delta_k(a, b) == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(lemma2_delta_k(a, a) == 0.0);

  ntk_model wrong_beta = scalar_anchor(1.0, 0.7);
  CHECK_THROWS_AS(lemma2_delta_k(a, wrong_beta), data_error);
  ntk_model more_anchors = a;
  more_anchors.X_train = mat::Ones(2, 1);
  more_anchors.y_train = vec::Ones(2);
  more_anchors.w = vec::Ones(2);
  CHECK_THROWS_AS(lemma2_delta_k(a, more_anchors), data_error);
}

TEST_CASE("kernel drift: matches an independent resolvent computation") {
  rng rs(9);
  const int n = 20, d = 3;
  mat X(n, d), X2(n, d);
  vec y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      X(i, j) = rs.normal();
      X2(i, j) = rs.normal();
    }
    y(i) = i % 2 == 0 ? 1.0 : -1.0;
  }
  ntk_model nr = ntk_fit(X, y, 0.2);
  ntk_model rob = ntk_fit(X2, y, 0.2);

  mat I = mat::Identity(n, n);
  mat diff = (ntk_gram(X, X) + 0.2 * I).fullPivLu().inverse() -
             (ntk_gram(X2, X2) + 0.2 * I).fullPivLu().inverse();
  CHECK(std::abs(lemma2_delta_k(nr, rob) - oracle::svd_spectral_norm(diff)) <
        1e-8);
}

TEST_CASE("kernel drift report: weight gap sandwich on trained pair") {
  synthetic_spec sp;
  sp.n_per_class = 40;
  sp.class_separation = 1.0;
  sp.noise_std = 0.25;
  sp.seed = 2;
  dataset ds = make_synthetic(sp);
  ntk_model nr = train_ntk(ds.X, ds.y, 0.1, 0.0, 0);
  ntk_model rob = train_ntk(ds.X, ds.y, 0.1, 0.1, 0);

  lemma2_report rep = lemma2_check(nr, rob);
  CHECK(rep.delta_k == lemma2_delta_k(nr, rob));
  CHECK(rep.delta_k > 0.0);
  CHECK(rep.w_gap == (nr.w - rob.w).norm());
  CHECK(rep.w_gap_bound == rep.delta_k * nr.y_train.norm());
  CHECK(rep.wnr_norm == nr.w.norm());
  CHECK(rep.wr_norm == rob.w.norm());
  CHECK(rep.gap_ok);
  CHECK(rep.sandwich_ok);

  ntk_model bad_y = rob;
  bad_y.y_train(0) = -bad_y.y_train(0);
  CHECK_THROWS_AS(lemma2_check(nr, bad_y), data_error);
}

TEST_CASE("validity transfer, linear: boundary case and failure") {
  linear_model m;
  m.w = vec(2);
  m.w << 1, 0;
  vec cf_nr(2), cf_r(2);
  cf_nr << 1, 0;
  cf_r << 2, 0;
  validity_condition c = thm4_condition(m, 0.5, cf_nr, cf_r);
  CHECK(c.which == condition_kind::thm4);
  CHECK(c.lhs == 1.0);
  CHECK(c.rhs == 1.0);
  CHECK(c.holds);  // boundary counts
  CHECK_FALSE(thm4_condition(m, 0.49, cf_nr, cf_r).holds);
  CHECK(thm4_condition(m, 0.51, cf_nr, cf_r).holds);

  vec cf3 = vec::Zero(3);
  CHECK_THROWS_AS(thm4_condition(m, 0.5, cf_nr, cf3), data_error);
  vec cf_inf = cf_r;
  cf_inf(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(thm4_condition(m, 0.5, cf_nr, cf_inf), data_error);
  CHECK_THROWS_AS(
      thm4_condition(m, std::numeric_limits<double>::quiet_NaN(), cf_nr, cf_r),
      data_error);
}

TEST_CASE("validity transfer, kernel: hand-built scalar models") {
  ntk_model nr = scalar_anchor(1.0, 0.5, 2.0);
  ntk_model rob = scalar_anchor(2.0, 0.5, 1.0);
  vec cf_nr(1), cf_r(1);
  cf_nr << 1.0;
  cf_r << 3.0;

  // k(cf_r, [2]) ~ 3, k(cf_nr, [1]) ~ 0.5, so lhs ~ |(3 - 0.5) * 2| = 5
  validity_condition yes = thm5_condition(nr, rob, cf_nr, cf_r, 2.0);
  CHECK(yes.which == condition_kind::thm5);
  CHECK(yes.lhs == doctest::Approx(5.0).epsilon(1e-5));
  CHECK(yes.rhs == doctest::Approx(6.0).epsilon(1e-5));
  CHECK(yes.holds);
  validity_condition no = thm5_condition(nr, rob, cf_nr, cf_r, 1.0);
  CHECK(no.rhs == doctest::Approx(3.0).epsilon(1e-5));
  CHECK_FALSE(no.holds);

  // the two-argument overload computes the kernel drift itself
  validity_condition auto_dk = thm5_condition(nr, rob, cf_nr, cf_r);
  validity_condition manual =
      thm5_condition(nr, rob, cf_nr, cf_r, lemma2_delta_k(nr, rob));
  CHECK(auto_dk.lhs == manual.lhs);
  CHECK(auto_dk.rhs == manual.rhs);
  CHECK(auto_dk.holds == manual.holds);

  vec cf_bad = vec::Zero(2);
  CHECK_THROWS_AS(thm5_condition(nr, rob, cf_bad, cf_r, 1.0), data_error);
}

TEST_CASE("theorem and condition names") {
  CHECK(theorem_name(theorem_kind::thm1) == std::string("thm1"));
  CHECK(theorem_name(theorem_kind::thm2) == std::string("thm2"));
  CHECK(theorem_name(theorem_kind::thm3) == std::string("thm3"));
  CHECK(condition_name(condition_kind::thm4) == std::string("thm4"));
  CHECK(condition_name(condition_kind::thm5) == std::string("thm5"));
}
