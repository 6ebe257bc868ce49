#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rlab/dataset.hpp"
#include "rlab/recourse.hpp"
#include "rlab/train.hpp"

using namespace rlab;

namespace {

linear_model axis_model(double w0, double w1) {
  linear_model m;
  m.w = vec(2);
  m.w << w0, w1;
  return m;
}

// decoder range is the ray {(6z, 0) : z >= 0}; encoder mu(x) = relu-sum
vae_model ray_vae() {
  vae_model v;
  v.k = 1;
  v.hidden = 2;
  v.We1 = mat::Identity(2, 2);
  v.be1 = vec::Zero(2);
  v.Wmu = mat(1, 2);
  v.Wmu << 1, 1;
  v.bmu = vec::Zero(1);
  v.Wlv = mat::Zero(1, 2);
  v.blv = vec::Zero(1);
  v.Wd1 = mat(2, 1);
  v.Wd1 << 2, 0;
  v.Wd2 = 3.0 * mat::Identity(2, 2);
  v.bd1 = vec::Zero(2);
  v.bd2 = vec::Zero(2);
  v.lipschitz_upper = decoder_lipschitz_upper(v);
  return v;
}

}  // namespace

TEST_CASE("closed form: textbook example and boundary cases") {
  linear_model m = axis_model(1, 0);
  vec x = vec::Zero(2);
  // (target - w.x) / (lambda + ||w||^2) * w with target 1, lambda 1
  vec zeta = scfe_closed_form_zeta(m.w, x, 1.0, 1.0);
  vec want(2);
  want << 0.5, 0;
  CHECK(zeta == want);

  // already at the target: no movement
  vec x_at(2);
  x_at << 1.0, 3.0;
  CHECK(scfe_closed_form_zeta(m.w, x_at, 1.0, 1.0).norm() == 0.0);

  // lambda -> 0 approaches the projection onto the target hyperplane
  vec x_neg(2);
  x_neg << -2.0, 1.0;
  vec z_small = scfe_closed_form_zeta(m.w, x_neg, 1e-12, 0.5);
  CHECK(z_small.norm() ==
        doctest::Approx(oracle::hyperplane_distance(m.w, x_neg, 0.5))
            .epsilon(1e-9));
  // positive lambda always moves strictly less than the projection
  vec z_reg = scfe_closed_form_zeta(m.w, x_neg, 1.0, 0.5);
  CHECK(z_reg.norm() < z_small.norm());

  CHECK_THROWS_AS(scfe_closed_form_zeta(m.w, x, 0.0, 1.0), config_error);
  CHECK_THROWS_AS(scfe_closed_form_zeta(vec::Zero(2), x, 1.0, 1.0),
                  data_error);
}

TEST_CASE("closed form: outcome fields and validity semantics") {
  linear_model m = axis_model(1, 0);
  vec x(2);
  x << -1, 0.5;
  recourse_outcome o = scfe_closed_form(m, x, 0.1);
  CHECK(o.method == method_kind::scfe);
  CHECK(o.found);
  CHECK(o.iterations == 0);
  CHECK(o.final_lambda == 0.1);
  CHECK(o.x == x);
  CHECK(o.x_cf == x + scfe_closed_form_zeta(m.w, x, 0.1));
  CHECK(o.cost == (o.x_cf - x).norm());
  // small lambda moves nearly the full gap to the target: lands at x0 > 0
  CHECK(o.valid);
  CHECK(std::isnan(o.latent_radius));

  // heavier regularization stops short of the boundary: found but invalid
  recourse_outcome ow = scfe_closed_form(m, x, 1.0);
  CHECK(ow.found);
  CHECK_FALSE(ow.valid);
  CHECK(m.score(ow.x_cf) < 0.0);

  // the formula itself is label-agnostic: a positive start pulls back
  // toward the target score instead of throwing
  vec x_pos(2);
  x_pos << 2, 0;
  recourse_outcome op = scfe_closed_form(m, x_pos, 1.0);
  CHECK(op.found);
  CHECK(op.x_cf(0) < 2.0);
  CHECK(op.valid);
}

TEST_CASE("scfe search: agrees with the closed form at its final lambda") {
  synthetic_spec sp;
  sp.n_per_class = 150;
  sp.class_separation = 2.0;
  sp.noise_std = 0.5;
  sp.seed = 3;
  dataset ds = make_synthetic(sp);
  train_config tc;
  tc.epochs = 800;
  tc.learning_rate = 0.01;
  linear_model m = train_linear(ds, tc);

  scfe_params p;
  int checked = 0;
  for (int i = 0; i < ds.n() && checked < 10; ++i) {
    vec x = ds.X.row(i).transpose();
    if (label_of(m.score(x)) != -1) continue;
    ++checked;
    recourse_outcome o = scfe_search(m, x, p);
    REQUIRE(o.found);
    recourse_outcome ref = scfe_closed_form(m, x, o.final_lambda, p.target);
    CHECK((o.x_cf - ref.x_cf).norm() < 1e-6);
    CHECK(std::abs(o.cost - ref.cost) < 1e-8);
  }
  CHECK(checked == 10);
}

TEST_CASE("scfe search: round-end semantics and bookkeeping") {
  linear_model m = axis_model(1, 0);
  vec x(2);
  x << -1, 0;

  // an easy objective still runs its full first round
  scfe_params easy;
  easy.lambda_init = 0.001;
  recourse_outcome o = scfe_search(m, x, easy);
  CHECK(o.found);
  CHECK(o.iterations == easy.inner_steps);
  CHECK(o.final_lambda == easy.lambda_init);
  CHECK(m.score(o.x_cf) >= 0.0);

  // an over-regularized objective decays lambda each round and gives up
  scfe_params hard;
  hard.lambda_init = 1e6;
  hard.lambda_decay = 0.5;
  hard.lambda_rounds = 2;
  hard.inner_steps = 5;
  hard.step_size = 1e-9;
  vec x_far(2);
  x_far << -5, 0;
  recourse_outcome f = scfe_search(m, x_far, hard);
  CHECK_FALSE(f.found);
  CHECK_FALSE(f.valid);
  CHECK(f.budget_exhausted);
  CHECK(f.iterations == 2 * 5);
  CHECK(f.final_lambda == 1e6 * 0.25);  // decayed after both failed rounds
  CHECK(std::isnan(f.cost));
  CHECK(f.x_cf.size() == 0);

  // diverging step size is diagnosed with round/step context
  scfe_params wild;
  wild.step_size = 1e300;
  CHECK_THROWS_WITH_AS(scfe_search(m, x, wild), doctest::Contains("round"),
                       numeric_error);

  scfe_params bad = easy;
  bad.lambda_decay = 1.0;
  CHECK_THROWS_AS(scfe_search(m, x, bad), config_error);
  vec x_pos(2);
  x_pos << 1, 0;
  CHECK_THROWS_AS(scfe_search(m, x_pos, scfe_params{}), data_error);
}

TEST_CASE("scfe search: validity is rechecked on a nonlinear model") {
  synthetic_spec sp;
  sp.n_per_class = 60;
  sp.class_separation = 1.2;
  sp.noise_std = 0.3;
  sp.seed = 4;
  dataset ds = make_synthetic(sp);
  train_config tc;
  tc.epochs = 300;
  tc.learning_rate = 0.2;
  tc.seed = 0;
  mlp_model m = train_mlp(ds, tc, 1, 8);

  scfe_params p;
  p.step_size = 0.005;
  p.inner_steps = 1000;
  int tried = 0, valid = 0;
  for (int i = 0; i < ds.n() && tried < 8; ++i) {
    vec x = ds.X.row(i).transpose();
    if (label_of(m.score(x)) != -1) continue;
    ++tried;
    recourse_outcome o = scfe_search(m, x, p);
    if (o.found) {
      CHECK(m.score(o.x_cf) >= 0.0);  // label consistency, not target hit
      CHECK(o.cost == (o.x_cf - x).norm());
      CHECK(o.iterations % p.inner_steps == 0);
      ++valid;
    }
  }
  CHECK(tried == 8);
  CHECK(valid >= 6);
}

TEST_CASE("grow-and-sample: halfspace cost brackets the oracle distance") {
  linear_model m = axis_model(1, 0);
  vec x(2);
  x << -1, 0;
  // the true minimum displacement is 1; shells grow 0.5, 0.6, ..., so the
  // first reachable shell caps the cost at 1.2^k * 0.5 < 1.25
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    gsm_params p;
    p.seed = seed;
    recourse_outcome o = gsm_search(m, x, p);
    REQUIRE(o.found);
    CHECK(o.valid);
    CHECK(o.cost >= 1.0 - 1e-12);
    CHECK(o.cost < 1.25);
    CHECK(m.score(o.x_cf) >= 0.0);
    CHECK(o.cost == (o.x_cf - x).norm());
  }
}

TEST_CASE("grow-and-sample: first shell success, exhaustion, determinism") {
  linear_model m = axis_model(1, 0);
  vec near(2);
  near << -0.01, 0;
  gsm_params p;
  p.seed = 7;
  recourse_outcome o = gsm_search(m, near, p);
  CHECK(o.found);
  CHECK(o.iterations == 1);  // the initial ball already crosses the boundary

  vec far(2);
  far << -100, 0;
  gsm_params tight;
  tight.r0 = 0.5;
  tight.growth = 1.05;
  tight.max_shells = 3;
  tight.seed = 7;
  recourse_outcome f = gsm_search(m, far, tight);
  CHECK_FALSE(f.found);
  CHECK(f.budget_exhausted);
  CHECK(f.iterations == 3);
  CHECK(std::isnan(f.cost));

  recourse_outcome a = gsm_search(m, near, p);
  CHECK(a.x_cf == o.x_cf);
  gsm_params p2 = p;
  p2.seed = 8;
  recourse_outcome b = gsm_search(m, near, p2);
  CHECK(b.x_cf != o.x_cf);

  gsm_params bad;
  bad.growth = 1.0;
  CHECK_THROWS_AS(gsm_search(m, near, bad), config_error);
  bad = gsm_params{};
  bad.gamma = -1.0;
  CHECK_THROWS_AS(gsm_search(m, near, bad), config_error);
  vec x_pos(2);
  x_pos << 1, 0;
  CHECK_THROWS_AS(gsm_search(m, x_pos, p), data_error);
}

TEST_CASE("grow-and-sample: sparsity pass resets idle coordinates") {
  linear_model m = axis_model(1, 0);  // only coordinate 0 matters
  vec x(2);
  x << -0.2, 0.7;
  gsm_params plain;
  plain.seed = 5;
  gsm_params sparse = plain;
  sparse.gamma = 0.4;
  recourse_outcome o0 = gsm_search(m, x, plain);
  recourse_outcome o1 = gsm_search(m, x, sparse);
  REQUIRE(o0.found);
  REQUIRE(o1.found);
  // the idle coordinate snaps back to the factual value
  CHECK(o0.x_cf(1) != x(1));
  CHECK(o1.x_cf(1) == x(1));
  CHECK(o1.x_cf(0) == o0.x_cf(0));
  CHECK(o1.valid);
  CHECK(o1.cost <= o0.cost);
  CHECK(o1.cost == (o1.x_cf - x).norm());
}

TEST_CASE("latent search: ray decoder, exact radius and range membership") {
  vae_model v = ray_vae();
  linear_model m = axis_model(1, 0);
  vec x(2);
  x << -1, 5;
  cchvae_params p;
  p.seed = 11;
  recourse_outcome o = cchvae_search(m, v, x, p);
  REQUIRE(o.found);
  CHECK(o.valid);
  CHECK(o.iterations == 1);
  CHECK(o.latent_radius == p.r0);  // success on the very first radius
  CHECK(o.x_cf(1) == 0.0);         // decoder range is the (.,0) ray
  CHECK(o.x_cf(0) >= 0.0);
  CHECK(o.cost == (o.x_cf - x).norm());
  CHECK(o.method == method_kind::cchvae);

  recourse_outcome o2 = cchvae_search(m, v, x, p);
  CHECK(o2.x_cf == o.x_cf);

  cchvae_params bad = p;
  bad.norm_p = 1;
  CHECK_THROWS_AS(cchvae_search(m, v, x, bad), config_error);

  linear_model m3;
  m3.w = vec::Ones(3);
  CHECK_THROWS_AS(cchvae_search(m3, v, x, p), data_error);

  vec x_pos(2);
  x_pos << 2, 5;
  CHECK_THROWS_AS(cchvae_search(m, v, x_pos, p), data_error);
}

TEST_CASE("latent search: budget exhaustion when the range never validates") {
  vae_model v = ray_vae();
  v.bd2 = vec(2);
  v.bd2 << 0, -1;  // decoded points all score -1 under w = (0, 1)
  linear_model m = axis_model(0, 1);
  vec x(2);
  x << -1, -5;
  cchvae_params p;
  p.max_steps = 4;
  recourse_outcome o = cchvae_search(m, v, x, p);
  CHECK_FALSE(o.found);
  CHECK(o.budget_exhausted);
  CHECK(o.iterations == 4);
  CHECK(std::isnan(o.latent_radius));
  CHECK(std::isnan(o.cost));
}

TEST_CASE("latent search: end-to-end validity on learned factor structure") {
  factor_spec sp;
  sp.n = 400;
  sp.seed = 1;
  dataset ds = make_factor_mixture(sp);
  train_config tc;
  tc.epochs = 800;
  tc.learning_rate = 0.01;
  linear_model m = train_linear(ds, tc);
  vae_model v = train_vae(ds, 2, 1500, 0.01, 1);

  cchvae_params p;
  int tried = 0, valid = 0;
  for (int i = 0; i < ds.n() && tried < 10; ++i) {
    vec x = ds.X.row(i).transpose();
    if (label_of(m.score(x)) != -1) continue;
    ++tried;
    p.seed = 100 + i;
    recourse_outcome o = cchvae_search(m, v, x, p);
    if (o.found) {
      CHECK(m.score(o.x_cf) >= 0.0);
      CHECK(o.latent_radius > 0.0);
      ++valid;
    }
  }
  CHECK(tried == 10);
  CHECK(valid >= 9);
}

TEST_CASE("method names map both ways") {
  CHECK(method_name(method_kind::scfe) == std::string("scfe"));
  CHECK(method_name(method_kind::gsm) == std::string("gsm"));
  CHECK(method_name(method_kind::cchvae) == std::string("cchvae"));
  CHECK(method_from_name("scfe") == method_kind::scfe);
  CHECK(method_from_name("gsm") == method_kind::gsm);
  CHECK(method_from_name("cchvae") == method_kind::cchvae);
  CHECK_THROWS_AS(method_from_name("dice"), config_error);
}
