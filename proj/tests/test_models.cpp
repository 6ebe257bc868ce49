#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "rlab/model.hpp"
#include "rlab/rng.hpp"

using namespace rlab;

namespace {

mat random_mat(int r, int c, std::uint64_t seed) {
  rng g(seed);
  mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = g.normal();
  return M;
}

vec random_vec(int n, std::uint64_t seed) {
  rng g(seed);
  return g.normal_vec(n);
}

mlp_model tiny_mlp() {
  mlp_model m;
  m.depth = 1;
  m.width = 2;
  m.W.resize(2);
  m.b.resize(2);
  m.W[0] = mat(2, 2);
  m.W[0] << 1, 0, 0, 1;
  m.b[0] = vec::Zero(2);
  m.W[1] = mat(1, 2);
  m.W[1] << 1, -1;
  m.b[1] = vec::Constant(1, 0.5);
  return m;
}

vae_model tiny_vae() {
  // d = 2, k = 1, hidden = 2, hand-set weights
  vae_model v;
  v.k = 1;
  v.hidden = 2;
  v.We1 = mat(2, 2);
  v.We1 << 1, 0, 0, 1;
  v.be1 = vec::Zero(2);
  v.Wmu = mat(1, 2);
  v.Wmu << 1, 1;
  v.bmu = vec::Zero(1);
  v.Wlv = mat(1, 2);
  v.Wlv << 0, 0;
  v.blv = vec::Constant(1, -1.0);
  v.Wd1 = mat(2, 1);
  v.Wd1 << 2, 0;
  v.Wd2 = mat(2, 2);
  v.Wd2 << 3, 0, 0, 3;
  v.bd1 = vec::Zero(2);
  v.bd2 = vec::Zero(2);
  v.lipschitz_upper = decoder_lipschitz_upper(v);
  return v;
}

}  // namespace

TEST_CASE("linear model: score, gradient, prediction") {
  linear_model m;
  m.w = vec(2);
  m.w << 2, -1;
  vec x(2);
  x << 1, 1;
  CHECK(m.score(x) == 1.0);
  CHECK(m.input_gradient(x) == m.w);
  prediction p = predict(m, x);
  CHECK(p.score == 1.0);
  CHECK(p.prob == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(p.label == 1);
  // score 0 counts as positive
  vec x0(2);
  x0 << 0.5, 1.0;
  CHECK(predict(m, x0).label == 1);
  vec bad(3);
  bad << 1, 2, 3;
  CHECK_THROWS_AS(m.score(bad), data_error);
  CHECK(m.family() == "linear");
}

TEST_CASE("mlp model: forward, batch forward, gradient") {
  mlp_model m = tiny_mlp();
  vec x(2);
  x << 2, -3;
  CHECK(m.score(x) == 2.5);  // relu kills the second unit
  vec g = m.input_gradient(x);
  vec want(2);
  want << 1, 0;
  CHECK(g == want);

  mat X = random_mat(7, 2, 42);
  vec s = m.scores(X);
  for (int i = 0; i < X.rows(); ++i)
    CHECK(s(i) == doctest::Approx(m.score(X.row(i).transpose())).epsilon(1e-15));

  // finite differences on a smooth spot
  vec xs(2);
  xs << 1.3, 0.7;
  vec fd = oracle::fd_gradient([&](const vec& v) { return m.score(v); }, xs);
  CHECK(oracle::vec_rel_err(m.input_gradient(xs), fd) < 1e-7);
  CHECK(m.family() == "mlp");
  CHECK(m.dim() == 2);
}

TEST_CASE("relu gradient convention at zero") {
  // a unit sitting exactly at pre-activation 0 contributes no gradient
  mlp_model m = tiny_mlp();
  vec x(2);
  x << 0.0, 1.0;
  vec g = m.input_gradient(x);
  CHECK(g(0) == 0.0);
  CHECK(g(1) == -1.0);
}

TEST_CASE("tangent kernel: exact closed-form values") {
  vec e1(2), e2(2), diag(2);
  e1 << 1, 0;
  e2 << 0, 1;
  diag << 1, 1;
  // aligned unit vectors: theta = 0 -> K = 1 * pi / (2 pi) = 1/2
  CHECK(ntk_kernel(e1, e1) == doctest::Approx(0.5).epsilon(1e-6));
  // orthogonal: inner product 0 -> K = 0
  CHECK(ntk_kernel(e1, e2) == doctest::Approx(0.0).epsilon(1e-12));
  // 45 degrees: K = 1 * (pi - pi/4) / (2 pi) = 3/8
  CHECK(ntk_kernel(e1, diag) == doctest::Approx(0.375).epsilon(1e-9));
  // scaling: K(a, 2a) = 2 ||a||^2 * 1/2
  CHECK(ntk_kernel(e1, 2.0 * e1) == doctest::Approx(1.0).epsilon(1e-6));
  // symmetry on random inputs
  vec a = random_vec(4, 1), b = random_vec(4, 2);
  CHECK(ntk_kernel(a, b) == ntk_kernel(b, a));
  vec zero = vec::Zero(2);
  CHECK_THROWS_AS(ntk_kernel(zero, e1), numeric_error);
}

TEST_CASE("tangent kernel: gram matrix is symmetric PSD") {
  mat X = random_mat(12, 3, 5);
  mat K = ntk_gram(X, X);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<mat> es(K);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("tangent kernel: gradient matches finite differences") {
  vec xj = random_vec(3, 7);
  vec x = random_vec(3, 8);
  vec fd = oracle::fd_gradient(
      [&](const vec& v) { return ntk_kernel(v, xj); }, x);
  CHECK(oracle::vec_rel_err(ntk_kernel_gradient(x, xj), fd) < 1e-5);

  mat B = random_mat(6, 3, 9);
  mat G = ntk_kernel_vec_gradient(x, B);
  for (int j = 0; j < B.rows(); ++j) {
    vec row = B.row(j).transpose();
    CHECK(oracle::vec_rel_err(G.row(j).transpose(),
                              ntk_kernel_gradient(x, row)) < 1e-12);
  }
  vec kv = ntk_kernel_vec(x, B);
  for (int j = 0; j < B.rows(); ++j)
    CHECK(kv(j) == ntk_kernel(x, B.row(j).transpose()));
}

TEST_CASE("kernel ridge fit: residual and prediction") {
  mat X = random_mat(20, 3, 11);
  vec y(20);
  for (int i = 0; i < 20; ++i) y(i) = i % 2 == 0 ? 1.0 : -1.0;
  ntk_model m = ntk_fit(X, y, 0.1);
  mat K = ntk_gram(X, X);
  vec resid = (K + 0.1 * mat::Identity(20, 20)) * m.w - y;
  CHECK(resid.norm() < 1e-9);
  // score of anchor i is k(x_i, X) . w
  vec s0 = ntk_kernel_vec(X.row(0).transpose(), X);
  CHECK(m.score(X.row(0).transpose()) == doctest::Approx(s0.dot(m.w)).epsilon(1e-14));
  // model gradient against finite differences
  vec x = random_vec(3, 12);
  vec fd = oracle::fd_gradient([&](const vec& v) { return m.score(v); }, x);
  CHECK(oracle::vec_rel_err(m.input_gradient(x), fd) < 1e-5);
  CHECK_THROWS_AS(ntk_fit(X, y, 0.0), config_error);
  CHECK_THROWS_AS(ntk_fit(X, y, -1.0), config_error);
}

TEST_CASE("spectral norm: matches dense svd") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    mat M = random_mat(6, 4, 100 + s);
    CHECK(spectral_norm(M) ==
          doctest::Approx(oracle::svd_spectral_norm(M)).epsilon(1e-10));
  }
  mat D = mat::Zero(3, 3);
  D(0, 0) = 2.0;
  D(1, 1) = -5.0;
  CHECK(spectral_norm(D) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(spectral_norm(mat::Zero(4, 4)) == 0.0);
  CHECK(spectral_norm(mat()) == 0.0);
}

TEST_CASE("vae: encode/decode shapes and positivity") {
  vae_model v = tiny_vae();
  vec x(2);
  x << 1.0, 2.0;
  auto [mu, sigma] = v.encode(x);
  CHECK(mu.size() == 1);
  CHECK(sigma.size() == 1);
  CHECK(mu(0) == 3.0);  // identity encoder hidden, sum head
  CHECK(sigma(0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(sigma(0) > 0.0);

  vec z(1);
  z << 1.5;
  vec xhat = v.decode(z);
  CHECK(xhat.size() == 2);
  CHECK(xhat(0) == 9.0);  // relu(2 * 1.5) * 3
  CHECK(xhat(1) == 0.0);

  mat Z(3, 1);
  Z << -1, 0.5, 2;
  mat Xd = v.decode_batch(Z);
  for (int i = 0; i < 3; ++i)
    CHECK(Xd.row(i).transpose() == v.decode(Z.row(i).transpose()));

  double re = v.recon_error(x);
  vec back = v.decode(mu);
  CHECK(re == doctest::Approx(0.5 * (x - back).squaredNorm()).epsilon(1e-15));
}

TEST_CASE("decoder lipschitz bound: exact product and empirical domination") {
  vae_model v = tiny_vae();
  // ||Wd1||_2 = 2, ||Wd2||_2 = 3
  CHECK(v.lipschitz_upper == doctest::Approx(6.0).epsilon(1e-12));

  // random decoder: no sampled pair may beat the bound
  vae_model r = tiny_vae();
  r.Wd1 = random_mat(8, 3, 21);
  r.Wd2 = random_mat(5, 8, 22);
  r.bd1 = random_vec(8, 23);
  r.bd2 = random_vec(5, 24);
  r.k = 3;
  r.hidden = 8;
  r.lipschitz_upper = decoder_lipschitz_upper(r);
  double emp = oracle::empirical_lipschitz(
      [&](const vec& z) { return r.decode(z); }, 3, 500, 2.0, 77);
  CHECK(emp <= r.lipschitz_upper);
  CHECK(emp > 0.0);
}

TEST_CASE("serialization: byte-stable round trips with identical scores") {
  vec x2 = random_vec(2, 31);

  linear_model lm;
  lm.w = random_vec(2, 30);
  lm.eps = 0.25;
  lm.epochs = 17;
  lm.eta = 0.01;
  std::ostringstream s1;
  save_model(s1, lm);
  std::istringstream in1(s1.str());
  model_variant v1 = load_model(in1);
  REQUIRE(std::holds_alternative<linear_model>(v1));
  const auto& lm2 = std::get<linear_model>(v1);
  CHECK(lm2.w == lm.w);
  CHECK(lm2.eps == lm.eps);
  CHECK(lm2.epochs == lm.epochs);
  CHECK(lm2.eta == lm.eta);
  std::ostringstream s1b;
  save_model(s1b, lm2);
  CHECK(s1.str() == s1b.str());

  mlp_model mm = tiny_mlp();
  mm.W[0](0, 1) = 0.1 + 0.2;  // not exactly representable in short decimal
  mm.eps = 0.1;
  std::ostringstream s2;
  save_model(s2, mm);
  std::istringstream in2(s2.str());
  model_variant v2 = load_model(in2);
  REQUIRE(std::holds_alternative<mlp_model>(v2));
  const auto& mm2 = std::get<mlp_model>(v2);
  CHECK(mm2.score(x2) == mm.score(x2));
  CHECK(mm2.W[0] == mm.W[0]);
  CHECK(mm2.b[1] == mm.b[1]);
  CHECK(mm2.depth == mm.depth);
  CHECK(mm2.width == mm.width);

  mat X = random_mat(9, 2, 33);
  vec y(9);
  for (int i = 0; i < 9; ++i) y(i) = i % 3 == 0 ? 1.0 : -1.0;
  ntk_model nm = ntk_fit(X, y, 0.1);
  nm.eps = 0.05;
  std::ostringstream s3;
  save_model(s3, nm);
  std::istringstream in3(s3.str());
  model_variant v3 = load_model(in3);
  REQUIRE(std::holds_alternative<ntk_model>(v3));
  const auto& nm2 = std::get<ntk_model>(v3);
  CHECK(nm2.score(x2) == nm.score(x2));
  CHECK(nm2.X_train == nm.X_train);
  CHECK(nm2.y_train == nm.y_train);
  CHECK(nm2.w == nm.w);
  CHECK(nm2.beta == nm.beta);

  vae_model vm = tiny_vae();
  vm.val_recon_mean = 0.123;
  vm.val_recon_std = 0.456;
  std::ostringstream s4;
  save_model(s4, vm);
  std::istringstream in4(s4.str());
  model_variant v4 = load_model(in4);
  REQUIRE(std::holds_alternative<vae_model>(v4));
  const auto& vm2 = std::get<vae_model>(v4);
  vec z(1);
  z << 0.7;
  CHECK(vm2.decode(z) == vm.decode(z));
  CHECK(vm2.lipschitz_upper == vm.lipschitz_upper);
  CHECK(vm2.val_recon_mean == vm.val_recon_mean);
  CHECK(vm2.val_recon_std == vm.val_recon_std);
  CHECK(vm2.k == vm.k);
  CHECK(vm2.hidden == vm.hidden);
}

TEST_CASE("serialization: corrupt input diagnostics") {
  std::istringstream junk("not-a-model 1\n");
  CHECK_THROWS_AS(load_model(junk), io_error);
  std::istringstream unknown("rlab-model 1\nkind gizmo\nend\n");
  CHECK_THROWS_AS(load_model(unknown), io_error);
  std::istringstream truncated("rlab-model 1\nkind linear\n");
  CHECK_THROWS_AS(load_model(truncated), io_error);
  CHECK_THROWS_AS(load_model_file("no_such_model_file.txt"), io_error);
}

TEST_CASE("model variant file round trip and predictor view") {
  linear_model lm;
  lm.w = random_vec(3, 40);
  std::string path = "test_models_tmp.model";
  save_model_file(path, model_variant(lm));
  model_variant v = load_model_file(path);
  const predictor& p = as_predictor(v);
  CHECK(p.family() == "linear");
  vec x = random_vec(3, 41);
  CHECK(p.score(x) == lm.score(x));
  std::remove(path.c_str());

  model_variant vv = tiny_vae();
  CHECK_THROWS_AS(as_predictor(vv), config_error);
}
