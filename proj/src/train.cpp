#include "rlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rlab/rng.hpp"

namespace rlab {

namespace {

constexpr std::uint64_t k_tag_mlp_init = 0x6d6c7069;   // weight init stream
constexpr std::uint64_t k_tag_mlp_pgd = 0x6d6c7067;    // attack stream
constexpr std::uint64_t k_tag_vae_init = 0x76616569;
constexpr std::uint64_t k_tag_vae_noise = 0x7661656e;
constexpr std::uint64_t k_tag_vae_split = 0x76616573;

void check_common(const dataset& ds, const train_config& cfg, const char* who) {
  if (ds.n() == 0) throw data_error(std::string(who) + ": empty dataset");
  if (cfg.epochs <= 0) throw config_error(std::string(who) + ": epochs must be > 0");
  if (!(cfg.learning_rate > 0.0))
    throw config_error(std::string(who) + ": learning_rate must be > 0");
  if (!(cfg.eps_train >= 0.0))
    throw config_error(std::string(who) + ": eps_train must be >= 0");
}

void log_epoch(std::ostream* runlog, int epoch, double loss, double eps) {
  if (runlog)
    *runlog << "epoch " << epoch << " loss " << g17(loss) << " eps_train "
            << g17(eps) << '\n';
}

}  // namespace

linear_model train_linear(const dataset& ds, const train_config& cfg,
                          std::ostream* runlog) {
  check_common(ds, cfg, "train_linear");
  const mat& X = ds.X;
  const vec& y = ds.y;
  const double n = static_cast<double>(ds.n());
  const double eps = cfg.eps_train;

  vec w = vec::Zero(ds.d());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    vec sgnw = w.unaryExpr([](double v) { return sgn(v); });
    vec z = (y.array() * (X * w).array()) - eps * w.lpNorm<1>();
    vec coef = z.unaryExpr([](double v) { return sigmoid(v) - 1.0; });
    vec grad = X.transpose() * (coef.array() * y.array()).matrix() / n -
               eps * coef.mean() * sgnw;
    w -= cfg.learning_rate * grad;
    if (!w.allFinite())
      throw numeric_error("train_linear: non-finite weights at epoch " +
                          std::to_string(epoch));
    double loss = z.unaryExpr([](double v) { return softplus(-v); }).mean();
    log_epoch(runlog, epoch, loss, eps);
  }

  linear_model m;
  m.w = w;
  m.eps = eps;
  m.epochs = cfg.epochs;
  m.eta = cfg.learning_rate;
  return m;
}

// ---- mlp ----

namespace {

struct mlp_cache {
  std::vector<mat> A;  // activations, A[0] = input
  std::vector<mat> Z;  // hidden pre-activations
  vec s;               // output scores
};

mlp_cache mlp_forward(const mlp_model& m, const mat& X) {
  mlp_cache c;
  size_t hidden = m.W.size() - 1;
  c.A.resize(hidden + 1);
  c.Z.resize(hidden);
  c.A[0] = X;
  for (size_t l = 0; l < hidden; ++l) {
    c.Z[l] = ((c.A[l] * m.W[l].transpose()).rowwise() + m.b[l].transpose());
    c.A[l + 1] = c.Z[l].array().max(0.0).matrix();
  }
  c.s = (c.A[hidden] * m.W[hidden].transpose()).col(0).array() + m.b[hidden](0);
  return c;
}

struct mlp_grads {
  std::vector<mat> W;
  std::vector<vec> b;
  double loss = 0.0;
};

// delta0 is the per-row d(loss)/d(score) seed; returns layer-0 delta so the
// caller can chain to the input if needed.
mat mlp_backward(const mlp_model& m, const mlp_cache& c, const vec& delta0,
                 mlp_grads* out) {
  size_t hidden = m.W.size() - 1;
  mat delta = delta0;  // n x 1
  if (out) {
    out->W.resize(m.W.size());
    out->b.resize(m.b.size());
    out->W[hidden] = delta.transpose() * c.A[hidden];
    out->b[hidden] = delta.colwise().sum().transpose();
  }
  for (size_t l = hidden; l-- > 0;) {
    mat d = ((delta * m.W[l + 1]).array() *
             (c.Z[l].array() > 0.0).cast<double>())
                .matrix();
    if (out) {
      out->W[l] = d.transpose() * c.A[l];
      out->b[l] = d.colwise().sum().transpose();
    }
    delta = d;
  }
  return delta * m.W[0];  // n x d input gradient
}

vec loss_score_seed(const vec& s, const vec& y, double inv_n) {
  return ((s.array() * y.array()).unaryExpr([](double v) {
            return sigmoid(v) - 1.0;
          }) * y.array() * inv_n)
      .matrix();
}

mat pgd_batch(const mlp_model& m, const mat& X, const vec& y, double eps,
              int steps, double alpha, rng& r) {
  mat Xa = X;
  for (int i = 0; i < Xa.rows(); ++i)
    for (int j = 0; j < Xa.cols(); ++j) Xa(i, j) += r.uniform(-eps, eps);
  Xa = Xa.array().max(X.array() - eps).min(X.array() + eps).matrix();
  for (int step = 0; step < steps; ++step) {
    mlp_cache c = mlp_forward(m, Xa);
    mat G = mlp_backward(m, c, loss_score_seed(c.s, y, 1.0), nullptr);
    Xa += alpha * G.unaryExpr([](double v) { return sgn(v); });
    Xa = Xa.array().max(X.array() - eps).min(X.array() + eps).matrix();
  }
  return Xa;
}

}  // namespace

mlp_model make_mlp_initial(int d, int depth, int width, std::uint64_t seed) {
  if (d <= 0) throw config_error("make_mlp_initial: d must be > 0");
  if (depth <= 0) throw config_error("make_mlp_initial: depth must be > 0");
  if (width <= 0) throw config_error("make_mlp_initial: width must be > 0");
  rng r(mix_seed({seed, k_tag_mlp_init}));
  mlp_model m;
  m.depth = depth;
  m.width = width;
  std::vector<int> sizes;
  sizes.push_back(d);
  for (int l = 0; l < depth; ++l) sizes.push_back(width);
  sizes.push_back(1);
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int fan_in = sizes[l], fan_out = sizes[l + 1];
    double scale = std::sqrt(2.0 / fan_in);
    mat W(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) W(i, j) = scale * r.normal();
    m.W.push_back(std::move(W));
    m.b.push_back(vec::Zero(fan_out));
  }
  return m;
}

mlp_model train_mlp(const dataset& ds, const train_config& cfg, int depth,
                    int width, std::ostream* runlog) {
  check_common(ds, cfg, "train_mlp");
  if (cfg.eps_train > 0.0 && cfg.pgd_steps <= 0)
    throw config_error("train_mlp: pgd_steps must be > 0 when eps_train > 0");
  const double eps = cfg.eps_train;
  const double alpha =
      cfg.pgd_step_size > 0.0 ? cfg.pgd_step_size : 2.5 * eps / cfg.pgd_steps;
  const double inv_n = 1.0 / static_cast<double>(ds.n());

  mlp_model m = make_mlp_initial(ds.d(), depth, width, cfg.seed);
  m.eps = eps;
  rng attack(mix_seed({cfg.seed, k_tag_mlp_pgd}));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    mat Xb = eps > 0.0
                 ? pgd_batch(m, ds.X, ds.y, eps, cfg.pgd_steps, alpha, attack)
                 : ds.X;
    mlp_cache c = mlp_forward(m, Xb);
    mlp_grads g;
    mlp_backward(m, c, loss_score_seed(c.s, ds.y, inv_n), &g);
    for (size_t l = 0; l < m.W.size(); ++l) {
      m.W[l] -= cfg.learning_rate * g.W[l];
      m.b[l] -= cfg.learning_rate * g.b[l];
      if (!m.W[l].allFinite() || !m.b[l].allFinite())
        throw numeric_error("train_mlp: non-finite weights at epoch " +
                            std::to_string(epoch));
    }
    double loss = (c.s.array() * ds.y.array())
                      .unaryExpr([](double v) { return softplus(-v); })
                      .mean();
    log_epoch(runlog, epoch, loss, eps);
  }
  return m;
}

mat fgsm_perturb(const predictor& m, const mat& X, const vec& y, double eps) {
  if (X.rows() != y.size())
    throw data_error("fgsm_perturb: row/label count mismatch");
  if (!(eps >= 0.0)) throw config_error("fgsm_perturb: eps must be >= 0");
  mat out = X;
  for (int i = 0; i < X.rows(); ++i) {
    vec x = X.row(i).transpose();
    double coef = (sigmoid(y(i) * m.score(x)) - 1.0) * y(i);
    vec g = coef * m.input_gradient(x);
    for (int j = 0; j < X.cols(); ++j) out(i, j) += eps * sgn(g(j));
  }
  return out;
}

ntk_model train_ntk(const mat& X, const vec& y, double beta, double eps,
                    const predictor* reference) {
  if (!(eps >= 0.0)) throw config_error("train_ntk: eps must be >= 0");
  ntk_model base = ntk_fit(X, y, beta);
  if (eps == 0.0) return base;
  const predictor& attack_model = reference ? *reference : base;
  mat Xa = fgsm_perturb(attack_model, X, y, eps);
  for (int i = 0; i < Xa.rows(); ++i)
    if (Xa.row(i).norm() == 0.0)
      throw numeric_error("train_ntk: adversarial anchor " + std::to_string(i) +
                          " has zero norm");
  ntk_model m = ntk_fit(Xa, y, beta);
  m.eps = eps;
  return m;
}

// ---- vae ----

namespace {

mat he_matrix(rng& r, int rows, int cols, int fan_in) {
  double scale = std::sqrt(2.0 / fan_in);
  mat W(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) W(i, j) = scale * r.normal();
  return W;
}

bool vae_finite(const vae_model& m) {
  return m.We1.allFinite() && m.Wmu.allFinite() && m.Wlv.allFinite() &&
         m.Wd1.allFinite() && m.Wd2.allFinite() && m.be1.allFinite() &&
         m.bmu.allFinite() && m.blv.allFinite() && m.bd1.allFinite() &&
         m.bd2.allFinite();
}

}  // namespace

vae_model train_vae(const dataset& ds, int k, int epochs, double eta,
                    std::uint64_t seed, double val_fraction,
                    std::ostream* runlog) {
  const int n = ds.n(), d = ds.d();
  if (n < 2) throw data_error("train_vae: need at least 2 rows");
  if (epochs <= 0) throw config_error("train_vae: epochs must be > 0");
  if (!(eta > 0.0)) throw config_error("train_vae: eta must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw config_error("train_vae: val_fraction must be in (0, 1)");
  if (k <= 0) k = std::max(2, d / 2);
  const int hidden = 2 * d;

  // holdout split: shuffled indices, first n_val rows are never trained on
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng shuffler(mix_seed({seed, k_tag_vae_split}));
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[shuffler.below(static_cast<std::uint64_t>(i) + 1)]);
  int n_val = static_cast<int>(std::llround(val_fraction * n));
  n_val = std::clamp(n_val, 1, n - 1);
  const int n_tr = n - n_val;
  mat Xv(n_val, d), X(n_tr, d);
  for (int i = 0; i < n_val; ++i) Xv.row(i) = ds.X.row(idx[i]);
  for (int i = 0; i < n_tr; ++i) X.row(i) = ds.X.row(idx[n_val + i]);

  vae_model m;
  m.k = k;
  m.hidden = hidden;
  rng init(mix_seed({seed, k_tag_vae_init}));
  m.We1 = he_matrix(init, hidden, d, d);
  m.be1 = vec::Zero(hidden);
  m.Wmu = he_matrix(init, k, hidden, hidden);
  m.bmu = vec::Zero(k);
  // the log-variance head starts at exactly zero so early sampling noise is
  // unit-scale rather than exp(large) — He init here blows the loss up
  m.Wlv = mat::Zero(k, hidden);
  m.blv = vec::Zero(k);
  m.Wd1 = he_matrix(init, hidden, k, k);
  m.bd1 = vec::Zero(hidden);
  m.Wd2 = he_matrix(init, d, hidden, hidden);
  m.bd2 = vec::Zero(d);

  rng noise(mix_seed({seed, k_tag_vae_noise}));
  const double inv_n = 1.0 / static_cast<double>(n_tr);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    // forward with fresh reparameterisation noise
    mat He_pre = (X * m.We1.transpose()).rowwise() + m.be1.transpose();
    mat H = He_pre.array().max(0.0).matrix();
    mat M = (H * m.Wmu.transpose()).rowwise() + m.bmu.transpose();
    mat LV = (H * m.Wlv.transpose()).rowwise() + m.blv.transpose();
    mat E(n_tr, k);
    for (int i = 0; i < n_tr; ++i)
      for (int j = 0; j < k; ++j) E(i, j) = noise.normal();
    mat S = (0.5 * LV.array()).exp().matrix();
    mat Z = M + S.cwiseProduct(E);
    mat Hd_pre = (Z * m.Wd1.transpose()).rowwise() + m.bd1.transpose();
    mat Hd = Hd_pre.array().max(0.0).matrix();
    mat Xr = (Hd * m.Wd2.transpose()).rowwise() + m.bd2.transpose();

    double recon = 0.5 * (Xr - X).squaredNorm() * inv_n;
    double kl = 0.5 *
                (M.array().square() + LV.array().exp() - 1.0 - LV.array())
                    .sum() *
                inv_n;
    double loss = recon + kl;

    // backward
    mat dXr = (Xr - X) * inv_n;
    mat gWd2 = dXr.transpose() * Hd;
    vec gbd2 = dXr.colwise().sum().transpose();
    mat dHd = ((dXr * m.Wd2).array() * (Hd_pre.array() > 0.0).cast<double>())
                  .matrix();
    mat gWd1 = dHd.transpose() * Z;
    vec gbd1 = dHd.colwise().sum().transpose();
    mat dZ = dHd * m.Wd1;
    mat dM = dZ + M * inv_n;
    mat dLV = dZ.cwiseProduct(S).cwiseProduct(E) * 0.5 +
              0.5 * inv_n * (LV.array().exp() - 1.0).matrix();
    mat gWmu = dM.transpose() * H;
    vec gbmu = dM.colwise().sum().transpose();
    mat gWlv = dLV.transpose() * H;
    vec gblv = dLV.colwise().sum().transpose();
    mat dH = ((dM * m.Wmu + dLV * m.Wlv).array() *
              (He_pre.array() > 0.0).cast<double>())
                 .matrix();
    mat gWe1 = dH.transpose() * X;
    vec gbe1 = dH.colwise().sum().transpose();

    m.We1 -= eta * gWe1;
    m.be1 -= eta * gbe1;
    m.Wmu -= eta * gWmu;
    m.bmu -= eta * gbmu;
    m.Wlv -= eta * gWlv;
    m.blv -= eta * gblv;
    m.Wd1 -= eta * gWd1;
    m.bd1 -= eta * gbd1;
    m.Wd2 -= eta * gWd2;
    m.bd2 -= eta * gbd2;
    if (!vae_finite(m))
      throw numeric_error("train_vae: non-finite weights at epoch " +
                          std::to_string(epoch));
    if (runlog) *runlog << "epoch " << epoch << " loss " << g17(loss) << '\n';
  }

  m.lipschitz_upper = decoder_lipschitz_upper(m);
  vec errs(n_val);
  for (int i = 0; i < n_val; ++i) errs(i) = m.recon_error(Xv.row(i).transpose());
  m.val_recon_mean = errs.mean();
  m.val_recon_std = std::sqrt((errs.array() - m.val_recon_mean).square().mean());
  if (runlog)
    *runlog << "val_recon_mean " << g17(m.val_recon_mean) << " val_recon_std "
            << g17(m.val_recon_std) << '\n';
  return m;
}

}  // namespace rlab
