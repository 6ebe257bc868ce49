#include "rlab/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace rlab {

namespace {
constexpr double k_pi = std::numbers::pi;

void check_dim(int got, int want, const char* who) {
  if (got != want)
    throw data_error(std::string(who) + ": dimension mismatch, got " +
                     std::to_string(got) + ", model expects " + std::to_string(want));
}
}  // namespace

prediction predict(const predictor& m, const vec& x) {
  double s = m.score(x);
  return {s, sigmoid(s), label_of(s)};
}

// ---- linear ----

double linear_model::score(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "linear_model::score");
  return w.dot(x);
}

vec linear_model::input_gradient(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "linear_model::input_gradient");
  return w;
}

// ---- mlp ----

double mlp_model::score(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "mlp_model::score");
  vec h = x;
  for (size_t l = 0; l + 1 < W.size(); ++l)
    h = ((W[l] * h + b[l]).array().max(0.0)).matrix();
  return (W.back() * h + b.back())(0);
}

vec mlp_model::scores(const mat& X) const {
  check_dim(static_cast<int>(X.cols()), dim(), "mlp_model::scores");
  mat H = X;
  for (size_t l = 0; l + 1 < W.size(); ++l)
    H = ((H * W[l].transpose()).rowwise() + b[l].transpose()).array().max(0.0).matrix();
  return (H * W.back().transpose()).col(0).array() + b.back()(0);
}

vec mlp_model::input_gradient(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "mlp_model::input_gradient");
  // forward, keeping pre-activations; ReLU subgradient at 0 is 0
  std::vector<vec> pre(W.size());
  vec h = x;
  for (size_t l = 0; l + 1 < W.size(); ++l) {
    pre[l] = W[l] * h + b[l];
    h = pre[l].array().max(0.0).matrix();
  }
  vec g = W.back().row(0).transpose();
  for (size_t l = W.size() - 1; l-- > 0;) {
    g = (g.array() * (pre[l].array() > 0.0).cast<double>()).matrix();
    g = W[l].transpose() * g;
  }
  return g;
}

// ---- ntk kernel ----

namespace {
void check_nonzero(double norm, const char* who) {
  if (norm == 0.0)
    throw numeric_error(std::string(who) + ": zero-norm input, kernel undefined");
}
}  // namespace

double ntk_kernel(const vec& xi, const vec& xj) {
  double ni = xi.norm(), nj = xj.norm();
  check_nonzero(ni, "ntk_kernel");
  check_nonzero(nj, "ntk_kernel");
  double dot = xi.dot(xj);
  double u = std::clamp(dot / (ni * nj), k_ntk_clamp - 1.0, 1.0 - k_ntk_clamp);
  return dot * (k_pi - std::acos(u)) / (2.0 * k_pi);
}

vec ntk_kernel_vec(const vec& x, const mat& B) {
  double nx = x.norm();
  check_nonzero(nx, "ntk_kernel_vec");
  vec nb = B.rowwise().norm();
  for (int i = 0; i < nb.size(); ++i) check_nonzero(nb(i), "ntk_kernel_vec(anchor)");
  vec dot = B * x;
  vec out(B.rows());
  for (int i = 0; i < B.rows(); ++i) {
    double u = std::clamp(dot(i) / (nx * nb(i)), k_ntk_clamp - 1.0, 1.0 - k_ntk_clamp);
    out(i) = dot(i) * (k_pi - std::acos(u)) / (2.0 * k_pi);
  }
  return out;
}

mat ntk_kernel_vec_gradient(const vec& x, const mat& B) {
  double nx = x.norm();
  check_nonzero(nx, "ntk_kernel_vec_gradient");
  vec nb = B.rowwise().norm();
  for (int i = 0; i < nb.size(); ++i)
    check_nonzero(nb(i), "ntk_kernel_vec_gradient(anchor)");
  vec dot = B * x;
  mat G(B.rows(), B.cols());
  for (int i = 0; i < B.rows(); ++i) {
    double u = std::clamp(dot(i) / (nx * nb(i)), k_ntk_clamp - 1.0, 1.0 - k_ntk_clamp);
    double th = std::acos(u);
    // d u / d x = b/(|x||b|) - u x/|x|^2 (with u held at its clamped value)
    vec du = B.row(i).transpose() / (nx * nb(i)) - (u / (nx * nx)) * x;
    G.row(i) = ((k_pi - th) / (2.0 * k_pi)) * B.row(i) +
               (dot(i) / (2.0 * k_pi * std::sqrt(1.0 - u * u))) * du.transpose();
  }
  return G;
}

vec ntk_kernel_gradient(const vec& x, const vec& xj) {
  mat B = xj.transpose();
  return ntk_kernel_vec_gradient(x, B).row(0).transpose();
}

mat ntk_gram(const mat& A, const mat& B) {
  vec na = A.rowwise().norm(), nb = B.rowwise().norm();
  for (int i = 0; i < na.size(); ++i) check_nonzero(na(i), "ntk_gram");
  for (int i = 0; i < nb.size(); ++i) check_nonzero(nb(i), "ntk_gram");
  mat D = A * B.transpose();
  mat out(A.rows(), B.rows());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < B.rows(); ++j) {
      double u = std::clamp(D(i, j) / (na(i) * nb(j)), k_ntk_clamp - 1.0,
                            1.0 - k_ntk_clamp);
      out(i, j) = D(i, j) * (k_pi - std::acos(u)) / (2.0 * k_pi);
    }
  return out;
}

ntk_model ntk_fit(const mat& X, const vec& y, double beta) {
  if (!(beta > 0.0)) throw config_error("ntk_fit: beta must be > 0");
  if (X.rows() != y.size()) throw data_error("ntk_fit: row/label count mismatch");
  mat K = ntk_gram(X, X);
  mat A = K + beta * mat::Identity(K.rows(), K.cols());
  vec w = A.ldlt().solve(y);
  double resid = (A * w - y).norm();
  if (!(resid < 1e-10 * std::max(y.norm(), 1e-300)))
    throw numeric_error("ntk_fit: solver residual " + g17(resid) + " too large");
  ntk_model m;
  m.X_train = X;
  m.y_train = y;
  m.w = w;
  m.beta = beta;
  return m;
}

double ntk_model::score(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "ntk_model::score");
  return ntk_kernel_vec(x, X_train).dot(w);
}

vec ntk_model::input_gradient(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "ntk_model::input_gradient");
  return ntk_kernel_vec_gradient(x, X_train).transpose() * w;
}

// ---- vae ----

std::pair<vec, vec> vae_model::encode(const vec& x) const {
  check_dim(static_cast<int>(x.size()), dim(), "vae_model::encode");
  vec h = ((We1 * x + be1).array().max(0.0)).matrix();
  vec mu = Wmu * h + bmu;
  vec lv = Wlv * h + blv;
  return {mu, (0.5 * lv.array()).exp().matrix()};
}

vec vae_model::decode(const vec& z) const {
  check_dim(static_cast<int>(z.size()), k, "vae_model::decode");
  vec h = ((Wd1 * z + bd1).array().max(0.0)).matrix();
  return Wd2 * h + bd2;
}

mat vae_model::decode_batch(const mat& Z) const {
  check_dim(static_cast<int>(Z.cols()), k, "vae_model::decode_batch");
  mat H = ((Z * Wd1.transpose()).rowwise() + bd1.transpose()).array().max(0.0).matrix();
  return ((H * Wd2.transpose()).rowwise() + bd2.transpose());
}

double vae_model::recon_error(const vec& x) const {
  vec mu = encode(x).first;
  return 0.5 * (x - decode(mu)).squaredNorm();
}

double spectral_norm(const mat& M, double tol, int max_iters) {
  if (M.size() == 0) return 0.0;
  mat B = M.transpose() * M;
  vec v = vec::Ones(M.cols());
  v /= v.norm();
  double prev = 0.0, nv = 0.0;
  for (int i = 0; i < max_iters; ++i) {
    vec v2 = B * v;
    nv = v2.norm();
    if (nv == 0.0) return 0.0;
    v = v2 / nv;
    if (std::abs(nv - prev) <= tol * nv) break;
    prev = nv;
  }
  return std::sqrt(nv);
}

double decoder_lipschitz_upper(const vae_model& v) {
  if (!v.Wd1.allFinite() || !v.Wd2.allFinite())
    throw numeric_error("decoder_lipschitz_upper: non-finite decoder weights");
  return spectral_norm(v.Wd1) * spectral_norm(v.Wd2);
}

// ---- serialization ----

namespace {

std::string hexf(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void write_vec(std::ostream& out, const char* key, const vec& v) {
  out << key << ' ' << v.size();
  for (int i = 0; i < v.size(); ++i) out << ' ' << hexf(v(i));
  out << '\n';
}

void write_mat(std::ostream& out, const char* key, const mat& m) {
  out << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out << (j ? " " : "") << hexf(m(i, j));
    out << '\n';
  }
}

struct reader {
  std::istream& in;
  std::string next_token() {
    std::string t;
    if (!(in >> t)) throw io_error("model file truncated");
    return t;
  }
  void expect(const std::string& key) {
    std::string t = next_token();
    if (t != key) throw io_error("model file: expected '" + key + "', got '" + t + "'");
  }
  double num() {
    std::string t = next_token();
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0')
      throw io_error("model file: bad numeric token '" + t + "'");
    return v;
  }
  long long integer() { return static_cast<long long>(num()); }
  vec read_vec(const std::string& key) {
    expect(key);
    long long n = integer();
    vec v(n);
    for (long long i = 0; i < n; ++i) v(i) = num();
    return v;
  }
  mat read_mat(const std::string& key) {
    expect(key);
    long long r = integer(), c = integer();
    mat m(r, c);
    for (long long i = 0; i < r; ++i)
      for (long long j = 0; j < c; ++j) m(i, j) = num();
    return m;
  }
};

void write_header(std::ostream& out, const char* kind) {
  out << "rlab-model 1\nkind " << kind << '\n';
}

}  // namespace

void save_model(std::ostream& out, const linear_model& m) {
  write_header(out, "linear");
  out << "eps_train " << hexf(m.eps) << "\nepochs " << m.epochs << "\neta "
      << hexf(m.eta) << '\n';
  write_vec(out, "w", m.w);
  out << "end\n";
}

void save_model(std::ostream& out, const mlp_model& m) {
  write_header(out, "mlp");
  out << "eps_train " << hexf(m.eps) << "\ndepth " << m.depth << "\nwidth "
      << m.width << "\nlayers " << m.W.size() << '\n';
  for (size_t l = 0; l < m.W.size(); ++l) {
    write_mat(out, ("W" + std::to_string(l)).c_str(), m.W[l]);
    write_vec(out, ("b" + std::to_string(l)).c_str(), m.b[l]);
  }
  out << "end\n";
}

void save_model(std::ostream& out, const ntk_model& m) {
  write_header(out, "ntk");
  out << "eps_train " << hexf(m.eps) << "\nbeta " << hexf(m.beta) << '\n';
  write_mat(out, "X", m.X_train);
  write_vec(out, "y", m.y_train);
  write_vec(out, "w", m.w);
  out << "end\n";
}

void save_model(std::ostream& out, const vae_model& m) {
  write_header(out, "vae");
  out << "k " << m.k << "\nhidden " << m.hidden << "\nlipschitz_upper "
      << hexf(m.lipschitz_upper) << "\nval_recon_mean " << hexf(m.val_recon_mean)
      << "\nval_recon_std " << hexf(m.val_recon_std) << '\n';
  write_mat(out, "We1", m.We1);
  write_vec(out, "be1", m.be1);
  write_mat(out, "Wmu", m.Wmu);
  write_vec(out, "bmu", m.bmu);
  write_mat(out, "Wlv", m.Wlv);
  write_vec(out, "blv", m.blv);
  write_mat(out, "Wd1", m.Wd1);
  write_vec(out, "bd1", m.bd1);
  write_mat(out, "Wd2", m.Wd2);
  write_vec(out, "bd2", m.bd2);
  out << "end\n";
}

model_variant load_model(std::istream& in) {
  reader r{in};
  r.expect("rlab-model");
  if (r.integer() != 1) throw io_error("model file: unsupported version");
  r.expect("kind");
  std::string kind = r.next_token();
  if (kind == "linear") {
    linear_model m;
    r.expect("eps_train");
    m.eps = r.num();
    r.expect("epochs");
    m.epochs = static_cast<int>(r.integer());
    r.expect("eta");
    m.eta = r.num();
    m.w = r.read_vec("w");
    r.expect("end");
    return m;
  }
  if (kind == "mlp") {
    mlp_model m;
    r.expect("eps_train");
    m.eps = r.num();
    r.expect("depth");
    m.depth = static_cast<int>(r.integer());
    r.expect("width");
    m.width = static_cast<int>(r.integer());
    r.expect("layers");
    long long nl = r.integer();
    for (long long l = 0; l < nl; ++l) {
      m.W.push_back(r.read_mat("W" + std::to_string(l)));
      m.b.push_back(r.read_vec("b" + std::to_string(l)));
    }
    r.expect("end");
    return m;
  }
  if (kind == "ntk") {
    ntk_model m;
    r.expect("eps_train");
    m.eps = r.num();
    r.expect("beta");
    m.beta = r.num();
    m.X_train = r.read_mat("X");
    m.y_train = r.read_vec("y");
    m.w = r.read_vec("w");
    r.expect("end");
    return m;
  }
  if (kind == "vae") {
    vae_model m;
    r.expect("k");
    m.k = static_cast<int>(r.integer());
    r.expect("hidden");
    m.hidden = static_cast<int>(r.integer());
    r.expect("lipschitz_upper");
    m.lipschitz_upper = r.num();
    r.expect("val_recon_mean");
    m.val_recon_mean = r.num();
    r.expect("val_recon_std");
    m.val_recon_std = r.num();
    m.We1 = r.read_mat("We1");
    m.be1 = r.read_vec("be1");
    m.Wmu = r.read_mat("Wmu");
    m.bmu = r.read_vec("bmu");
    m.Wlv = r.read_mat("Wlv");
    m.blv = r.read_vec("blv");
    m.Wd1 = r.read_mat("Wd1");
    m.bd1 = r.read_vec("bd1");
    m.Wd2 = r.read_mat("Wd2");
    m.bd2 = r.read_vec("bd2");
    r.expect("end");
    return m;
  }
  throw io_error("model file: unknown kind '" + kind + "'");
}

model_variant load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open model file: " + path);
  return load_model(in);
}

void save_model_file(const std::string& path, const model_variant& m) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write model file: " + path);
  std::visit([&](const auto& v) { save_model(out, v); }, m);
  if (!out) throw io_error("error writing model file: " + path);
}

const predictor& as_predictor(const model_variant& m) {
  if (const auto* p = std::get_if<linear_model>(&m)) return *p;
  if (const auto* p = std::get_if<mlp_model>(&m)) return *p;
  if (const auto* p = std::get_if<ntk_model>(&m)) return *p;
  throw config_error("model file holds a vae, which is not a predictor");
}

}  // namespace rlab
