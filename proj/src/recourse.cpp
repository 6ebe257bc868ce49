#include "rlab/recourse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rlab/rng.hpp"

namespace rlab {

const char* method_name(method_kind m) {
  switch (m) {
    case method_kind::scfe: return "scfe";
    case method_kind::gsm: return "gsm";
    case method_kind::cchvae: return "cchvae";
  }
  throw config_error("method_name: bad enum value");
}

method_kind method_from_name(const std::string& name) {
  if (name == "scfe") return method_kind::scfe;
  if (name == "gsm") return method_kind::gsm;
  if (name == "cchvae") return method_kind::cchvae;
  throw config_error("unknown recourse method '" + name +
                     "' (expected scfe, gsm, or cchvae)");
}

namespace {

void require_negative(const predictor& m, const vec& x, const char* who) {
  if (label_of(m.score(x)) != -1)
    throw data_error(std::string(who) +
                     ": instance is already labeled +1; recourse is only "
                     "sought for negatively predicted instances");
}

}  // namespace

vec scfe_closed_form_zeta(const vec& w, const vec& x, double lambda,
                          double target) {
  if (!(lambda > 0.0))
    throw config_error("scfe_closed_form: lambda must be > 0");
  double wn2 = w.squaredNorm();
  if (wn2 == 0.0) throw data_error("scfe_closed_form: zero weight vector");
  return ((target - w.dot(x)) / (lambda + wn2)) * w;
}

recourse_outcome scfe_closed_form(const linear_model& m, const vec& x,
                                  double lambda, double target) {
  vec zeta = scfe_closed_form_zeta(m.w, x, lambda, target);
  recourse_outcome out;
  out.method = method_kind::scfe;
  out.x = x;
  out.x_cf = x + zeta;
  out.found = true;
  out.valid = label_of(m.score(out.x_cf)) == 1;
  out.cost = zeta.norm();
  out.iterations = 0;
  out.final_lambda = lambda;
  return out;
}

recourse_outcome scfe_search(const predictor& m, const vec& x,
                             const scfe_params& p) {
  if (!(p.lambda_init > 0.0))
    throw config_error("scfe_search: lambda_init must be > 0");
  if (!(p.lambda_decay > 0.0 && p.lambda_decay < 1.0))
    throw config_error("scfe_search: lambda_decay must be in (0, 1)");
  if (p.lambda_rounds <= 0 || p.inner_steps <= 0)
    throw config_error("scfe_search: lambda_rounds and inner_steps must be > 0");
  if (!(p.step_size > 0.0))
    throw config_error("scfe_search: step_size must be > 0");
  require_negative(m, x, "scfe_search");

  recourse_outcome out;
  out.method = method_kind::scfe;
  out.x = x;

  vec xp = x;
  double lambda = p.lambda_init;
  for (int round = 1; round <= p.lambda_rounds; ++round) {
    for (int step = 1; step <= p.inner_steps; ++step) {
      double s = m.score(xp);
      vec g = 2.0 * (s - p.target) * m.input_gradient(xp) +
              2.0 * lambda * (xp - x);
      xp -= p.step_size * g;
      if (!xp.allFinite())
        throw numeric_error("scfe_search: non-finite objective at round " +
                            std::to_string(round) + " step " +
                            std::to_string(step));
    }
    if (label_of(m.score(xp)) == 1) {
      out.x_cf = xp;
      out.found = true;
      out.valid = true;
      out.cost = (xp - x).norm();
      out.iterations = static_cast<long long>(round) * p.inner_steps;
      out.final_lambda = lambda;
      return out;
    }
    lambda *= p.lambda_decay;
  }
  out.budget_exhausted = true;
  out.iterations = static_cast<long long>(p.lambda_rounds) * p.inner_steps;
  out.final_lambda = lambda;
  return out;
}

namespace {

// drop coordinates of the move, cheapest first, as long as the result stays
// on the positive side
vec sparsify_toward(const predictor& m, const vec& x, vec cand) {
  vec delta = cand - x;
  std::vector<int> order(delta.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(delta(a)) < std::abs(delta(b));
  });
  for (int j : order) {
    if (delta(j) == 0.0) continue;
    double saved = cand(j);
    cand(j) = x(j);
    if (label_of(m.score(cand)) != 1) cand(j) = saved;
  }
  return cand;
}

}  // namespace

recourse_outcome gsm_search(const predictor& m, const vec& x,
                            const gsm_params& p) {
  if (!(p.r0 > 0.0)) throw config_error("gsm_search: r0 must be > 0");
  if (!(p.growth > 1.0)) throw config_error("gsm_search: growth must be > 1");
  if (p.samples_per_shell <= 0 || p.max_shells <= 0)
    throw config_error("gsm_search: sample and shell counts must be > 0");
  if (!(p.gamma >= 0.0)) throw config_error("gsm_search: gamma must be >= 0");
  require_negative(m, x, "gsm_search");

  recourse_outcome out;
  out.method = method_kind::gsm;
  out.x = x;

  const int d = static_cast<int>(x.size());
  rng r(p.seed);
  double lo = 0.0, hi = p.r0;
  for (int shell = 1; shell <= p.max_shells; ++shell) {
    bool any = false;
    double best_cost = 0.0;
    vec best;
    for (int i = 0; i < p.samples_per_shell; ++i) {
      vec cand = x + r.shell(d, lo, hi);
      if (label_of(m.score(cand)) == 1) {
        double c = (cand - x).norm();
        if (!any || c < best_cost) {
          any = true;
          best_cost = c;
          best = cand;
        }
      }
    }
    if (any) {
      if (p.gamma > 0.0) best = sparsify_toward(m, x, std::move(best));
      out.x_cf = best;
      out.found = true;
      out.valid = true;
      out.cost = (best - x).norm();
      out.iterations = shell;
      return out;
    }
    lo = hi;
    hi *= p.growth;
  }
  out.budget_exhausted = true;
  out.iterations = p.max_shells;
  return out;
}

recourse_outcome cchvae_search(const predictor& m, const vae_model& vae,
                               const vec& x, const cchvae_params& p) {
  if (!(p.r0 > 0.0)) throw config_error("cchvae_search: r0 must be > 0");
  if (!(p.growth > 1.0))
    throw config_error("cchvae_search: growth must be > 1");
  if (p.samples_per_step <= 0 || p.max_steps <= 0)
    throw config_error("cchvae_search: sample and step counts must be > 0");
  if (p.norm_p != 2)
    throw config_error("cchvae_search: only norm_p = 2 is supported");
  if (vae.dim() != static_cast<int>(x.size()) || m.dim() != vae.dim())
    throw data_error("cchvae_search: model/autoencoder/input dimension mismatch");
  require_negative(m, x, "cchvae_search");

  recourse_outcome out;
  out.method = method_kind::cchvae;
  out.x = x;

  rng r(p.seed);
  vec z0 = vae.encode(x).first;
  double radius = p.r0;
  for (int step = 1; step <= p.max_steps; ++step) {
    mat Z(p.samples_per_step, vae.k);
    for (int i = 0; i < p.samples_per_step; ++i)
      Z.row(i) = (z0 + r.ball(vae.k, radius)).transpose();
    mat C = vae.decode_batch(Z);
    bool any = false;
    double best_cost = 0.0;
    vec best;
    for (int i = 0; i < C.rows(); ++i) {
      vec cand = C.row(i).transpose();
      if (label_of(m.score(cand)) == 1) {
        double c = (cand - x).norm();
        if (!any || c < best_cost) {
          any = true;
          best_cost = c;
          best = cand;
        }
      }
    }
    if (any) {
      out.x_cf = best;
      out.found = true;
      out.valid = true;
      out.cost = best_cost;
      out.iterations = step;
      out.latent_radius = radius;
      return out;
    }
    radius *= p.growth;
  }
  out.budget_exhausted = true;
  out.iterations = p.max_steps;
  return out;
}

}  // namespace rlab
