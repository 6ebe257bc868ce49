#pragma once

#include <cstdint>
#include <ostream>

#include "rlab/dataset.hpp"
#include "rlab/model.hpp"

namespace rlab {

struct train_config {
  int epochs = 0;              // required > 0
  double learning_rate = 0.0;  // required > 0
  double eps_train = 0.0;      // l_inf training perturbation budget, 0 disables
  std::uint64_t seed = 0;
  int pgd_steps = 10;          // inner attack steps per epoch (mlp only)
  double pgd_step_size = 0.0;  // 0 -> 2.5 * eps_train / pgd_steps
};

// Full-batch gradient descent on the logistic loss of the worst-case l_inf
// perturbation, which for a bias-free linear scorer has the closed form
// margin y*w'x - eps*||w||_1.  Starts from w = 0, runs exactly cfg.epochs
// steps.  Optional runlog receives one "epoch <k> loss <v> eps_train <e>"
// line per epoch.
linear_model train_linear(const dataset& ds, const train_config& cfg,
                          std::ostream* runlog = nullptr);

// He-initialised ReLU network weights (zero biases) for a given seed; the
// starting point of train_mlp, exposed so callers can reproduce it.
mlp_model make_mlp_initial(int d, int depth, int width, std::uint64_t seed);

// Adversarial training: each epoch builds a PGD batch (random start in the
// l_inf ball, signed-gradient steps, projection) and takes one full-batch
// descent step on the perturbed inputs.  eps_train == 0 skips the attack
// entirely and reduces to plain training on ds.X.
mlp_model train_mlp(const dataset& ds, const train_config& cfg, int depth,
                    int width, std::ostream* runlog = nullptr);

// One signed-gradient ascent step on the per-sample logistic loss:
// row i becomes X.row(i) + eps * sign(d loss_i / d x).
mat fgsm_perturb(const predictor& m, const mat& X, const vec& y, double eps);

// Kernel ridge fit on the given anchors; eps > 0 first fits on X, moves each
// anchor by an FGSM step against that fit (or against *reference when given),
// and refits on the perturbed anchors.
ntk_model train_ntk(const mat& X, const vec& y, double beta, double eps,
                    const predictor* reference = nullptr);

// Gaussian-decoder variational autoencoder trained by full-batch gradient
// descent with the reparameterisation trick.  k <= 0 picks max(2, d/2).
// A val_fraction holdout (never trained on) provides the stored
// reconstruction-error statistics.
vae_model train_vae(const dataset& ds, int k, int epochs, double eta,
                    std::uint64_t seed, double val_fraction = 0.2,
                    std::ostream* runlog = nullptr);

}  // namespace rlab
